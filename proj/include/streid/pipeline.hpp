#pragma once

#include "streid/eval.hpp"
#include "streid/fusion.hpp"
#include "streid/topology.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace streid {

/// Everything needed to go from observations to evaluation reports.
struct PipelineConfig {
  int n_cameras = 20;
  HistogramGeometry geometry;
  double alpha = 20.0;
  double beta = 12.0;
  /// When set, every camera pair uses this bandwidth instead of the adaptive law.
  std::optional<double> fixed_sigma;
  int window = 10;
  TrainConfig train;
  int n_folds = 5;
  std::uint64_t fold_seed = 0;

  std::string sigma_label() const;
};

TopologyModel estimate_topology(std::span<const Observation> observations, const PipelineConfig& config);

/// One fusion model per fold, each trained on pairs of the other folds. Fold f
/// uses seed train.seed + f for both pair sampling and initialization.
std::vector<TrainResult> train_folds(const EvalSet& data, const TopologyModel& topology,
                                     const FoldAssignment& folds, int window,
                                     const TrainConfig& config);

struct PipelineResult {
  TopologyModel topology;
  FoldAssignment folds;
  std::vector<TrainResult> fold_models;
  std::vector<EvalReport> reports;
};

/// Topology, fold split, per-fold training (only when fusion is requested)
/// and one report per method.
PipelineResult run_pipeline(std::span<const Observation> train_observations, const EvalSet& data,
                            const PipelineConfig& config, std::span<const MethodKind> methods);

std::vector<FusionModel> models_of(std::span<const TrainResult> results);

/// Grid axes as `key=v1,v2,...` with keys alpha, beta, w and sigma-fixed
/// (numbers or `adaptive`). Returns the cartesian product over `base`.
/// An empty grid is a ConfigError.
std::vector<PipelineConfig> expand_grid(std::span<const std::string> axes, const PipelineConfig& base);

struct SweepRow {
  PipelineConfig config;
  MetricSummary metrics;
};

/// `alpha,beta,sigma,window,rank1,rank5,mAP` with pooled metrics.
std::string sweep_csv(std::span<const SweepRow> rows);

} // namespace streid
