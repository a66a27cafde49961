#pragma once

#include "streid/fusion.hpp"
#include "streid/observation.hpp"
#include "streid/topology.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace streid {

/// Dense query x gallery appearance similarities.
struct SimilarityMatrix {
  std::vector<std::string> query_ids;
  std::vector<std::string> gallery_ids;
  Eigen::MatrixXd values;

  /// Throws InputError on shape mismatch or non-finite values.
  void validate() const;
};

/// Ranked relevance flags of one query, best match first.
using Relevance = std::vector<bool>;

/// Gallery indices by descending score, ties by ascending image_id. Entries
/// sharing both camera and vehicle with the query are removed.
std::vector<std::size_t> rank_gallery(const Observation& query,
                                      std::span<const Observation> gallery,
                                      std::span<const double> scores);

/// Fraction of queries with a true match within the first k positions.
double cmc(const std::vector<Relevance>& rankings, int k);

double average_precision(const Relevance& ranking);
double mean_average_precision(const std::vector<Relevance>& rankings);

/// Vehicle identity -> fold, for identity-disjoint cross-validation.
struct FoldAssignment {
  int n_folds = 1;
  std::map<std::string, int> fold_of;

  /// Fold of `vehicle_id`, or -1 when the identity was not assigned.
  int fold(const std::string& vehicle_id) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Distinct query identities shuffled with `seed` and dealt round-robin, so
/// fold sizes differ by at most one.
FoldAssignment make_folds(std::span<const Observation> queries, int n_folds, std::uint64_t seed);

/// Query and gallery observations aligned with the rows and columns of a
/// similarity matrix. Holds a pointer to the matrix, which must outlive it.
struct EvalSet {
  std::vector<Observation> queries;
  std::vector<Observation> gallery;
  const SimilarityMatrix* similarity = nullptr;

  double appearance(std::size_t q, std::size_t g) const { return similarity->values(Eigen::Index(q), Eigen::Index(g)); }
};

/// Resolves matrix ids against observations; unknown ids raise InputError.
EvalSet make_eval_set(std::span<const Observation> observations, const SimilarityMatrix& similarity);

enum class MethodKind { appearance_only, product_baseline, fusion };

struct Method {
  MethodKind kind = MethodKind::appearance_only;
  int window = 10;

  std::string label() const;
  /// Accepts "appearance", "product" and "fusion".
  static Method parse(const std::string& name, int window = 10);
};

struct MetricSummary {
  double rank1 = 0.0;
  double rank5 = 0.0;
  double map = 0.0;
};

struct FoldMetrics {
  int fold = 0;
  std::size_t n_queries = 0;
  MetricSummary metrics;
};

struct EvalReport {
  std::string method;
  /// Pooled over every evaluated query.
  std::map<int, double> rank_accuracy;
  double map = 0.0;
  std::vector<FoldMetrics> per_fold;
  MetricSummary fold_mean;
  MetricSummary fold_stdev;
  std::size_t n_queries = 0;
  std::size_t n_skipped = 0;
};

/// Scores of every gallery item for query `q`. Fusion scores are logits,
/// which order identically to the sigmoid output.
Eigen::VectorXd score_query(const Method& method, const EvalSet& data, std::size_t q,
                            const TopologyModel* topology, const FusionModel* model);

/// Ranks and aggregates CMC/mAP. Fusion needs one model per fold; queries of
/// fold f are scored with `fold_models[f]`.
EvalReport evaluate_method(const Method& method, const EvalSet& data,
                           const TopologyModel* topology,
                           std::span<const FusionModel> fold_models,
                           const FoldAssignment& folds,
                           std::vector<int> ks = {1, 5});

struct TrainingPairs {
  std::vector<LabeledInput> pairs;
  /// (query index, gallery index) of each pair.
  std::vector<std::pair<std::size_t, std::size_t>> source;
};

/// Query-gallery pairs whose identities lie outside `held_out_fold`: every
/// positive plus `negative_ratio` sampled negatives per positive.
TrainingPairs make_training_pairs(const EvalSet& data, const TopologyModel& topology,
                                  const FoldAssignment& folds, int held_out_fold, int window,
                                  int negative_ratio, std::uint64_t seed);

/// Human-readable report table.
std::string format_reports(std::span<const EvalReport> reports);

} // namespace streid
