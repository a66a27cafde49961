#pragma once

#include "streid/eval.hpp"
#include "streid/observation.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace streid {

/// Directed road segment between two cameras. Transit times are normal,
/// truncated at zero; `traffic_weight` is the relative choice probability
/// among the edges leaving `from`.
struct RoadEdge {
  int from = 0;
  int to = 0;
  double mean_transit_frames = 1000.0;
  double stdev_frames = 100.0;
  double traffic_weight = 1.0;
};

struct BetaParams {
  double a = 1.0;
  double b = 1.0;

  double mean() const { return a / (a + b); }
};

struct SimConfig {
  int n_cameras = 2;
  /// Identities in the query/gallery split.
  int n_vehicles = 100;
  /// Additional identities whose observations are only used for topology estimation.
  int n_train_vehicles = 100;
  /// Appearance clusters; vehicles of one cluster look alike.
  int n_model_types = 10;
  std::vector<RoadEdge> road_edges;
  Frame frames_horizon = 30000;
  /// Cameras visited per vehicle, inclusive range.
  int min_visits = 2;
  int max_visits = 5;
  BetaParams same_id_similarity{8.0, 2.0};
  BetaParams same_cluster_similarity{6.0, 3.0};
  BetaParams cross_cluster_similarity{2.0, 8.0};
  std::uint64_t seed = 1;

  /// Throws ConfigError; a road graph that is not weakly connected over all
  /// cameras is rejected.
  void validate() const;
};

struct EdgeTruth {
  RoadEdge edge;
  /// Direct traversals of this edge by topology-only identities.
  std::int64_t transitions = 0;
};

struct SimOutput {
  /// Topology-only identities.
  std::vector<Observation> observations;
  /// Query and gallery images of the evaluation identities.
  std::vector<Observation> test_observations;
  SimilarityMatrix similarity;
  std::vector<EdgeTruth> ground_truth;
  std::map<std::string, int> cluster_of;
};

/// Seeded random walks over the road graph plus Beta-distributed appearance
/// similarities. One observation of every evaluation identity becomes its query.
SimOutput simulate(const SimConfig& config);

struct AmbiguityReport {
  std::size_t within_id_samples = 0;
  std::size_t within_cluster_samples = 0;
  std::size_t cross_cluster_samples = 0;
  std::optional<double> within_id_mean;
  /// Same cluster, different identity.
  std::optional<double> within_cluster_mean;
  std::optional<double> cross_cluster_mean;
  /// Queries whose best appearance match is another identity of the same cluster.
  double confusable_top_match_fraction = 0.0;
  /// Set when cluster statistics are empty.
  bool degenerate = false;
};

AmbiguityReport ambiguity_report(const SimOutput& output);

/// 20 cameras on a ring with chords, 400 evaluation identities in 40 clusters.
SimConfig ring_network_config(std::uint64_t seed = 7);

/// Ring network whose edges alternate between heavy and light traffic, so the
/// estimated topology mixes dense and sparse camera pairs.
SimConfig mixed_density_config(std::uint64_t seed = 11);

} // namespace streid
