#pragma once

#include "streid/eval.hpp"
#include "streid/fusion.hpp"
#include "streid/observation.hpp"
#include "streid/sim.hpp"
#include "streid/topology.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace streid {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// Observations: CSV with header `image_id,vehicle_id,camera_id,frame`.

std::vector<Observation> parse_observations(std::istream& in, const std::string& source = "<stream>");
std::vector<Observation> load_observations(const fs::path& path);
void save_observations(const fs::path& path, std::span<const Observation> observations);

// Similarity matrices. CSV: `query_id,<gallery ids...>` then one row per query.
// Binary: "STSM", u64 rows, u64 cols, then every query id and every gallery id
// as (u64 byte length, bytes), then rows*cols f64 in row-major order. All
// integers and floats little-endian.

SimilarityMatrix parse_similarity_csv(std::istream& in, const std::string& source = "<stream>");
SimilarityMatrix load_similarity_csv(const fs::path& path);
void save_similarity_csv(const fs::path& path, const SimilarityMatrix& m);

SimilarityMatrix decode_similarity_binary(std::string_view bytes);
std::string encode_similarity_binary(const SimilarityMatrix& m);
SimilarityMatrix load_similarity_binary(const fs::path& path);
void save_similarity_binary(const fs::path& path, const SimilarityMatrix& m);

/// Dispatches on the leading magic bytes.
SimilarityMatrix load_similarity(const fs::path& path);

// Models. Doubles are written in shortest round-trip form.

Json topology_to_json(const TopologyModel& model);
TopologyModel topology_from_json(const Json& j);
void save_topology(const fs::path& path, const TopologyModel& model);
TopologyModel load_topology(const fs::path& path);

Json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);
Json fusion_model_to_json(const FusionModel& model);
FusionModel fusion_model_from_json(const Json& j);
void save_fusion_model(const fs::path& path, const FusionModel& model);
FusionModel load_fusion_model(const fs::path& path);

/// `epoch,mean_loss` rows.
void save_loss_log(const fs::path& path, std::span<const double> trace);

Json folds_to_json(const FoldAssignment& folds);
FoldAssignment folds_from_json(const Json& j);

Json report_to_json(const EvalReport& report);
void save_reports(const fs::path& path, std::span<const EvalReport> reports);

Json sim_config_to_json(const SimConfig& config);
SimConfig sim_config_from_json(const Json& j);
SimConfig load_sim_config(const fs::path& path);
Json ground_truth_to_json(std::span<const EdgeTruth> truth);
Json ambiguity_to_json(const AmbiguityReport& report);

/// Topology identities plus query/gallery images resolved from a similarity matrix.
struct Dataset {
  std::vector<Observation> train_observations;
  std::vector<Observation> query_observations;
  std::vector<Observation> gallery_observations;
  std::optional<SimilarityMatrix> similarity;
};

/// Rejects duplicate image ids across all splits and unresolvable matrix ids.
void validate_dataset(const Dataset& dataset);

Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& j);
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view content);

} // namespace streid
