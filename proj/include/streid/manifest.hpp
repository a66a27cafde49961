#pragma once

#include "streid/dataio.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <string>

namespace streid {

/// Record of one CLI invocation, written as JSON beside its outputs.
class RunManifest {
public:
  explicit RunManifest(std::string subcommand);

  void set_config(Json config) { config_ = std::move(config); }
  void add_seed(const std::string& name, std::uint64_t seed) { seeds_[name] = seed; }
  void add_input(const fs::path& path) { inputs_.push_back(path.string()); }
  /// Records the path and its SHA-256 checksum.
  void add_output(const fs::path& path);

  Json to_json() const;
  void write(const fs::path& path) const;

private:
  std::string subcommand_;
  Json config_ = Json::object();
  std::map<std::string, std::uint64_t> seeds_;
  std::vector<std::string> inputs_;
  std::map<std::string, std::string> checksums_;
  std::chrono::steady_clock::time_point start_;
  std::string started_at_;
};

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);

} // namespace streid
