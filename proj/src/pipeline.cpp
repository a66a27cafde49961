#include "streid/pipeline.hpp"

#include "streid/error.hpp"

#include <charconv>
#include <cstdio>
#include <map>

namespace streid {

std::string PipelineConfig::sigma_label() const {
  if (!fixed_sigma)
    return "adaptive";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", *fixed_sigma);
  return buf;
}

TopologyModel estimate_topology(std::span<const Observation> observations, const PipelineConfig& config) {
  if (config.fixed_sigma)
    return estimate_topology_fixed_sigma(observations, config.geometry, config.n_cameras,
                                         *config.fixed_sigma);
  return estimate_topology(observations, config.geometry, config.n_cameras, config.alpha, config.beta);
}

std::vector<TrainResult> train_folds(const EvalSet& data, const TopologyModel& topology,
                                     const FoldAssignment& folds, int window,
                                     const TrainConfig& config) {
  std::vector<TrainResult> results;
  results.reserve(std::size_t(folds.n_folds));
  for (int f = 0; f < folds.n_folds; ++f) {
    TrainConfig fold_config = config;
    fold_config.seed = config.seed + std::uint64_t(f);
    const auto pairs = make_training_pairs(data, topology, folds, f, window,
                                           fold_config.negative_ratio, fold_config.seed);
    results.push_back(train(pairs.pairs, fold_config, window));
  }
  return results;
}

std::vector<FusionModel> models_of(std::span<const TrainResult> results) {
  std::vector<FusionModel> models;
  models.reserve(results.size());
  for (const auto& r : results)
    models.push_back(r.model);
  return models;
}

PipelineResult run_pipeline(std::span<const Observation> train_observations, const EvalSet& data,
                            const PipelineConfig& config, std::span<const MethodKind> methods) {
  PipelineResult result;
  result.topology = estimate_topology(train_observations, config);
  result.folds = make_folds(data.queries, config.n_folds, config.fold_seed);

  std::vector<FusionModel> models;
  for (auto kind : methods) {
    if (kind == MethodKind::fusion && result.fold_models.empty()) {
      result.fold_models = train_folds(data, result.topology, result.folds, config.window, config.train);
      models = models_of(result.fold_models);
    }
    result.reports.push_back(evaluate_method({kind, config.window}, data, &result.topology,
                                             models, result.folds));
  }
  return result;
}

namespace {

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find(',', pos), text.size());
    if (end > pos)
      out.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  return out;
}

double parse_value(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("grid axis " + key + ": '" + text + "' is not a number");
  return v;
}

} // namespace

std::vector<PipelineConfig> expand_grid(std::span<const std::string> axes, const PipelineConfig& base) {
  if (axes.empty())
    throw ConfigError("empty sweep grid");
  std::vector<PipelineConfig> points{base};
  for (const auto& axis : axes) {
    const auto eq = axis.find('=');
    if (eq == std::string::npos)
      throw ConfigError("grid axis '" + axis + "' must look like key=v1,v2,...");
    const std::string key = axis.substr(0, eq);
    const auto values = split_values(axis.substr(eq + 1));
    if (values.empty())
      throw ConfigError("grid axis '" + key + "' has no values");

    std::vector<PipelineConfig> next;
    for (const auto& p : points) {
      for (const auto& text : values) {
        PipelineConfig c = p;
        if (key == "alpha") {
          c.alpha = parse_value(key, text);
        } else if (key == "beta") {
          c.beta = parse_value(key, text);
        } else if (key == "w" || key == "window") {
          const double w = parse_value(key, text);
          if (w < 0 || w != double(int(w)))
            throw ConfigError("grid axis w: window must be a non-negative integer");
          c.window = int(w);
        } else if (key == "sigma-fixed" || key == "sigma") {
          if (text == "adaptive")
            c.fixed_sigma.reset();
          else
            c.fixed_sigma = parse_value(key, text);
        } else {
          throw ConfigError("unknown grid axis '" + key + "' (expected alpha, beta, w, sigma-fixed)");
        }
        next.push_back(std::move(c));
      }
    }
    points = std::move(next);
  }
  return points;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "alpha,beta,sigma,window,rank1,rank5,mAP\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%g,%g,%s,%d,%.6f,%.6f,%.6f\n", r.config.alpha, r.config.beta,
                  r.config.sigma_label().c_str(), r.config.window, r.metrics.rank1, r.metrics.rank5,
                  r.metrics.map);
    out += line;
  }
  return out;
}

} // namespace streid
