#include "streid/sim.hpp"

#include "streid/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace streid {

void SimConfig::validate() const {
  if (n_cameras < 1 || n_vehicles < 1 || n_train_vehicles < 0 || n_model_types < 1)
    throw ConfigError("simulator: camera, vehicle and model-type counts must be positive");
  if (frames_horizon < 1)
    throw ConfigError("simulator: frames_horizon must be positive");
  if (min_visits < 2 || max_visits < min_visits)
    throw ConfigError("simulator: need 2 <= min_visits <= max_visits");
  for (const auto* beta : {&same_id_similarity, &same_cluster_similarity, &cross_cluster_similarity})
    if (!(beta->a > 0.0) || !(beta->b > 0.0))
      throw ConfigError("simulator: Beta parameters must be positive");
  if (road_edges.empty())
    throw ConfigError("simulator: road graph has no edges");

  std::vector<int> parent(static_cast<std::size_t>(n_cameras));
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](int c) {
    while (parent[std::size_t(c)] != c)
      c = parent[std::size_t(c)] = parent[std::size_t(parent[std::size_t(c)])];
    return c;
  };
  for (const auto& e : road_edges) {
    if (e.from < 0 || e.from >= n_cameras || e.to < 0 || e.to >= n_cameras)
      throw ConfigError("simulator: edge endpoint outside [0, " + std::to_string(n_cameras) + ")");
    if (!(e.mean_transit_frames >= 0.0) || !(e.stdev_frames >= 0.0) || !(e.traffic_weight > 0.0))
      throw ConfigError("simulator: edge parameters must be non-negative with positive weight");
    parent[std::size_t(root(e.from))] = root(e.to);
  }
  for (int c = 1; c < n_cameras; ++c)
    if (root(c) != root(0))
      throw ConfigError("simulator: road graph is disconnected (camera " + std::to_string(c) +
                        " unreachable from camera 0)");
}

namespace {

double draw_beta(std::mt19937_64& rng, const BetaParams& p) {
  std::gamma_distribution<double> ga(p.a, 1.0);
  std::gamma_distribution<double> gb(p.b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

std::string make_id(char prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05d", prefix, index);
  return buf;
}

class Walker {
public:
  explicit Walker(const SimConfig& config) : config_(config), out_(std::size_t(config.n_cameras)) {
    std::vector<double> start_weights(std::size_t(config.n_cameras), 0.0);
    for (std::size_t e = 0; e < config.road_edges.size(); ++e) {
      const auto& edge = config.road_edges[e];
      out_[std::size_t(edge.from)].push_back(e);
      start_weights[std::size_t(edge.from)] += edge.traffic_weight;
    }
    start_ = std::discrete_distribution<int>(start_weights.begin(), start_weights.end());
    for (const auto& edges : out_) {
      std::vector<double> w;
      for (auto e : edges)
        w.push_back(config.road_edges[e].traffic_weight);
      choice_.emplace_back(w.begin(), w.end());
    }
  }

  /// Camera visits of one vehicle and the edges it traversed.
  std::vector<Observation> walk(std::mt19937_64& rng, const std::string& vehicle,
                                std::vector<std::size_t>& traversed) {
    std::uniform_int_distribution<int> length(config_.min_visits, config_.max_visits);
    std::uniform_int_distribution<Frame> start_time(0, config_.frames_horizon / 2);
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::vector<Observation> track;
      std::vector<std::size_t> edges;
      int camera = start_(rng);
      Frame t = start_time(rng);
      const int visits = length(rng);
      track.push_back({"", vehicle, camera, t});
      for (int k = 1; k < visits; ++k) {
        const auto& options = out_[std::size_t(camera)];
        if (options.empty())
          break;
        const std::size_t e = options[std::size_t(choice_[std::size_t(camera)](rng))];
        const auto& edge = config_.road_edges[e];
        std::normal_distribution<double> transit(edge.mean_transit_frames, edge.stdev_frames);
        double dt = transit(rng);
        while (dt < 0.0)
          dt = transit(rng);
        t += Frame(std::llround(dt));
        if (t > config_.frames_horizon)
          break;
        camera = edge.to;
        track.push_back({"", vehicle, camera, t});
        edges.push_back(e);
      }
      if (track.size() >= 2) {
        for (std::size_t i = 0; i < track.size(); ++i)
          track[i].image_id = vehicle + "_" + std::to_string(i);
        traversed.insert(traversed.end(), edges.begin(), edges.end());
        return track;
      }
    }
    throw ConfigError("simulator: could not generate two visits for " + vehicle +
                      " within the frame horizon");
  }

private:
  const SimConfig& config_;
  std::vector<std::vector<std::size_t>> out_;
  std::discrete_distribution<int> start_;
  std::vector<std::discrete_distribution<int>> choice_;
};

} // namespace

SimOutput simulate(const SimConfig& config) {
  config.validate();
  SimOutput out;
  Walker walker(config);
  std::mt19937_64 walk_rng(config.seed);

  std::vector<std::size_t> traversed;
  for (int v = 0; v < config.n_train_vehicles; ++v) {
    auto track = walker.walk(walk_rng, make_id('t', v), traversed);
    out.observations.insert(out.observations.end(), track.begin(), track.end());
  }
  out.ground_truth.reserve(config.road_edges.size());
  for (const auto& edge : config.road_edges)
    out.ground_truth.push_back({edge, 0});
  for (auto e : traversed)
    ++out.ground_truth[e].transitions;

  std::vector<std::size_t> ignored;
  std::vector<Observation> queries, gallery;
  for (int v = 0; v < config.n_vehicles; ++v) {
    const auto id = make_id('v', v);
    out.cluster_of[id] = v % config.n_model_types;
    auto track = walker.walk(walk_rng, id, ignored);
    std::uniform_int_distribution<std::size_t> pick(0, track.size() - 1);
    const std::size_t held = pick(walk_rng);
    for (std::size_t i = 0; i < track.size(); ++i)
      (i == held ? queries : gallery).push_back(track[i]);
  }
  out.test_observations = queries;
  out.test_observations.insert(out.test_observations.end(), gallery.begin(), gallery.end());

  auto& sim = out.similarity;
  for (const auto& q : queries)
    sim.query_ids.push_back(q.image_id);
  for (const auto& g : gallery)
    sim.gallery_ids.push_back(g.image_id);
  sim.values.resize(Eigen::Index(queries.size()), Eigen::Index(gallery.size()));

  std::mt19937_64 look_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const int qc = out.cluster_of.at(queries[q].vehicle_id);
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const BetaParams* beta = &config.cross_cluster_similarity;
      if (gallery[g].vehicle_id == queries[q].vehicle_id)
        beta = &config.same_id_similarity;
      else if (out.cluster_of.at(gallery[g].vehicle_id) == qc)
        beta = &config.same_cluster_similarity;
      sim.values(Eigen::Index(q), Eigen::Index(g)) = draw_beta(look_rng, *beta);
    }
  }
  return out;
}

AmbiguityReport ambiguity_report(const SimOutput& output) {
  const EvalSet data = make_eval_set(output.test_observations, output.similarity);
  AmbiguityReport report;
  double within_id = 0.0, within_cluster = 0.0, cross = 0.0;
  std::size_t confusable = 0, ranked = 0;

  for (std::size_t q = 0; q < data.queries.size(); ++q) {
    const auto& query = data.queries[q];
    const int qc = output.cluster_of.at(query.vehicle_id);
    std::vector<double> scores(data.gallery.size());
    for (std::size_t g = 0; g < data.gallery.size(); ++g) {
      const auto& item = data.gallery[g];
      const double s = data.appearance(q, g);
      scores[g] = s;
      if (item.vehicle_id == query.vehicle_id) {
        within_id += s;
        ++report.within_id_samples;
      } else if (output.cluster_of.at(item.vehicle_id) == qc) {
        within_cluster += s;
        ++report.within_cluster_samples;
      } else {
        cross += s;
        ++report.cross_cluster_samples;
      }
    }
    const auto order = rank_gallery(query, data.gallery, scores);
    if (order.empty())
      continue;
    ++ranked;
    const auto& top = data.gallery[order.front()];
    if (top.vehicle_id != query.vehicle_id && output.cluster_of.at(top.vehicle_id) == qc)
      ++confusable;
  }

  if (report.within_id_samples > 0)
    report.within_id_mean = within_id / double(report.within_id_samples);
  if (report.within_cluster_samples > 0)
    report.within_cluster_mean = within_cluster / double(report.within_cluster_samples);
  if (report.cross_cluster_samples > 0)
    report.cross_cluster_mean = cross / double(report.cross_cluster_samples);
  report.degenerate = report.within_cluster_samples == 0 || report.cross_cluster_samples == 0;
  report.confusable_top_match_fraction = ranked > 0 ? double(confusable) / double(ranked) : 0.0;
  return report;
}

namespace {

SimConfig ring_base(std::uint64_t seed) {
  SimConfig c;
  c.n_cameras = 20;
  c.n_vehicles = 400;
  c.n_train_vehicles = 1500;
  c.n_model_types = 40;
  c.frames_horizon = 30000;
  c.min_visits = 3;
  c.max_visits = 6;
  c.seed = seed;
  return c;
}

} // namespace

SimConfig ring_network_config(std::uint64_t seed) {
  SimConfig c = ring_base(seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean(600.0, 2400.0);
  std::uniform_real_distribution<double> spread(80.0, 200.0);
  auto connect = [&](int a, int b) {
    const double m = mean(rng);
    const double s = spread(rng);
    c.road_edges.push_back({a, b, m, s, 1.0});
    c.road_edges.push_back({b, a, m, s, 1.0});
  };
  for (int i = 0; i < c.n_cameras; ++i)
    connect(i, (i + 1) % c.n_cameras);
  for (int i = 0; i < c.n_cameras; i += 4)
    connect(i, (i + 7) % c.n_cameras);
  return c;
}

SimConfig mixed_density_config(std::uint64_t seed) {
  SimConfig c = ring_base(seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mean(600.0, 2400.0);
  std::uniform_real_distribution<double> narrow(60.0, 120.0);
  std::uniform_real_distribution<double> wide(300.0, 500.0);
  for (int i = 0; i < c.n_cameras; ++i) {
    const int j = (i + 1) % c.n_cameras;
    const bool dense = i % 2 == 0;
    // Heavy links are tight, light links are loose and rarely taken.
    const double m = mean(rng);
    const double s = dense ? narrow(rng) : wide(rng);
    const double w = dense ? 1.0 : 0.03;
    c.road_edges.push_back({i, j, m, s, w});
    c.road_edges.push_back({j, i, m, s, w});
  }
  return c;
}

} // namespace streid
