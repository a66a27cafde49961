#include "streid/topology.hpp"

#include "streid/error.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <unordered_map>

namespace streid {

void HistogramGeometry::validate() const {
  if (bin_count < 1)
    throw ConfigError("bin_count must be >= 1, got " + std::to_string(bin_count));
  if (bin_width < 1)
    throw ConfigError("bin_width must be >= 1, got " + std::to_string(bin_width));
}

void TopologyModel::validate() const {
  if (n_cameras < 1)
    throw FormatError("topology: n_cameras must be positive");
  if (geometry.bin_count < 1 || geometry.bin_width < 1)
    throw FormatError("topology: invalid histogram geometry");
  if (!(alpha >= 1.0) || !(beta > 0.0))
    throw FormatError("topology: alpha must be >= 1 and beta > 0");
  const auto n = std::size_t(n_cameras);
  if (entries.size() != n * n)
    throw FormatError("topology: expected " + std::to_string(n * n) + " entries, got " +
                      std::to_string(entries.size()));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.from_camera != int(k / n) || e.to_camera != int(k % n))
      throw FormatError("topology: entry " + std::to_string(k) + " out of order");
    if (e.pdf.size() != geometry.bin_count)
      throw FormatError("topology: entry " + std::to_string(k) + " has wrong pdf length");
    if (!(e.sigma >= 1.0 && e.sigma <= alpha))
      throw FormatError("topology: entry " + std::to_string(k) + " sigma outside [1, alpha]");
    if (e.pair_count < 0 || !e.pdf.allFinite() || (e.pdf.array() < 0.0).any())
      throw FormatError("topology: entry " + std::to_string(k) + " has invalid values");
  }
}

namespace {

void check_camera(int camera, int n_cameras) {
  if (camera < 0 || camera >= n_cameras)
    throw InputError("camera index " + std::to_string(camera) + " outside [0, " +
                     std::to_string(n_cameras) + ")");
}

} // namespace

std::vector<TransitionHistogram> build_histograms(std::span<const Observation> observations,
                                                  const HistogramGeometry& geometry,
                                                  int n_cameras) {
  geometry.validate();
  if (n_cameras < 1)
    throw ConfigError("n_cameras must be positive");
  if (observations.empty())
    throw InputError("build_histograms: empty observation list");

  for (const auto& obs : observations) {
    check_camera(obs.camera_id, n_cameras);
    if (obs.frame < 0)
      throw InputError("observation " + obs.image_id + " has negative frame");
  }

  const auto n = std::size_t(n_cameras);
  std::vector<TransitionHistogram> histograms(n * n);
  for (std::size_t k = 0; k < histograms.size(); ++k) {
    histograms[k].from_camera = int(k / n);
    histograms[k].to_camera = int(k % n);
    histograms[k].counts = CountVector::Zero(geometry.bin_count);
  }

  std::unordered_map<std::string, std::vector<const Observation*>> by_vehicle;
  for (const auto& obs : observations)
    by_vehicle[obs.vehicle_id].push_back(&obs);

  const Frame limit = geometry.covered_frames();
  for (auto& [vehicle, track] : by_vehicle) {
    std::stable_sort(track.begin(), track.end(),
                     [](const Observation* a, const Observation* b) { return a->frame < b->frame; });
    for (std::size_t i = 0; i < track.size(); ++i) {
      // Partners at the same frame are visited in both orders.
      for (std::size_t j = 0; j < track.size(); ++j) {
        if (i == j)
          continue;
        const Frame delta = track[j]->frame - track[i]->frame;
        if (delta < 0)
          continue;
        if (delta >= limit) {
          if (j > i)
            break;
          continue;
        }
        auto& h = histograms[std::size_t(track[i]->camera_id) * n + std::size_t(track[j]->camera_id)];
        ++h.counts[geometry.bin_of(delta)];
        ++h.pair_count;
      }
    }
  }
  return histograms;
}

double adaptive_sigma(std::int64_t pair_count, double alpha, double beta) {
  if (!(alpha >= 1.0))
    throw ConfigError("alpha must be >= 1, got " + std::to_string(alpha));
  if (!(beta > 0.0))
    throw ConfigError("beta must be > 0, got " + std::to_string(beta));
  if (pair_count < 0)
    throw InputError("pair_count must be non-negative");
  return std::max(alpha * std::exp(-double(pair_count) / beta), 1.0);
}

Eigen::VectorXd estimate_pdf(const TransitionHistogram& histogram, double sigma) {
  return smooth_counts(histogram.counts, sigma);
}

TopologyModel smooth_histograms(std::span<const TransitionHistogram> histograms,
                                const HistogramGeometry& geometry,
                                int n_cameras,
                                double alpha,
                                double beta) {
  geometry.validate();
  const auto n = std::size_t(n_cameras);
  if (histograms.size() != n * n)
    throw InputError("smooth_histograms: expected " + std::to_string(n * n) + " histograms");

  TopologyModel model;
  model.n_cameras = n_cameras;
  model.geometry = geometry;
  model.alpha = alpha;
  model.beta = beta;
  model.entries.resize(histograms.size());
  for (std::size_t k = 0; k < histograms.size(); ++k) {
    const auto& h = histograms[k];
    auto& e = model.entries[k];
    e.from_camera = h.from_camera;
    e.to_camera = h.to_camera;
    e.pair_count = h.pair_count;
    e.sigma = adaptive_sigma(h.pair_count, alpha, beta);
    e.pdf = estimate_pdf(h, e.sigma);
  }
  return model;
}

TopologyModel estimate_topology(std::span<const Observation> observations,
                                const HistogramGeometry& geometry,
                                int n_cameras,
                                double alpha,
                                double beta) {
  // Fail on bad bandwidth parameters before touching the data.
  adaptive_sigma(0, alpha, beta);
  const auto histograms = build_histograms(observations, geometry, n_cameras);
  return smooth_histograms(histograms, geometry, n_cameras, alpha, beta);
}

TopologyModel estimate_topology_fixed_sigma(std::span<const Observation> observations,
                                            const HistogramGeometry& geometry,
                                            int n_cameras,
                                            double sigma) {
  return estimate_topology(observations, geometry, n_cameras, sigma,
                           std::numeric_limits<double>::infinity());
}

DirectedBin resolve_transition(const TopologyModel& model, int cam_a, Frame frame_a, int cam_b,
                               Frame frame_b) {
  check_camera(cam_a, model.n_cameras);
  check_camera(cam_b, model.n_cameras);
  if (frame_b >= frame_a)
    return {cam_a, cam_b, model.geometry.bin_of(frame_b - frame_a)};
  return {cam_b, cam_a, model.geometry.bin_of(frame_a - frame_b)};
}

double pdf_at(const TopologyModel& model, int from, int to, std::int64_t bin) {
  if (bin < 0 || bin >= model.geometry.bin_count)
    return 0.0;
  return model.entry(from, to).pdf[Eigen::Index(bin)];
}

double lookup_probability(const TopologyModel& model, int cam_a, Frame frame_a, int cam_b,
                          Frame frame_b) {
  const auto d = resolve_transition(model, cam_a, frame_a, cam_b, frame_b);
  return pdf_at(model, d.from_camera, d.to_camera, d.bin);
}

} // namespace streid
