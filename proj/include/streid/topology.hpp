#pragma once

#include "streid/observation.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace streid {

using CountVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

/// Discretization of transition times: `bin_count` bins of `bin_width` frames.
struct HistogramGeometry {
  int bin_count = 300;
  int bin_width = 100;

  void validate() const;
  Frame covered_frames() const { return Frame(bin_count) * bin_width; }
  /// Bin index of a non-negative frame difference (may exceed bin_count).
  std::int64_t bin_of(Frame delta) const { return delta / bin_width; }
};

/// Binned transition times from camera `from_camera` to `to_camera`.
struct TransitionHistogram {
  int from_camera = 0;
  int to_camera = 0;
  CountVector counts;
  std::int64_t pair_count = 0;
};

struct TopologyEntry {
  int from_camera = 0;
  int to_camera = 0;
  double sigma = 1.0;
  std::int64_t pair_count = 0;
  Eigen::VectorXd pdf;
};

/// Camera network graph: one smoothed transition-time pdf per ordered camera
/// pair, self pairs included. Entries are stored row-major by (from, to).
///
/// A fixed-bandwidth model is represented with beta = +inf, which makes every
/// sigma equal to alpha.
struct TopologyModel {
  int n_cameras = 0;
  HistogramGeometry geometry;
  double alpha = 20.0;
  double beta = 12.0;
  std::vector<TopologyEntry> entries;

  const TopologyEntry& entry(int from, int to) const {
    return entries[std::size_t(from) * std::size_t(n_cameras) + std::size_t(to)];
  }

  /// Throws FormatError when the structural invariants do not hold.
  void validate() const;
};

/// Camera pair and bin addressed by a query, after direction folding.
struct DirectedBin {
  int from_camera = 0;
  int to_camera = 0;
  std::int64_t bin = 0;
};

/// Histograms for every ordered camera pair, indexed from * n_cameras + to.
/// Each ordered pair of distinct observations (a, b) of the same vehicle with
/// frame(b) >= frame(a) adds one count at bin (frame(b) - frame(a)) / bin_width
/// of camera(a) -> camera(b); differences beyond the covered range are dropped.
std::vector<TransitionHistogram> build_histograms(std::span<const Observation> observations,
                                                  const HistogramGeometry& geometry,
                                                  int n_cameras);

/// Per-pair kernel bandwidth in bin units: max(alpha * exp(-n / beta), 1).
double adaptive_sigma(std::int64_t pair_count, double alpha, double beta);

template <typename Scalar>
Scalar gaussian_kernel(Scalar x, Scalar sigma) {
  using std::exp;
  const Scalar norm = Scalar(1) / (std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>) * sigma);
  return norm * exp(-(x * x) / (Scalar(2) * sigma * sigma));
}

/// Gaussian smoothing of binned counts over the full support, renormalized so
/// the truncated result sums to one. All-zero counts give the uniform pdf.
template <typename Derived>
Eigen::Matrix<double, Eigen::Dynamic, 1> smooth_counts(const Eigen::MatrixBase<Derived>& counts,
                                                       double sigma) {
  const Eigen::Index bins = counts.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(bins);
  if (bins == 0)
    return out;

  Eigen::VectorXd kernel(bins);
  for (Eigen::Index d = 0; d < bins; ++d)
    kernel[d] = gaussian_kernel(double(d), sigma);

  bool any = false;
  for (Eigen::Index tau = 0; tau < bins; ++tau) {
    const double c = double(counts[tau]);
    if (c == 0.0)
      continue;
    any = true;
    for (Eigen::Index b = 0; b < bins; ++b)
      out[b] += c * kernel[b > tau ? b - tau : tau - b];
  }
  if (!any)
    return Eigen::VectorXd::Constant(bins, 1.0 / double(bins));
  return out / out.sum();
}

Eigen::VectorXd estimate_pdf(const TransitionHistogram& histogram, double sigma);

/// Histograms followed by per-pair adaptive smoothing.
TopologyModel estimate_topology(std::span<const Observation> observations,
                                const HistogramGeometry& geometry,
                                int n_cameras,
                                double alpha = 20.0,
                                double beta = 12.0);

/// Same pipeline with one bandwidth for every camera pair.
TopologyModel estimate_topology_fixed_sigma(std::span<const Observation> observations,
                                            const HistogramGeometry& geometry,
                                            int n_cameras,
                                            double sigma);

/// Smooths precomputed histograms; used when sweeping bandwidth settings.
TopologyModel smooth_histograms(std::span<const TransitionHistogram> histograms,
                                const HistogramGeometry& geometry,
                                int n_cameras,
                                double alpha,
                                double beta);

/// Folds a pair of timed detections onto the forward-in-time entry.
DirectedBin resolve_transition(const TopologyModel& model, int cam_a, Frame frame_a, int cam_b,
                               Frame frame_b);

/// pdf value of entry (from -> to) at `bin`, zero outside [0, bin_count).
double pdf_at(const TopologyModel& model, int from, int to, std::int64_t bin);

/// Transition probability for two detections, symmetric under argument swap.
double lookup_probability(const TopologyModel& model, int cam_a, Frame frame_a, int cam_b,
                          Frame frame_b);

} // namespace streid
