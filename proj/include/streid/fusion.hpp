#pragma once

#include "streid/topology.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace streid {

/// Appearance similarity plus the spatio-temporal window around the pair's
/// transition bin. Flattened as [appearance, st_window...].
struct FusionInput {
  double appearance = 0.0;
  Eigen::VectorXd st_window;

  Eigen::VectorXd to_vector() const;
};

struct LabeledInput {
  FusionInput input;
  int label = 0;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Negatives sampled per positive when building training pairs.
  int negative_ratio = 3;

  void validate() const;
};

constexpr int fusion_input_dim(int window) { return 2 * window + 2; }

/// round(2 * input_dim / 3 + 1) with halves rounded up, in exact integer form.
constexpr int fusion_hidden_dim(int window) { return (4 * fusion_input_dim(window) + 9) / 6; }

/// One-hidden-layer perceptron: ReLU hidden units, sigmoid output.
struct FusionModel {
  int window = 0;
  Eigen::MatrixXd w1; // hidden_dim x input_dim
  Eigen::VectorXd b1;
  Eigen::VectorXd w2; // hidden_dim
  double b2 = 0.0;

  // Provenance, persisted with the weights.
  std::optional<TrainConfig> train_config;
  double final_loss = 0.0;

  int input_dim() const { return fusion_input_dim(window); }
  int hidden_dim() const { return fusion_hidden_dim(window); }

  static FusionModel zeros(int window);
  /// Uniform Glorot initialization, biases zero.
  static FusionModel initialized(int window, std::uint64_t seed);

  /// Throws FormatError when parameter shapes disagree with `window`.
  void validate() const;
};

/// 2W+1 pdf values at bins bin(tau)-W .. bin(tau)+W of the direction-folded
/// camera pair; bins outside the histogram contribute zero.
Eigen::VectorXd build_st_vector(const TopologyModel& model, int cam_a, Frame frame_a, int cam_b,
                                Frame frame_b, int window);

FusionInput make_fusion_input(const TopologyModel& model, double appearance, int cam_a,
                              Frame frame_a, int cam_b, Frame frame_b, int window);

/// Pre-sigmoid output, monotone in the fused similarity.
double forward_logit(const FusionModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Fused similarity in (0, 1).
double forward(const FusionModel& model, const FusionInput& input);
double forward(const FusionModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Column-wise forward pass over a batch (input_dim x K).
Eigen::VectorXd forward_batch(const FusionModel& model, const Eigen::Ref<const Eigen::MatrixXd>& x);

inline constexpr double bce_clamp_epsilon = 1e-7;

/// Mean negated binary cross entropy with predictions clamped to [eps, 1 - eps].
double bce_loss(const Eigen::Ref<const Eigen::VectorXd>& predictions,
                const Eigen::Ref<const Eigen::VectorXd>& labels);

struct FusionGradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;
};

/// Mean BCE over the batch and its parameter gradients by backpropagation.
double loss_and_gradients(const FusionModel& model, const Eigen::Ref<const Eigen::MatrixXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& labels, FusionGradients& grads);

struct GradientCheckReport {
  double w1 = 0.0;
  double b1 = 0.0;
  double w2 = 0.0;
  double b2 = 0.0;

  double max() const;
};

/// Backprop against central differences (step 1e-5) for every parameter.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradientCheckReport gradient_check(const FusionModel& model, const FusionInput& input, int label);

struct TrainResult {
  FusionModel model;
  /// Mean sample loss per epoch, accumulated before each batch update.
  std::vector<double> loss_trace;
};

/// Adam on mini-batches of the mean BCE. The last partial batch is kept.
TrainResult train(std::span<const LabeledInput> pairs, const TrainConfig& config, int window);

/// The fixed-product baseline S_A * p.
inline double baseline_product(double appearance, double st_scalar) {
  return appearance * st_scalar;
}

/// w1 as CSV, one hidden unit per row; column 0 is the appearance weight.
std::string dump_weights(const FusionModel& model);
Eigen::MatrixXd parse_weights_csv(const std::string& csv);

} // namespace streid
