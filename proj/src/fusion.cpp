#include "streid/fusion.hpp"

#include "streid/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace streid {

Eigen::VectorXd FusionInput::to_vector() const {
  Eigen::VectorXd x(st_window.size() + 1);
  x[0] = appearance;
  x.tail(st_window.size()) = st_window;
  return x;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1)
    throw ConfigError("epochs and batch_size must be positive");
  if (!(learning_rate > 0.0) || !(adam_epsilon > 0.0))
    throw ConfigError("learning_rate and adam_epsilon must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam decay rates must lie in (0, 1)");
  if (negative_ratio < 1)
    throw ConfigError("negative_ratio must be positive");
}

namespace {

void check_window(int window) {
  if (window < 0)
    throw ConfigError("window must be non-negative, got " + std::to_string(window));
}

template <typename Engine>
void glorot_fill(Eigen::Ref<Eigen::MatrixXd> m, int fan_in, int fan_out, Engine& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      m(r, c) = dist(rng);
}

template <typename Engine>
FusionModel initialize(int window, Engine& rng) {
  auto model = FusionModel::zeros(window);
  glorot_fill(model.w1, model.input_dim(), model.hidden_dim(), rng);
  glorot_fill(model.w2, model.hidden_dim(), 1, rng);
  return model;
}

double sigmoid(double z) {
  const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  // Keep the open interval even where the logistic saturates in double precision.
  return std::clamp(p, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

void check_input_dim(const FusionModel& model, Eigen::Index dim) {
  if (dim != model.input_dim())
    throw InputError("fusion input has dimension " + std::to_string(dim) + ", model expects " +
                     std::to_string(model.input_dim()));
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

} // namespace

FusionModel FusionModel::zeros(int window) {
  check_window(window);
  FusionModel m;
  m.window = window;
  m.w1 = Eigen::MatrixXd::Zero(m.hidden_dim(), m.input_dim());
  m.b1 = Eigen::VectorXd::Zero(m.hidden_dim());
  m.w2 = Eigen::VectorXd::Zero(m.hidden_dim());
  m.b2 = 0.0;
  return m;
}

FusionModel FusionModel::initialized(int window, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return initialize(window, rng);
}

void FusionModel::validate() const {
  if (window < 0)
    throw FormatError("fusion model: negative window");
  if (w1.rows() != hidden_dim() || w1.cols() != input_dim() || b1.size() != hidden_dim() ||
      w2.size() != hidden_dim())
    throw FormatError("fusion model: parameter shapes do not match window " +
                      std::to_string(window));
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !std::isfinite(b2))
    throw FormatError("fusion model: non-finite parameters");
}

Eigen::VectorXd build_st_vector(const TopologyModel& model, int cam_a, Frame frame_a, int cam_b,
                                Frame frame_b, int window) {
  check_window(window);
  const auto d = resolve_transition(model, cam_a, frame_a, cam_b, frame_b);
  Eigen::VectorXd st(2 * window + 1);
  for (int k = -window; k <= window; ++k)
    st[k + window] = pdf_at(model, d.from_camera, d.to_camera, d.bin + k);
  return st;
}

FusionInput make_fusion_input(const TopologyModel& model, double appearance, int cam_a,
                              Frame frame_a, int cam_b, Frame frame_b, int window) {
  return {appearance, build_st_vector(model, cam_a, frame_a, cam_b, frame_b, window)};
}

double forward_logit(const FusionModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_input_dim(model, x.size());
  const Eigen::VectorXd hidden = (model.w1 * x + model.b1).cwiseMax(0.0);
  return model.w2.dot(hidden) + model.b2;
}

double forward(const FusionModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return sigmoid(forward_logit(model, x));
}

double forward(const FusionModel& model, const FusionInput& input) {
  return forward(model, input.to_vector());
}

Eigen::VectorXd forward_batch(const FusionModel& model, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  check_input_dim(model, x.rows());
  const Eigen::MatrixXd hidden = ((model.w1 * x).colwise() + model.b1).cwiseMax(0.0);
  Eigen::VectorXd z = (model.w2.transpose() * hidden).transpose();
  return z.unaryExpr([&](double v) { return sigmoid(v + model.b2); });
}

double bce_loss(const Eigen::Ref<const Eigen::VectorXd>& predictions,
                const Eigen::Ref<const Eigen::VectorXd>& labels) {
  if (predictions.size() != labels.size())
    throw InputError("bce_loss: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  if (predictions.size() == 0)
    throw InputError("bce_loss: empty batch");
  double total = 0.0;
  for (Eigen::Index k = 0; k < predictions.size(); ++k) {
    const double p = std::clamp(predictions[k], bce_clamp_epsilon, 1.0 - bce_clamp_epsilon);
    const double y = labels[k];
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return total / double(predictions.size());
}

double loss_and_gradients(const FusionModel& model, const Eigen::Ref<const Eigen::MatrixXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& labels, FusionGradients& grads) {
  check_input_dim(model, x.rows());
  if (x.cols() != labels.size())
    throw InputError("loss_and_gradients: batch and label sizes differ");
  const double batch = double(x.cols());

  const Eigen::MatrixXd pre = (model.w1 * x).colwise() + model.b1;
  const Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
  const Eigen::VectorXd logits = (model.w2.transpose() * hidden).transpose().array() + model.b2;
  const Eigen::VectorXd p = logits.unaryExpr([](double z) { return sigmoid(z); });
  const double loss = bce_loss(p, labels);

  // d(mean BCE)/d(logit); equals the clamped loss gradient away from the clamp.
  const Eigen::VectorXd dz = (p - labels) / batch;
  grads.w2 = hidden * dz;
  grads.b2 = dz.sum();
  const Eigen::MatrixXd dpre =
      (model.w2 * dz.transpose()).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
  grads.w1 = dpre * x.transpose();
  grads.b1 = dpre.rowwise().sum();
  return loss;
}

double GradientCheckReport::max() const { return std::max({w1, b1, w2, b2}); }

GradientCheckReport gradient_check(const FusionModel& model, const FusionInput& input, int label) {
  constexpr double step = 1e-5;
  const Eigen::VectorXd x = input.to_vector();
  check_input_dim(model, x.size());
  Eigen::VectorXd y(1);
  y[0] = double(label);

  FusionGradients analytic;
  loss_and_gradients(model, x, y, analytic);

  FusionModel probe = model;
  auto loss_at = [&]() {
    Eigen::VectorXd p(1);
    p[0] = forward(probe, x);
    return bce_loss(p, y);
  };
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + step;
    const double up = loss_at();
    param = saved - step;
    const double down = loss_at();
    param = saved;
    return (up - down) / (2.0 * step);
  };

  GradientCheckReport report;
  for (Eigen::Index c = 0; c < probe.w1.cols(); ++c)
    for (Eigen::Index r = 0; r < probe.w1.rows(); ++r)
      report.w1 = std::max(report.w1, relative_error(analytic.w1(r, c), central(probe.w1(r, c))));
  for (Eigen::Index r = 0; r < probe.b1.size(); ++r)
    report.b1 = std::max(report.b1, relative_error(analytic.b1[r], central(probe.b1[r])));
  for (Eigen::Index r = 0; r < probe.w2.size(); ++r)
    report.w2 = std::max(report.w2, relative_error(analytic.w2[r], central(probe.w2[r])));
  report.b2 = relative_error(analytic.b2, central(probe.b2));
  return report;
}

namespace {

struct AdamState {
  Eigen::ArrayXXd m, v;

  explicit AdamState(Eigen::Index rows, Eigen::Index cols)
    : m(Eigen::ArrayXXd::Zero(rows, cols)), v(Eigen::ArrayXXd::Zero(rows, cols)) {}

  template <typename Param, typename Grad>
  void step(Param& param, const Grad& grad, const TrainConfig& cfg, long t) {
    const Eigen::ArrayXXd g = Eigen::Map<const Eigen::ArrayXXd>(grad.data(), m.rows(), m.cols());
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.square();
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, double(t));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, double(t));
    Eigen::Map<Eigen::ArrayXXd> p(param.data(), m.rows(), m.cols());
    p -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.adam_epsilon);
  }
};

} // namespace

TrainResult train(std::span<const LabeledInput> pairs, const TrainConfig& config, int window) {
  config.validate();
  check_window(window);
  if (pairs.empty())
    throw TrainingError("train: no training pairs");

  const int dim = fusion_input_dim(window);
  const auto count = Eigen::Index(pairs.size());
  Eigen::MatrixXd x(dim, count);
  Eigen::VectorXd y(count);
  std::size_t positives = 0;
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto& pair = pairs[std::size_t(k)];
    if (pair.input.st_window.size() + 1 != dim)
      throw InputError("train: pair " + std::to_string(k) + " has input dimension " +
                       std::to_string(pair.input.st_window.size() + 1) + ", expected " +
                       std::to_string(dim));
    if (pair.label != 0 && pair.label != 1)
      throw InputError("train: labels must be 0 or 1");
    x.col(k) = pair.input.to_vector();
    y[k] = double(pair.label);
    positives += std::size_t(pair.label);
  }
  if (positives == 0 || positives == pairs.size())
    throw TrainingError("train: need both positive and negative pairs (" +
                        std::to_string(positives) + " positives of " +
                        std::to_string(pairs.size()) + ")");

  std::mt19937_64 rng(config.seed);
  TrainResult result{initialize(window, rng), {}};
  FusionModel& model = result.model;

  AdamState adam_w1(model.w1.rows(), model.w1.cols());
  AdamState adam_b1(model.b1.size(), 1);
  AdamState adam_w2(model.w2.size(), 1);
  AdamState adam_b2(1, 1);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Eigen::Index(0));

  FusionGradients grads;
  Eigen::MatrixXd xb;
  Eigen::VectorXd yb;
  long step = 0;
  result.loss_trace.reserve(std::size_t(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < count; start += config.batch_size) {
      const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, count - start);
      xb.resize(dim, size);
      yb.resize(size);
      for (Eigen::Index k = 0; k < size; ++k) {
        xb.col(k) = x.col(order[std::size_t(start + k)]);
        yb[k] = y[order[std::size_t(start + k)]];
      }
      const double loss = loss_and_gradients(model, xb, yb, grads);
      if (!std::isfinite(loss) || !grads.w1.allFinite() || !grads.w2.allFinite()) {
        std::ostringstream msg;
        msg << "train: non-finite loss " << loss << " at epoch " << epoch << ", batch starting at "
            << start << " (learning_rate " << config.learning_rate << ")";
        throw NumericalError(msg.str());
      }
      epoch_loss += loss * double(size);

      ++step;
      adam_w1.step(model.w1, grads.w1, config, step);
      adam_b1.step(model.b1, grads.b1, config, step);
      adam_w2.step(model.w2, grads.w2, config, step);
      Eigen::Matrix<double, 1, 1> gb2(grads.b2);
      Eigen::Matrix<double, 1, 1> b2(model.b2);
      adam_b2.step(b2, gb2, config, step);
      model.b2 = b2(0, 0);
    }
    result.loss_trace.push_back(epoch_loss / double(count));
  }

  model.train_config = config;
  model.final_loss = bce_loss(forward_batch(model, x), y);
  return result;
}

std::string dump_weights(const FusionModel& model) {
  std::string out;
  char buf[32];
  for (Eigen::Index r = 0; r < model.w1.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.w1.cols(); ++c) {
      if (c > 0)
        out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", model.w1(r, c));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Eigen::MatrixXd parse_weights_csv(const std::string& csv) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(csv);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, value);
      if (ec != std::errc() || ptr != line.data() + end)
        throw FormatError("weights csv: bad number on line " + std::to_string(line_no));
      row.push_back(value);
      pos = end + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError("weights csv: ragged row on line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    return {};
  Eigen::MatrixXd m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
  return m;
}

} // namespace streid
