#include "tempscone/model.hpp"

#include <cmath>
#include <random>

namespace tempscone {

DimensionError::DimensionError(const std::string& what, long expected,
                               long actual)
    : std::invalid_argument(what + ": expected " + std::to_string(expected) +
                            ", got " + std::to_string(actual)),
      expected_(expected),
      actual_(actual) {}

int ModelParams::input_dim() const {
  return weights.empty() ? 0 : static_cast<int>(weights.front().cols());
}

int ModelParams::num_classes() const {
  return weights.empty() ? 0 : static_cast<int>(weights.back().rows());
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 2;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return std::isfinite(g_weight) && std::isfinite(g_bias);
}

void ModelParams::check_consistent() const {
  if (weights.empty()) throw std::invalid_argument("model has no layers");
  if (biases.size() != weights.size()) {
    throw DimensionError("bias count", static_cast<long>(weights.size()),
                         static_cast<long>(biases.size()));
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (biases[l].size() != weights[l].rows()) {
      throw DimensionError("biases[" + std::to_string(l) + "] length",
                           weights[l].rows(), biases[l].size());
    }
    if (l > 0 && weights[l].cols() != weights[l - 1].rows()) {
      throw DimensionError("weights[" + std::to_string(l) + "] fan_in",
                           weights[l - 1].rows(), weights[l].cols());
    }
  }
  if (num_classes() < 2) {
    throw DimensionError("number of classes must be >= 2", 2, num_classes());
  }
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += scale * other.weights[l];
    biases[l] += scale * other.biases[l];
  }
  g_weight += scale * other.g_weight;
  g_bias += scale * other.g_bias;
}

ModelParams ModelParams::zeros_like(const ModelParams& like) {
  ModelParams z;
  for (std::size_t l = 0; l < like.weights.size(); ++l) {
    z.weights.push_back(Matrix::Zero(like.weights[l].rows(), like.weights[l].cols()));
    z.biases.push_back(Vector::Zero(like.biases[l].size()));
  }
  z.g_weight = 0.0;
  z.g_bias = 0.0;
  return z;
}

ModelParams init_params(std::span<const int> widths, std::uint64_t seed) {
  if (widths.size() < 2) {
    throw std::invalid_argument("need at least input and output widths");
  }
  std::mt19937_64 rng(seed);
  ModelParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    if (fan_in < 1 || fan_out < 1) {
      throw std::invalid_argument("layer widths must be positive");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = u(rng);
    Vector b(fan_out);
    for (int r = 0; r < fan_out; ++r) b(r) = u(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  p.g_weight = 1.0;
  p.g_bias = 0.0;
  p.check_consistent();
  return p;
}

std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> flat;
  flat.reserve(params.num_scalars());
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    flat.insert(flat.end(), w.data(), w.data() + w.size());
    const auto& b = params.biases[l];
    flat.insert(flat.end(), b.data(), b.data() + b.size());
  }
  flat.push_back(params.g_weight);
  flat.push_back(params.g_bias);
  return flat;
}

void unflatten(std::span<const double> flat, ModelParams& params) {
  if (flat.size() != params.num_scalars()) {
    throw DimensionError("flat parameter vector",
                         static_cast<long>(params.num_scalars()),
                         static_cast<long>(flat.size()));
  }
  std::size_t at = 0;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto& w = params.weights[l];
    std::copy_n(flat.begin() + at, w.size(), w.data());
    at += static_cast<std::size_t>(w.size());
    auto& b = params.biases[l];
    std::copy_n(flat.begin() + at, b.size(), b.data());
    at += static_cast<std::size_t>(b.size());
  }
  params.g_weight = flat[at];
  params.g_bias = flat[at + 1];
}

ForwardTrace forward_trace(const ModelParams& params, const Matrix& features) {
  if (params.weights.empty()) throw std::invalid_argument("model has no layers");
  if (features.cols() != params.input_dim()) {
    throw DimensionError("feature width", params.input_dim(), features.cols());
  }
  ForwardTrace trace;
  trace.activations.reserve(params.weights.size() + 1);
  trace.activations.push_back(features);
  const int last = params.num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Matrix z = trace.activations.back() * params.weights[l].transpose();
    z.rowwise() += params.biases[l].transpose();
    if (l < last) z = z.array().tanh().matrix();
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

Logits forward(const ModelParams& params, const Matrix& features) {
  return forward_trace(params, features).logits();
}

Gradients backward(const ModelParams& params, const ForwardTrace& trace,
                   const Matrix& d_logits) {
  const Matrix& logits = trace.logits();
  if (d_logits.rows() != logits.rows() || d_logits.cols() != logits.cols()) {
    throw DimensionError("d_logits rows", logits.rows(), d_logits.rows());
  }
  Gradients g = ModelParams::zeros_like(params);
  Matrix delta = d_logits;
  for (int l = params.num_layers() - 1; l >= 0; --l) {
    const Matrix& input = trace.activations[l];
    g.weights[l].noalias() = delta.transpose() * input;
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix upstream = delta * params.weights[l];
      // tanh'(z) = 1 - tanh(z)^2, and activations[l] holds tanh(z).
      delta = upstream.array() * (1.0 - input.array().square());
    }
  }
  return g;
}

Matrix softmax(const Logits& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    auto e = (logits.row(i).array() - m).exp();
    probs.row(i) = e / e.sum();
  }
  return probs;
}

Vector energy(const Logits& logits) {
  Vector e(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    e(i) = -(m + std::log((logits.row(i).array() - m).exp().sum()));
  }
  return e;
}

Matrix energy_backward(const Matrix& probs, const Vector& d_energy) {
  // dE/dz = -softmax(z)
  return -(probs.array().colwise() * d_energy.array()).matrix();
}

Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs) {
  const Vector inner = (probs.array() * d_probs.array()).rowwise().sum();
  return (probs.array() * (d_probs.colwise() - inner).array()).matrix();
}

CrossEntropy cross_entropy(const Logits& logits, std::span<const int> labels) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw DimensionError("label count", n, static_cast<long>(labels.size()));
  }
  if (n == 0) throw std::invalid_argument("cross_entropy on empty batch");
  CrossEntropy out;
  out.d_logits = softmax(logits);
  const Vector e = energy(logits);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw std::out_of_range("label " + std::to_string(y) + " at row " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    // -log softmax_y = logsumexp(z) - z_y = -E - z_y
    total += -e(i) - logits(i, y);
    out.d_logits(i, y) -= 1.0;
  }
  out.loss = total / static_cast<double>(n);
  out.d_logits /= static_cast<double>(n);
  return out;
}

Vector g_score(const ModelParams& params, const Vector& energies) {
  return (params.g_weight * energies.array() + params.g_bias).matrix();
}

void OptimizerConfig::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("momentum must lie in [0, 1)");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("weight_decay must be non-negative");
  }
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw std::invalid_argument("decay_factor must lie in (0, 1]");
  }
  double prev = 0.0;
  for (double m : decay_milestones) {
    if (!(m > prev && m < 1.0)) {
      throw std::invalid_argument(
          "decay_milestones must be strictly increasing in (0, 1)");
    }
    prev = m;
  }
}

double scheduled_learning_rate(const OptimizerConfig& cfg, int step_index,
                               int total_steps) {
  double lr = cfg.base_lr;
  for (double m : cfg.decay_milestones) {
    if (static_cast<double>(step_index) >= m * static_cast<double>(total_steps)) {
      lr *= cfg.decay_factor;
    }
  }
  return lr;
}

NesterovSgd::NesterovSgd(OptimizerConfig cfg, double lr_scale)
    : cfg_(std::move(cfg)), lr_scale_(lr_scale) {
  cfg_.validate();
  if (!(lr_scale_ > 0.0)) throw std::invalid_argument("lr_scale must be positive");
}

namespace {

void require_finite(const Gradients& g) {
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    if (!g.weights[l].allFinite()) {
      throw std::domain_error("non-finite gradient in weights[" +
                              std::to_string(l) + "]");
    }
    if (!g.biases[l].allFinite()) {
      throw std::domain_error("non-finite gradient in biases[" +
                              std::to_string(l) + "]");
    }
  }
  if (!std::isfinite(g.g_weight)) {
    throw std::domain_error("non-finite gradient in g_weight");
  }
  if (!std::isfinite(g.g_bias)) throw std::domain_error("non-finite gradient in g_bias");
}

}  // namespace

void NesterovSgd::step(ModelParams& params, const Gradients& grads,
                       int step_index, int total_steps) {
  if (step_index < 0 || step_index >= total_steps) {
    throw std::out_of_range("step_index " + std::to_string(step_index) +
                            " outside [0, " + std::to_string(total_steps) + ")");
  }
  if (grads.weights.size() != params.weights.size()) {
    throw DimensionError("gradient layer count",
                         static_cast<long>(params.weights.size()),
                         static_cast<long>(grads.weights.size()));
  }
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() ||
        grads.weights[l].cols() != params.weights[l].cols()) {
      throw DimensionError("gradient weights[" + std::to_string(l) + "] size",
                           params.weights[l].size(), grads.weights[l].size());
    }
    if (grads.biases[l].size() != params.biases[l].size()) {
      throw DimensionError("gradient biases[" + std::to_string(l) + "] size",
                           params.biases[l].size(), grads.biases[l].size());
    }
  }
  require_finite(grads);

  Gradients d = grads;
  if (cfg_.weight_decay != 0.0) {
    for (std::size_t l = 0; l < d.weights.size(); ++l) {
      d.weights[l] += cfg_.weight_decay * params.weights[l];
    }
  }
  if (!has_velocity_) {
    velocity_ = Gradients::zeros_like(params);
    has_velocity_ = true;
  }
  const double mu = cfg_.momentum;
  // v <- mu v + d;  p <- p - lr (d + mu v)
  for (std::size_t l = 0; l < d.weights.size(); ++l) {
    velocity_.weights[l] = mu * velocity_.weights[l] + d.weights[l];
    velocity_.biases[l] = mu * velocity_.biases[l] + d.biases[l];
  }
  velocity_.g_weight = mu * velocity_.g_weight + d.g_weight;
  velocity_.g_bias = mu * velocity_.g_bias + d.g_bias;
  const double lr =
      lr_scale_ * scheduled_learning_rate(cfg_, step_index, total_steps);
  params.add_scaled(d, -lr);
  params.add_scaled(velocity_, -lr * mu);
  if (!params.all_finite()) {
    throw std::domain_error("parameters became non-finite after step " +
                            std::to_string(step_index));
  }
}

}  // namespace tempscone
