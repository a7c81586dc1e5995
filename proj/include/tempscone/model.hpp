#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tempscone {

// Rows are samples, columns are features / classes.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Logits = Matrix;

/// Raised when a tensor does not have the shape an operation expects.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& what, long expected, long actual);

  long expected() const { return expected_; }
  long actual() const { return actual_; }

 private:
  long expected_;
  long actual_;
};

/// All learnable state: a tanh MLP plus the affine detector head
/// g(E) = g_weight * E + g_bias used by the energy losses.
struct ModelParams {
  std::vector<Matrix> weights;  // weights[l] is [fan_out x fan_in]
  std::vector<Vector> biases;
  double g_weight = 1.0;
  double g_bias = 0.0;

  int num_layers() const { return static_cast<int>(weights.size()); }
  int input_dim() const;
  int num_classes() const;
  std::size_t num_scalars() const;

  bool all_finite() const;
  /// Throws DimensionError unless the layers chain d -> ... -> K.
  void check_consistent() const;

  /// this += scale * other (shapes must match).
  void add_scaled(const ModelParams& other, double scale);

  static ModelParams zeros_like(const ModelParams& like);
};

/// Gradients share the parameter layout.
using Gradients = ModelParams;

/// Layer widths {d, h1, ..., K}. Weights and biases are drawn from
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the head starts as the identity.
ModelParams init_params(std::span<const int> widths, std::uint64_t seed);

/// Flat view over every scalar (weights, biases, g_weight, g_bias), in a
/// fixed order. Used by gradient checks and determinism tests.
std::vector<double> flatten(const ModelParams& params);
void unflatten(std::span<const double> flat, ModelParams& params);

/// Intermediate activations kept for the backward pass.
struct ForwardTrace {
  // activations[0] is the input; activations[l + 1] is the output of layer l.
  std::vector<Matrix> activations;

  const Matrix& logits() const { return activations.back(); }
};

ForwardTrace forward_trace(const ModelParams& params, const Matrix& features);
Logits forward(const ModelParams& params, const Matrix& features);

/// Backpropagates d(loss)/d(logits) through the MLP. The head entries of
/// the result are zero; head gradients come from the loss terms.
Gradients backward(const ModelParams& params, const ForwardTrace& trace,
                   const Matrix& d_logits);

/// Row-wise softmax with max shift.
Matrix softmax(const Logits& logits);

/// E(x) = -logsumexp(f(x)), computed with the max-shift trick.
Vector energy(const Logits& logits);

/// d(loss)/d(logits) given d(loss)/dE and the softmax of the same logits.
Matrix energy_backward(const Matrix& probs, const Vector& d_energy);

/// d(loss)/d(logits) given d(loss)/d(probs) for row-wise softmax.
Matrix softmax_backward(const Matrix& probs, const Matrix& d_probs);

struct CrossEntropy {
  double loss = 0.0;
  Matrix d_logits;  // (softmax - onehot) / n
};

CrossEntropy cross_entropy(const Logits& logits, std::span<const int> labels);

/// Affine detector head applied to energies.
Vector g_score(const ModelParams& params, const Vector& energies);

struct OptimizerConfig {
  double base_lr = 0.0001;
  double momentum = 0.9;  // Nesterov
  double weight_decay = 0.0005;
  int batch_size = 128;
  std::vector<double> decay_milestones{0.5, 0.75, 0.9};
  double decay_factor = 0.5;

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

/// base_lr * decay_factor^(milestones passed), milestones being fractions of
/// total_steps.
double scheduled_learning_rate(const OptimizerConfig& cfg, int step_index,
                               int total_steps);

/// SGD with Nesterov momentum. Weight decay is added to the gradient of the
/// MLP weights only (not biases, not the detector head).
class NesterovSgd {
 public:
  explicit NesterovSgd(OptimizerConfig cfg, double lr_scale = 1.0);

  void step(ModelParams& params, const Gradients& grads, int step_index,
            int total_steps);

  double lr_scale() const { return lr_scale_; }

 private:
  OptimizerConfig cfg_;
  double lr_scale_;
  bool has_velocity_ = false;
  Gradients velocity_;
};

}  // namespace tempscone
