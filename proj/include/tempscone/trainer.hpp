#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tempscone/losses.hpp"
#include "tempscone/metrics.hpp"
#include "tempscone/model.hpp"
#include "tempscone/scores.hpp"
#include "tempscone/stream.hpp"

namespace tempscone {

enum class Method { Scone, TempSconeATC, TempSconeAC };

std::string to_string(Method m);
Method parse_method(const std::string& name);

/// Optimizer defaults used for runs of the desk-scale MLP. They keep the
/// momentum, weight decay, batch size and decay schedule of OptimizerConfig
/// but start from a larger learning rate, since the network is trained from
/// scratch rather than fine-tuned.
OptimizerConfig desk_optimizer_defaults();

struct RunConfig {
  StreamConfig stream;
  OptimizerConfig optimizer = desk_optimizer_defaults();
  Hyperparams hyper;
  int epochs_per_timestep = 10;
  Method method = Method::TempSconeATC;
  int probe_size = 512;
  std::uint64_t seed = 0;
  std::vector<int> hidden_widths{64, 64};
  // Learning-rate multiplier after timestep 0 in the Distinct regime.
  double distinct_lr_multiplier = 5.0;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
  /// Hyperparams with lambda_base forced to zero for the SCONE baseline.
  Hyperparams effective_hyper() const;
  TemporalMode temporal_mode() const;
  std::vector<int> layer_widths() const;
};

/// Mutable state carried across timesteps.
struct TrainerState {
  ModelParams params;
  MultiplierState multipliers;
  TemporalState temporal;
  double atc_delta = 0.0;
};

TrainerState initial_state(const RunConfig& cfg);

/// Concatenates the three pools and applies a seeded row permutation.
Matrix mix_batches(const Matrix& id_batch, const Matrix& cov_batch,
                   const Matrix& sem_batch, std::mt19937_64& rng);

/// Called after every optimizer step with the step's loss breakdown.
using StepObserver = std::function<void(int t, int epoch, int step, const ModelParams& params,
                                        const LossBreakdown& loss)>;

/// Differentiable confidence scores of the probe sets and the temporal term
/// built from them. `grads` holds d l_temp / d params, or is empty (no
/// layers) when the term has no gradient.
struct TemporalEvaluation {
  double s_in = 0.0;
  double s_cov = 0.0;
  TemporalTerm term;
  Gradients grads;
};

TemporalEvaluation evaluate_temporal(const ModelParams& params, const Matrix& probe_id,
                                     const Matrix& probe_cov, const TemporalState& state,
                                     const Hyperparams& hp, double atc_delta, int t);

/// Gradient of ce + lambda_out * l_out + alm_in on one minibatch, with the
/// breakdown (l_temp and w_temp left at zero).
struct MinibatchLoss {
  LossBreakdown loss;
  Gradients grads;
};

MinibatchLoss minibatch_loss(const ModelParams& params, const Matrix& x_in,
                             std::span<const int> y_in, const Matrix& x_aux,
                             const MultiplierState& multipliers, const Hyperparams& hp);

/// Cross-entropy-only training used as initialization at timestep 0. Fits the
/// ATC threshold (unless fixed) and stores the first probe scores.
MetricsRecord train_initial(TrainerState& state, const DomainSnapshot& snap,
                            const RunConfig& cfg, const StepObserver& observer = {});

/// One wild timestep: frozen baseline CE, per-epoch temporal term, ALM
/// minibatch steps, multiplier updates, evaluation.
MetricsRecord train_timestep(TrainerState& state, const DomainSnapshot& snap,
                             const RunConfig& cfg, const StepObserver& observer = {});

struct RunResult {
  std::vector<MetricsRecord> records;
  // Flattened parameters after each timestep.
  std::vector<std::vector<double>> param_trajectory;
  TrainerState final_state;
};

RunResult run_stream_detailed(const RunConfig& cfg, const StepObserver& observer = {});
std::vector<MetricsRecord> run_stream(const RunConfig& cfg);

}  // namespace tempscone
