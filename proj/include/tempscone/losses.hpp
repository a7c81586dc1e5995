#pragma once

#include "tempscone/model.hpp"
#include "tempscone/scores.hpp"

namespace tempscone {

/// How the ATC threshold delta is obtained during a run.
enum class DeltaMode {
  FitOnce,  // fit on the first timestep's validation split, then frozen
  Refit,    // refit at the end of every timestep
  Fixed,    // use Hyperparams::delta as given
};

/// Scalar knobs of the constrained objective and the temporal regularizer.
struct Hyperparams {
  double eta = -5.0;               // energy margin, strictly negative
  double lambda_out = 1.0;         // weight of the wild-energy loss
  double lambda_in_penalty = 1.0;  // quadratic ALM coefficient
  double lambda_base = 1.0;        // temporal weight (alias lambda_temp)
  double delta_max = 0.2;          // drift at which the weight saturates
  double epsilon = 0.02;           // drift tolerance
  double delta = 0.5;              // ATC threshold when delta_mode == Fixed
  double omega = 0.05;             // sigmoid smoothing of DiffATC
  double fpr_cutoff = 0.05;
  double ce_tol = 2.0;
  double lr_lambda = 0.1;
  // Recorded for completeness; alpha is enforced through fpr_cutoff and tau
  // through the ce_tol / lambda_2 mechanism.
  double alpha = 0.05;
  double tau = 0.1;
  ScoreKind score_kind = ScoreKind::MaxConfidence;
  DeltaMode delta_mode = DeltaMode::FitOnce;

  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

struct MultiplierState {
  double lambda_in_mult = 0.0;  // lambda
  double lambda_ce_mult = 0.0;  // lambda_2
  double baseline_ce = 0.0;     // frozen per timestep
};

struct LossBreakdown {
  double ce = 0.0;
  double l_in = 0.0;
  double l_out = 0.0;
  double alm_in = 0.0;
  double l_temp = 0.0;
  double w_temp = 0.0;
  double total = 0.0;
};

struct DetectorHead {
  double weight = 1.0;
  double bias = 0.0;

  static DetectorHead of(const ModelParams& p) { return {p.g_weight, p.g_bias}; }
};

/// A loss on a vector of energies together with its gradients.
struct HeadLoss {
  double value = 0.0;
  Vector d_energy;
  double d_g_weight = 0.0;
  double d_g_bias = 0.0;
};

/// mean sigmoid(g(E_i - eta)) over in-distribution energies.
HeadLoss loss_in(const Vector& energies_id, DetectorHead head, double eta);

/// mean sigmoid(-g(E_i - eta)) over wild energies.
HeadLoss loss_out(const Vector& energies_wild, DetectorHead head, double eta);

struct AlmTerm {
  double value = 0.0;
  double d_l_in = 0.0;
};

/// lambda * c + (lambda_in / 2) * c^2 with c = l_in - fpr_cutoff.
AlmTerm alm_in(double l_in_value, const MultiplierState& state,
               const Hyperparams& hp);

/// lambda_base * (1 + min(d_tot / delta_max, 1)).
double adaptive_weight(double d_id, double d_cov, const Hyperparams& hp);

struct TemporalTerm {
  double l_temp = 0.0;
  double w_temp = 0.0;
  double d_id = 0.0;
  double d_cov = 0.0;
  // Gradients of l_temp w.r.t. the current scores; previous scores are
  // constants.
  double d_s_in = 0.0;
  double d_s_cov = 0.0;
};

/// Asymmetric hinge on ID score decrease and covariate score increase
/// relative to the previous timestep, gated by epsilon and scaled by
/// adaptive_weight. Zero at t == 0 or without previous scores.
TemporalTerm temporal_loss(const TemporalState& state, double s_in_t,
                           double s_cov_t, const Hyperparams& hp, int t);

/// total = ce + lambda_out * l_out + alm_in + l_temp. l_in and w_temp are
/// left for the caller to fill.
LossBreakdown total_loss(double ce, double l_out, double alm_in, double l_temp,
                         const Hyperparams& hp);

/// Dual ascent on both multipliers, clipped at zero.
MultiplierState update_multipliers(const MultiplierState& state,
                                   double l_in_epoch, double ce_epoch,
                                   const Hyperparams& hp);

}  // namespace tempscone
