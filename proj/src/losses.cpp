#include "tempscone/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tempscone {

void Hyperparams::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  };
  require(eta < 0.0, "eta must be negative");
  require(lambda_out >= 0.0, "lambda_out must be non-negative");
  require(lambda_in_penalty >= 0.0, "lambda_in must be non-negative");
  require(lambda_base >= 0.0, "lambda_base must be non-negative");
  require(delta_max > 0.0, "delta_max must be positive");
  require(epsilon >= 0.0, "epsilon must be non-negative");
  require(std::isfinite(delta), "delta must be finite");
  require(omega > 0.0, "omega must be positive");
  require(fpr_cutoff > 0.0 && fpr_cutoff < 1.0, "fpr_cutoff must lie in (0, 1)");
  require(ce_tol >= 1.0, "ce_tol must be >= 1");
  require(lr_lambda > 0.0, "lr_lambda must be positive");
  require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  require(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
}

namespace {

// Shared body of loss_in / loss_out: mean sigmoid(sign * (w (E - eta) + b)).
HeadLoss sigmoid_energy_loss(const Vector& energies, DetectorHead head,
                             double eta, double sign) {
  if (energies.size() == 0) throw std::invalid_argument("energy loss on empty batch");
  const auto n = static_cast<double>(energies.size());
  HeadLoss out;
  out.d_energy.resize(energies.size());
  for (Eigen::Index i = 0; i < energies.size(); ++i) {
    const double centered = energies(i) - eta;
    const double a = head.weight * centered + head.bias;
    const double s = sigmoid(sign * a);
    out.value += s;
    const double da = sign * s * (1.0 - s) / n;
    out.d_energy(i) = da * head.weight;
    out.d_g_weight += da * centered;
    out.d_g_bias += da;
  }
  out.value /= n;
  return out;
}

}  // namespace

HeadLoss loss_in(const Vector& energies_id, DetectorHead head, double eta) {
  return sigmoid_energy_loss(energies_id, head, eta, 1.0);
}

HeadLoss loss_out(const Vector& energies_wild, DetectorHead head, double eta) {
  return sigmoid_energy_loss(energies_wild, head, eta, -1.0);
}

AlmTerm alm_in(double l_in_value, const MultiplierState& state,
               const Hyperparams& hp) {
  const double c = l_in_value - hp.fpr_cutoff;
  return {state.lambda_in_mult * c + 0.5 * hp.lambda_in_penalty * c * c,
          state.lambda_in_mult + hp.lambda_in_penalty * c};
}

double adaptive_weight(double d_id, double d_cov, const Hyperparams& hp) {
  if (!(hp.delta_max > 0.0)) throw std::invalid_argument("delta_max must be positive");
  return hp.lambda_base * (1.0 + std::min((d_id + d_cov) / hp.delta_max, 1.0));
}

TemporalTerm temporal_loss(const TemporalState& state, double s_in_t,
                           double s_cov_t, const Hyperparams& hp, int t) {
  TemporalTerm out;
  if (t == 0 || !state.has_previous()) return out;

  const double raw_id = *state.prev_in_score - s_in_t;
  const double raw_cov = s_cov_t - *state.prev_cov_score;
  out.d_id = std::max(0.0, raw_id);
  out.d_cov = std::max(0.0, raw_cov);
  const double d_tot = out.d_id + out.d_cov;
  if (d_tot <= hp.epsilon) return out;

  out.w_temp = adaptive_weight(out.d_id, out.d_cov, hp);
  out.l_temp = out.w_temp * d_tot;

  // d l / d d_tot = w + d_tot * dw/d d_tot; the ramp is flat past delta_max.
  double dl_dtot = out.w_temp;
  if (d_tot < hp.delta_max) dl_dtot += d_tot * hp.lambda_base / hp.delta_max;
  out.d_s_in = raw_id > 0.0 ? -dl_dtot : 0.0;
  out.d_s_cov = raw_cov > 0.0 ? dl_dtot : 0.0;
  return out;
}

LossBreakdown total_loss(double ce, double l_out, double alm_in_value,
                         double l_temp, const Hyperparams& hp) {
  LossBreakdown b;
  b.ce = ce;
  b.l_out = l_out;
  b.alm_in = alm_in_value;
  b.l_temp = l_temp;
  b.total = ce + hp.lambda_out * l_out + alm_in_value + l_temp;
  return b;
}

MultiplierState update_multipliers(const MultiplierState& state,
                                   double l_in_epoch, double ce_epoch,
                                   const Hyperparams& hp) {
  MultiplierState next = state;
  next.lambda_in_mult = std::max(
      0.0, state.lambda_in_mult + hp.lr_lambda * (l_in_epoch - hp.fpr_cutoff));
  next.lambda_ce_mult = std::max(
      0.0, state.lambda_ce_mult +
               hp.lr_lambda * (ce_epoch - hp.ce_tol * state.baseline_ce));
  return next;
}

}  // namespace tempscone
