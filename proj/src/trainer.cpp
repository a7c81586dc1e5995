#include "tempscone/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tempscone {
namespace {

constexpr std::uint32_t kInitPurpose = 300;
constexpr std::uint32_t kShufflePurpose = 301;

Matrix take_rows(const Matrix& x, std::span<const int> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<int> take_labels(std::span<const int> labels, std::span<const int> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(labels[static_cast<std::size_t>(r)]);
  return out;
}

std::vector<int> iota_perm(int n, std::mt19937_64& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

std::string describe(const LossBreakdown& b) {
  std::ostringstream os;
  os << "ce=" << b.ce << " l_in=" << b.l_in << " l_out=" << b.l_out
     << " alm_in=" << b.alm_in << " l_temp=" << b.l_temp << " w_temp=" << b.w_temp
     << " total=" << b.total;
  return os.str();
}

struct BreakdownMean {
  LossBreakdown sum;
  int count = 0;

  void add(const LossBreakdown& b) {
    sum.ce += b.ce;
    sum.l_in += b.l_in;
    sum.l_out += b.l_out;
    sum.alm_in += b.alm_in;
    sum.l_temp += b.l_temp;
    sum.w_temp += b.w_temp;
    ++count;
  }

  LossBreakdown mean(const Hyperparams& hp) const {
    if (count == 0) return {};
    const double n = count;
    LossBreakdown m = total_loss(sum.ce / n, sum.l_out / n, sum.alm_in / n, sum.l_temp / n, hp);
    m.l_in = sum.l_in / n;
    m.w_temp = sum.w_temp / n;
    return m;
  }
};

// Flags of whether argmax predictions match labels.
std::vector<bool> correct_flags(const Logits& logits, std::span<const int> labels) {
  std::vector<bool> ok(labels.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    ok[static_cast<std::size_t>(i)] = best == labels[static_cast<std::size_t>(i)];
  }
  return ok;
}

double fit_atc_delta(const ModelParams& params, const TaggedLabeled& validation,
                     ScoreKind kind) {
  const Logits z = forward(params, validation.data.features);
  const Vector s = unit_scores(softmax(z), kind);
  const std::vector<double> scores(s.data(), s.data() + s.size());
  return atc_threshold(scores, correct_flags(z, validation.data.labels));
}

int minibatch_count(int n, int batch_size) { return (n + batch_size - 1) / batch_size; }

std::pair<int, int> slice(int total, int parts, int b) {
  const auto lo = static_cast<long long>(total) * b / parts;
  const auto hi = static_cast<long long>(total) * (b + 1) / parts;
  return {static_cast<int>(lo), static_cast<int>(hi)};
}

void commit_probe_scores(TrainerState& state, const TrainingSplits& splits,
                         const Hyperparams& hp, int t) {
  const auto eval = evaluate_temporal(state.params, splits.probe_id.features,
                                      splits.probe_cov.features, state.temporal, hp,
                                      state.atc_delta, t);
  state.temporal.commit(eval.s_in, eval.s_cov);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::Scone: return "scone";
    case Method::TempSconeATC: return "temp_scone_atc";
    case Method::TempSconeAC: return "temp_scone_ac";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "scone") return Method::Scone;
  if (name == "temp_scone_atc") return Method::TempSconeATC;
  if (name == "temp_scone_ac") return Method::TempSconeAC;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected scone, temp_scone_atc or temp_scone_ac)");
}

OptimizerConfig desk_optimizer_defaults() {
  OptimizerConfig cfg;
  cfg.base_lr = 0.05;
  return cfg;
}

void RunConfig::validate() const {
  stream.validate();
  optimizer.validate();
  hyper.validate();
  if (epochs_per_timestep < 0) throw std::invalid_argument("epochs_per_timestep must be >= 0");
  if (probe_size < 1) throw std::invalid_argument("probe_size must be >= 1");
  if (hidden_widths.empty()) throw std::invalid_argument("hidden_widths must not be empty");
  for (int w : hidden_widths)
    if (w < 1) throw std::invalid_argument("hidden widths must be positive");
  if (!(distinct_lr_multiplier > 0.0)) {
    throw std::invalid_argument("distinct_lr_multiplier must be positive");
  }
}

Hyperparams RunConfig::effective_hyper() const {
  Hyperparams hp = hyper;
  if (method == Method::Scone) hp.lambda_base = 0.0;
  return hp;
}

TemporalMode RunConfig::temporal_mode() const {
  return method == Method::TempSconeAC ? TemporalMode::AC : TemporalMode::ATC;
}

std::vector<int> RunConfig::layer_widths() const {
  std::vector<int> w{stream.input_dim};
  w.insert(w.end(), hidden_widths.begin(), hidden_widths.end());
  w.push_back(stream.num_classes);
  return w;
}

TrainerState initial_state(const RunConfig& cfg) {
  TrainerState s;
  const auto widths = cfg.layer_widths();
  auto rng = sub_rng(cfg.seed, 0, kInitPurpose);
  s.params = init_params(widths, rng());
  s.temporal.mode = cfg.temporal_mode();
  s.atc_delta = cfg.hyper.delta;
  return s;
}

Matrix mix_batches(const Matrix& id_batch, const Matrix& cov_batch, const Matrix& sem_batch,
                   std::mt19937_64& rng) {
  const auto d = std::max({id_batch.cols(), cov_batch.cols(), sem_batch.cols()});
  for (const Matrix* m : {&id_batch, &cov_batch, &sem_batch}) {
    if (m->rows() > 0 && m->cols() != d) throw DimensionError("mix_batches width", d, m->cols());
  }
  Matrix all(id_batch.rows() + cov_batch.rows() + sem_batch.rows(), d);
  Eigen::Index at = 0;
  for (const Matrix* m : {&id_batch, &cov_batch, &sem_batch}) {
    if (m->rows() == 0) continue;
    all.middleRows(at, m->rows()) = *m;
    at += m->rows();
  }
  const auto perm = iota_perm(static_cast<int>(all.rows()), rng);
  return take_rows(all, perm);
}

TemporalEvaluation evaluate_temporal(const ModelParams& params, const Matrix& probe_id,
                                     const Matrix& probe_cov, const TemporalState& state,
                                     const Hyperparams& hp, double atc_delta, int t) {
  const ForwardTrace trace_in = forward_trace(params, probe_id);
  const ForwardTrace trace_cov = forward_trace(params, probe_cov);
  const Matrix probs_in = softmax(trace_in.logits());
  const Matrix probs_cov = softmax(trace_cov.logits());

  auto score = [&](const Matrix& probs) {
    return state.mode == TemporalMode::ATC
               ? diff_atc(probs, hp.score_kind, atc_delta, hp.omega)
               : diff_ac(probs);
  };
  const SmoothScore s_in = score(probs_in);
  const SmoothScore s_cov = score(probs_cov);

  TemporalEvaluation out;
  out.s_in = s_in.value;
  out.s_cov = s_cov.value;
  out.term = temporal_loss(state, s_in.value, s_cov.value, hp, t);
  if (out.term.d_s_in != 0.0 || out.term.d_s_cov != 0.0) {
    out.grads = ModelParams::zeros_like(params);
    if (out.term.d_s_in != 0.0) {
      const Matrix dz = softmax_backward(probs_in, out.term.d_s_in * s_in.d_probs);
      out.grads.add_scaled(backward(params, trace_in, dz), 1.0);
    }
    if (out.term.d_s_cov != 0.0) {
      const Matrix dz = softmax_backward(probs_cov, out.term.d_s_cov * s_cov.d_probs);
      out.grads.add_scaled(backward(params, trace_cov, dz), 1.0);
    }
  }
  return out;
}

MinibatchLoss minibatch_loss(const ModelParams& params, const Matrix& x_in,
                             std::span<const int> y_in, const Matrix& x_aux,
                             const MultiplierState& multipliers, const Hyperparams& hp) {
  const DetectorHead head = DetectorHead::of(params);
  const ForwardTrace trace_in = forward_trace(params, x_in);
  const ForwardTrace trace_aux = forward_trace(params, x_aux);
  const Matrix& z_in = trace_in.logits();
  const Matrix& z_aux = trace_aux.logits();

  const CrossEntropy ce = cross_entropy(z_in, y_in);
  const Matrix probs_in = softmax(z_in);
  const Matrix probs_aux = softmax(z_aux);
  const HeadLoss l_in = loss_in(energy(z_in), head, hp.eta);
  const HeadLoss l_out = loss_out(energy(z_aux), head, hp.eta);
  const AlmTerm alm = alm_in(l_in.value, multipliers, hp);

  MinibatchLoss out;
  out.loss = total_loss(ce.loss, l_out.value, alm.value, 0.0, hp);
  out.loss.l_in = l_in.value;

  const Matrix dz_in =
      ce.d_logits + energy_backward(probs_in, alm.d_l_in * l_in.d_energy);
  const Matrix dz_aux = energy_backward(probs_aux, hp.lambda_out * l_out.d_energy);
  out.grads = backward(params, trace_in, dz_in);
  out.grads.add_scaled(backward(params, trace_aux, dz_aux), 1.0);
  out.grads.g_weight = alm.d_l_in * l_in.d_g_weight + hp.lambda_out * l_out.d_g_weight;
  out.grads.g_bias = alm.d_l_in * l_in.d_g_bias + hp.lambda_out * l_out.d_g_bias;
  return out;
}

MetricsRecord train_initial(TrainerState& state, const DomainSnapshot& snap,
                            const RunConfig& cfg, const StepObserver& observer) {
  const int t = snap.t;
  const Hyperparams hp = cfg.effective_hyper();
  const TrainingSplits splits = make_training_splits(cfg.stream, snap, cfg.probe_size);
  const auto& train = splits.train.data;
  const int n = static_cast<int>(train.size());
  const int batches = minibatch_count(n, cfg.optimizer.batch_size);
  const int total_steps = cfg.epochs_per_timestep * batches;
  NesterovSgd sgd(cfg.optimizer);
  auto rng = sub_rng(cfg.seed, t, kShufflePurpose);

  BreakdownMean last_epoch;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_timestep; ++epoch) {
    last_epoch = {};
    const auto perm = iota_perm(n, rng);
    for (int b = 0; b < batches; ++b) {
      const auto [lo, hi] = slice(n, batches, b);
      const std::span<const int> rows(perm.data() + lo, static_cast<std::size_t>(hi - lo));
      const ForwardTrace trace = forward_trace(state.params, take_rows(train.features, rows));
      const CrossEntropy ce = cross_entropy(trace.logits(), take_labels(train.labels, rows));
      const LossBreakdown loss = total_loss(ce.loss, 0.0, 0.0, 0.0, hp);
      if (!std::isfinite(loss.total)) {
        throw std::runtime_error("non-finite loss at t=" + std::to_string(t) + ": " +
                                 describe(loss));
      }
      sgd.step(state.params, backward(state.params, trace, ce.d_logits), step, total_steps);
      last_epoch.add(loss);
      if (observer) observer(t, epoch, step, state.params, loss);
      ++step;
    }
  }

  if (hp.delta_mode != DeltaMode::Fixed) {
    state.atc_delta = fit_atc_delta(state.params, splits.validation, hp.score_kind);
  }
  commit_probe_scores(state, splits, hp, t);

  MetricsRecord r = evaluate_timestep(state.params, make_eval_splits(cfg.stream, snap), hp,
                                      state.atc_delta, state.temporal);
  r.loss = last_epoch.mean(hp);
  r.lambda_in_mult = state.multipliers.lambda_in_mult;
  r.lambda_ce_mult = state.multipliers.lambda_ce_mult;
  return r;
}

MetricsRecord train_timestep(TrainerState& state, const DomainSnapshot& snap,
                             const RunConfig& cfg, const StepObserver& observer) {
  const int t = snap.t;
  const Hyperparams hp = cfg.effective_hyper();
  const TrainingSplits splits = make_training_splits(cfg.stream, snap, cfg.probe_size);
  const auto& train = splits.train.data;
  const int n = static_cast<int>(train.size());
  const int batches = minibatch_count(n, cfg.optimizer.batch_size);
  const int total_steps = std::max(1, cfg.epochs_per_timestep * batches);
  const double lr_scale =
      cfg.stream.regime == Regime::Distinct && t > 0 ? cfg.distinct_lr_multiplier : 1.0;
  NesterovSgd sgd(cfg.optimizer, lr_scale);
  auto rng = sub_rng(cfg.seed, t, kShufflePurpose);

  // Frozen before any update of this timestep.
  state.multipliers.baseline_ce =
      cross_entropy(forward(state.params, train.features), train.labels).loss;

  BreakdownMean last_epoch;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs_per_timestep; ++epoch) {
    last_epoch = {};
    const TemporalEvaluation temporal =
        evaluate_temporal(state.params, splits.probe_id.features, splits.probe_cov.features,
                          state.temporal, hp, state.atc_delta, t);
    state.temporal.history.push_back(
        {t, temporal.term.l_temp, temporal.term.w_temp, temporal.term.d_id, temporal.term.d_cov});
    const bool has_temporal_grad = !temporal.grads.weights.empty();

    const auto perm = iota_perm(n, rng);
    const Matrix wild = mix_batches(splits.wild.id, splits.wild.cov, splits.wild.sem, rng);
    const int m = static_cast<int>(wild.rows());
    for (int b = 0; b < batches; ++b) {
      const auto [lo, hi] = slice(n, batches, b);
      const std::span<const int> rows(perm.data() + lo, static_cast<std::size_t>(hi - lo));
      const auto [wlo, whi] = slice(m, batches, b);
      MinibatchLoss mb =
          minibatch_loss(state.params, take_rows(train.features, rows),
                         take_labels(train.labels, rows), wild.middleRows(wlo, whi - wlo),
                         state.multipliers, hp);
      mb.loss.l_temp = temporal.term.l_temp;
      mb.loss.w_temp = temporal.term.w_temp;
      mb.loss.total += temporal.term.l_temp;
      if (!std::isfinite(mb.loss.total)) {
        throw std::runtime_error("non-finite loss at t=" + std::to_string(t) + ", epoch " +
                                 std::to_string(epoch) + ": " + describe(mb.loss));
      }
      if (has_temporal_grad) mb.grads.add_scaled(temporal.grads, 1.0 / batches);
      sgd.step(state.params, mb.grads, step, total_steps);
      last_epoch.add(mb.loss);
      if (observer) observer(t, epoch, step, state.params, mb.loss);
      ++step;
    }

    const Logits z = forward(state.params, train.features);
    const double l_in_epoch = loss_in(energy(z), DetectorHead::of(state.params), hp.eta).value;
    const double ce_epoch = cross_entropy(z, train.labels).loss;
    state.multipliers = update_multipliers(state.multipliers, l_in_epoch, ce_epoch, hp);
  }

  if (hp.delta_mode == DeltaMode::Refit) {
    state.atc_delta = fit_atc_delta(state.params, splits.validation, hp.score_kind);
  }
  commit_probe_scores(state, splits, hp, t);

  MetricsRecord r = evaluate_timestep(state.params, make_eval_splits(cfg.stream, snap), hp,
                                      state.atc_delta, state.temporal);
  r.loss = last_epoch.mean(hp);
  r.lambda_in_mult = state.multipliers.lambda_in_mult;
  r.lambda_ce_mult = state.multipliers.lambda_ce_mult;
  return r;
}

RunResult run_stream_detailed(const RunConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  RunResult result;
  result.final_state = initial_state(cfg);
  TrainerState& state = result.final_state;
  for (int t = 0; t < cfg.stream.num_timesteps; ++t) {
    const DomainSnapshot snap = make_snapshot(cfg.stream, t);
    result.records.push_back(t == 0 ? train_initial(state, snap, cfg, observer)
                                    : train_timestep(state, snap, cfg, observer));
    result.param_trajectory.push_back(flatten(state.params));
  }
  return result;
}

std::vector<MetricsRecord> run_stream(const RunConfig& cfg) {
  return run_stream_detailed(cfg).records;
}

}  // namespace tempscone
