#include "tempscone/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tempscone {

double fit_threshold(std::span<const double> id_scores, double target_tpr) {
  if (id_scores.size() < 20) {
    throw std::invalid_argument("fit_threshold needs at least 20 ID scores, got " +
                                std::to_string(id_scores.size()));
  }
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) {
    throw std::invalid_argument("target_tpr must lie in (0, 1]");
  }
  std::vector<double> sorted(id_scores.begin(), id_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  // Largest k with (n - k) / n >= target_tpr; the slack absorbs rounding in
  // (1 - target) * n.
  const auto k = static_cast<std::size_t>(std::floor((1.0 - target_tpr) * n + 1e-9));
  const double lowest = -std::numeric_limits<double>::infinity();
  if (k == 0) return std::nextafter(sorted.front(), lowest);
  const double rank = sorted[k - 1];
  // Ties at the rank score are rejected by the strict rule; fall back to the
  // next smaller distinct score, which leaves at least n - k + 1 above it.
  const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), rank);
  if (static_cast<double>(above) >= target_tpr * n - 1e-9) return rank;
  const auto first_tied = std::lower_bound(sorted.begin(), sorted.end(), rank);
  if (first_tied == sorted.begin()) return std::nextafter(rank, lowest);
  return *(first_tied - 1);
}

double fpr_at_tpr(std::span<const double> id_scores,
                  std::span<const double> ood_scores, double target_tpr) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw std::invalid_argument("fpr_at_tpr: empty score set");
  }
  const double lambda = fit_threshold(id_scores, target_tpr);
  const auto accepted = std::count_if(ood_scores.begin(), ood_scores.end(),
                                      [lambda](double s) { return s > lambda; });
  return static_cast<double>(accepted) / static_cast<double>(ood_scores.size());
}

double accuracy(const Logits& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw DimensionError("accuracy labels", logits.rows(), static_cast<long>(labels.size()));
  }
  if (labels.empty()) throw std::invalid_argument("accuracy: empty batch");
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    if (best == labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<double> detection_scores(const ModelParams& params, const Matrix& features) {
  const Vector e = energy(forward(params, features));
  std::vector<double> s(static_cast<std::size_t>(e.size()));
  for (Eigen::Index i = 0; i < e.size(); ++i) s[static_cast<std::size_t>(i)] = -e(i);
  return s;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

MetricsRecord evaluate_timestep(const ModelParams& params, const EvalSplits& splits,
                                const Hyperparams& hp, double atc_delta,
                                const TemporalState& temporal) {
  if (!is_test_split(splits.id.tag) || !is_test_split(splits.cov.tag) ||
      !is_test_split(splits.sem.tag)) {
    throw std::logic_error("evaluate_timestep must only see held-out test splits");
  }
  MetricsRecord r;
  r.t = splits.t;

  const Logits id_logits = forward(params, splits.id.data.features);
  const Logits cov_logits = forward(params, splits.cov.data.features);
  const Logits sem_logits = forward(params, splits.sem.features);

  r.id_acc = accuracy(id_logits, splits.id.data.labels);
  r.ood_acc = accuracy(cov_logits, splits.cov.data.labels);

  const auto id_det = to_std(-energy(id_logits));
  const auto sem_det = to_std(-energy(sem_logits));
  r.lambda_threshold = fit_threshold(id_det);
  r.fpr95 = fpr_at_tpr(id_det, sem_det);

  const Matrix id_probs = softmax(id_logits);
  const Matrix cov_probs = softmax(cov_logits);
  r.atc_in = hard_atc(to_std(unit_scores(id_probs, hp.score_kind)), atc_delta);
  r.atc_cov = hard_atc(to_std(unit_scores(cov_probs, hp.score_kind)), atc_delta);
  r.ac_in = diff_ac(id_probs).value;
  r.ac_cov = diff_ac(cov_probs).value;

  for (auto it = temporal.history.rbegin(); it != temporal.history.rend(); ++it) {
    if (it->t == splits.t) {
      r.drift_d_id = it->d_id;
      r.drift_d_cov = it->d_cov;
      break;
    }
  }
  return r;
}

const std::vector<std::string>& metrics_csv_columns() {
  static const std::vector<std::string> cols{
      "t",           "id_acc",      "ood_acc",     "fpr95",        "lambda_threshold",
      "atc_in",      "atc_cov",     "ac_in",       "ac_cov",       "drift_d_id",
      "drift_d_cov", "lambda_in_mult", "lambda_ce_mult", "loss_ce", "loss_l_in",
      "loss_l_out",  "loss_alm_in", "loss_l_temp", "loss_w_temp",  "loss_total"};
  return cols;
}

std::string metrics_csv_header() {
  std::string out;
  for (const auto& c : metrics_csv_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<double> metric_values(const MetricsRecord& r) {
  return {r.id_acc,      r.ood_acc,        r.fpr95,          r.lambda_threshold, r.atc_in,
          r.atc_cov,     r.ac_in,          r.ac_cov,         r.drift_d_id,       r.drift_d_cov,
          r.lambda_in_mult, r.lambda_ce_mult, r.loss.ce,     r.loss.l_in,        r.loss.l_out,
          r.loss.alm_in, r.loss.l_temp,    r.loss.w_temp,    r.loss.total};
}

std::string to_csv_row(const MetricsRecord& r) {
  std::string out = std::to_string(r.t);
  for (double v : metric_values(r)) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

nlohmann::json to_json(const MetricsRecord& r) {
  return {
      {"t", r.t},
      {"id_acc", r.id_acc},
      {"ood_acc", r.ood_acc},
      {"fpr95", r.fpr95},
      {"lambda_threshold", r.lambda_threshold},
      {"atc_in", r.atc_in},
      {"atc_cov", r.atc_cov},
      {"ac_in", r.ac_in},
      {"ac_cov", r.ac_cov},
      {"drift_d_id", r.drift_d_id},
      {"drift_d_cov", r.drift_d_cov},
      {"lambda_in_mult", r.lambda_in_mult},
      {"lambda_ce_mult", r.lambda_ce_mult},
      {"loss",
       {{"ce", r.loss.ce},
        {"l_in", r.loss.l_in},
        {"l_out", r.loss.l_out},
        {"alm_in", r.loss.alm_in},
        {"l_temp", r.loss.l_temp},
        {"w_temp", r.loss.w_temp},
        {"total", r.loss.total}}},
  };
}

}  // namespace tempscone
