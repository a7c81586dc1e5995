#include "tempscone/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tempscone {
namespace {

constexpr double kRowSumTolerance = 1e-6;
constexpr double kTinyProb = 1e-300;

void check_probability_rows(const Matrix& probs) {
  if (probs.cols() < 2) {
    throw std::invalid_argument("probability rows need at least 2 classes");
  }
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    if (!row.allFinite() || row.minCoeff() < 0.0 ||
        std::abs(row.sum() - 1.0) > kRowSumTolerance) {
      throw std::invalid_argument("row " + std::to_string(i) +
                                  " is not a probability vector");
    }
  }
}

Eigen::Index argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row(j) > row(best)) best = j;
  return best;
}

double neg_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j)
    if (row(j) > 0.0) s += row(j) * std::log(row(j));
  return s;
}

}  // namespace

Vector confidence_scores(const Matrix& probs, ScoreKind kind) {
  check_probability_rows(probs);
  Vector s(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    s(i) = kind == ScoreKind::MaxConfidence ? probs.row(i).maxCoeff()
                                            : neg_entropy(probs.row(i));
  }
  return s;
}

Vector unit_scores(const Matrix& probs, ScoreKind kind) {
  Vector s = confidence_scores(probs, kind);
  if (kind == ScoreKind::NegEntropy) {
    const double log_k = std::log(static_cast<double>(probs.cols()));
    s = (1.0 + s.array() / log_k).matrix();
  }
  return s;
}

Matrix unit_scores_backward(const Matrix& probs, ScoreKind kind,
                            const Vector& d_scores) {
  Matrix d = Matrix::Zero(probs.rows(), probs.cols());
  if (kind == ScoreKind::MaxConfidence) {
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
      d(i, argmax_lowest(probs.row(i))) = d_scores(i);
    return d;
  }
  const double log_k = std::log(static_cast<double>(probs.cols()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const double p = std::max(probs(i, j), kTinyProb);
      d(i, j) = d_scores(i) * (std::log(p) + 1.0) / log_k;
    }
  }
  return d;
}

double atc_threshold(std::span<const double> val_scores,
                     const std::vector<bool>& val_correct) {
  if (val_scores.empty()) throw std::invalid_argument("atc_threshold: empty input");
  if (val_scores.size() != val_correct.size()) {
    throw DimensionError("atc_threshold correctness flags",
                         static_cast<long>(val_scores.size()),
                         static_cast<long>(val_correct.size()));
  }
  const auto wrong = std::count(val_correct.begin(), val_correct.end(), false);

  std::vector<double> sorted(val_scores.begin(), val_scores.end());
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> candidates;
  candidates.reserve(sorted.size() + 1);
  candidates.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    candidates.push_back(0.5 * (sorted[i - 1] + sorted[i]));
  candidates.push_back(std::numeric_limits<double>::infinity());

  // Gaps compared as integer counts so equal distances tie exactly.
  double best = candidates.front();
  auto best_gap = std::numeric_limits<std::ptrdiff_t>::max();
  for (double c : candidates) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), c) - sorted.begin();
    const auto gap = std::abs(below - static_cast<std::ptrdiff_t>(wrong));
    if (gap < best_gap) {
      best_gap = gap;
      best = c;
    }
  }
  return best;
}

double hard_atc(std::span<const double> scores, double delta) {
  if (scores.empty()) throw std::invalid_argument("hard_atc: empty input");
  const auto below =
      std::count_if(scores.begin(), scores.end(), [delta](double s) { return s < delta; });
  return static_cast<double>(below) / static_cast<double>(scores.size());
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

SmoothScore diff_atc(const Matrix& probs, ScoreKind kind, double delta,
                     double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("diff_atc: omega must be > 0");
  if (probs.rows() == 0) throw std::invalid_argument("diff_atc: empty input");
  const Vector s = unit_scores(probs, kind);
  const auto n = static_cast<double>(s.size());
  Vector d_s(s.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double sig = sigmoid((delta - s(i)) / omega);
    total += sig;
    d_s(i) = -sig * (1.0 - sig) / (omega * n);
  }
  return {total / n, unit_scores_backward(probs, kind, d_s)};
}

SmoothScore diff_ac(const Matrix& probs) {
  if (probs.rows() == 0) throw std::invalid_argument("diff_ac: empty input");
  const Vector s = confidence_scores(probs, ScoreKind::MaxConfidence);
  const auto n = static_cast<double>(s.size());
  const Vector d_s = Vector::Constant(s.size(), 1.0 / n);
  return {s.sum() / n,
          unit_scores_backward(probs, ScoreKind::MaxConfidence, d_s)};
}

constexpr double kShiftSlack = 1e-12;

bool temporal_shift_detected(double score_t, double score_prev, double epsilon) {
  // Scores live in [0, 1]; the slack keeps |0.9 - 0.85| <= 0.05 non-strict.
  return std::abs(score_t - score_prev) > epsilon + kShiftSlack;
}

void TemporalState::commit(double in_score, double cov_score) {
  if (!(in_score >= 0.0 && in_score <= 1.0) ||
      !(cov_score >= 0.0 && cov_score <= 1.0)) {
    throw std::out_of_range("temporal scores must lie in [0, 1]");
  }
  prev_in_score = in_score;
  prev_cov_score = cov_score;
}

}  // namespace tempscone
