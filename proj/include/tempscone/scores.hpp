#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tempscone/model.hpp"

namespace tempscone {

enum class ScoreKind { MaxConfidence, NegEntropy };

/// Raw per-row confidence scores. MaxConfidence lies in [1/K, 1];
/// NegEntropy is sum p log p in [-log K, 0] with 0 log 0 = 0.
/// Throws std::invalid_argument on rows that are not probability vectors.
Vector confidence_scores(const Matrix& probs, ScoreKind kind);

/// Scores mapped onto [0, 1] so that thresholds and drift tolerances share a
/// scale across kinds. MaxConfidence is returned as is; NegEntropy is mapped
/// through s -> 1 + s / log K, which is increasing.
Vector unit_scores(const Matrix& probs, ScoreKind kind);

/// d(unit score_i)/d(probs) for row i, stacked into a matrix.
Matrix unit_scores_backward(const Matrix& probs, ScoreKind kind,
                            const Vector& d_scores);

/// Fits the ATC threshold on labelled validation data: the candidate
/// (midpoints of sorted scores plus -inf/+inf) whose below-threshold
/// fraction is closest to the validation error rate, smallest on ties.
double atc_threshold(std::span<const double> val_scores,
                     const std::vector<bool>& val_correct);

/// Fraction of scores strictly below delta.
double hard_atc(std::span<const double> scores, double delta);

double sigmoid(double x);

/// Sigmoid-smoothed ATC, mean_i sigmoid((delta - s_i) / omega).
struct SmoothScore {
  double value = 0.0;
  Matrix d_probs;  // d value / d probs
};

SmoothScore diff_atc(const Matrix& probs, ScoreKind kind, double delta,
                     double omega);

/// Mean max-softmax confidence.
SmoothScore diff_ac(const Matrix& probs);

/// True iff |score_t - score_prev| > epsilon.
bool temporal_shift_detected(double score_t, double score_prev, double epsilon);

enum class TemporalMode { ATC, AC };

struct TemporalHistoryEntry {
  int t = 0;
  double loss = 0.0;
  double weight = 0.0;
  double d_id = 0.0;
  double d_cov = 0.0;
};

/// Scores carried between timesteps for the temporal loss.
struct TemporalState {
  TemporalMode mode = TemporalMode::ATC;
  std::optional<double> prev_in_score;
  std::optional<double> prev_cov_score;
  std::vector<TemporalHistoryEntry> history;

  bool has_previous() const {
    return prev_in_score.has_value() && prev_cov_score.has_value();
  }
  /// Stores the scores of a completed timestep. Both must lie in [0, 1].
  void commit(double in_score, double cov_score);
};

}  // namespace tempscone
