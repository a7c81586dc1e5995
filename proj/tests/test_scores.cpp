#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "tempscone/scores.hpp"

using namespace tempscone;

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix one_hot_rows(int n, int k) {
  Matrix p = Matrix::Zero(n, k);
  for (int i = 0; i < n; ++i) p(i, i % k) = 1.0;
  return p;
}

}  // namespace

TEST(ConfidenceScores, Examples) {
  EXPECT_DOUBLE_EQ(confidence_scores(Matrix::Constant(1, 4, 0.25), ScoreKind::MaxConfidence)(0),
                   0.25);
  EXPECT_EQ(confidence_scores(one_hot_rows(1, 4), ScoreKind::NegEntropy)(0), 0.0);
  EXPECT_NEAR(confidence_scores(Matrix::Constant(1, 4, 0.25), ScoreKind::NegEntropy)(0),
              -1.386294, 1e-6);
}

TEST(ConfidenceScores, RangesOnRandomRows) {
  std::mt19937_64 rng(1);
  for (int k = 2; k <= 10; ++k) {
    const Matrix p = oracle::random_probs(50, k, rng, 3.0);
    const Vector mc = confidence_scores(p, ScoreKind::MaxConfidence);
    const Vector ne = confidence_scores(p, ScoreKind::NegEntropy);
    EXPECT_GE(mc.minCoeff(), 1.0 / k - 1e-12);
    EXPECT_LE(mc.maxCoeff(), 1.0);
    EXPECT_GE(ne.minCoeff(), -std::log(static_cast<double>(k)) - 1e-12);
    EXPECT_LE(ne.maxCoeff(), 1e-15);
    const Vector ue = unit_scores(p, ScoreKind::NegEntropy);
    EXPECT_GE(ue.minCoeff(), -1e-12);
    EXPECT_LE(ue.maxCoeff(), 1.0 + 1e-12);
  }
}

TEST(ConfidenceScores, MalformedRowsRejected) {
  Matrix p(1, 3);
  p << 0.5, 0.2, 0.2;
  EXPECT_THROW(confidence_scores(p, ScoreKind::MaxConfidence), std::invalid_argument);
  p << 1.2, -0.2, 0.0;
  EXPECT_THROW(confidence_scores(p, ScoreKind::NegEntropy), std::invalid_argument);
}

TEST(AtcThreshold, AllCorrectGivesZero) {
  const std::vector<double> s{0.3, 0.9, 0.5, 0.7};
  const double d = atc_threshold(s, std::vector<bool>(4, true));
  EXPECT_LE(d, 0.3);
  EXPECT_EQ(hard_atc(s, d), 0.0);
}

TEST(AtcThreshold, AllWrongGivesOne) {
  const std::vector<double> s{0.3, 0.9, 0.5, 0.7};
  const double d = atc_threshold(s, std::vector<bool>(4, false));
  EXPECT_GT(d, 0.9);
  EXPECT_EQ(hard_atc(s, d), 1.0);
}

TEST(AtcThreshold, Midpoint) {
  const std::vector<double> s{0.2, 0.4, 0.6, 0.8};
  const double d = atc_threshold(s, {false, true, false, true});
  EXPECT_DOUBLE_EQ(d, 0.5);
  EXPECT_DOUBLE_EQ(hard_atc(s, d), 0.5);
}

TEST(AtcThreshold, EmptyInputRejected) {
  EXPECT_THROW(atc_threshold(std::vector<double>{}, {}), std::invalid_argument);
}

TEST(AtcThreshold, MatchesScanOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 60);
    std::vector<double> s(n);
    std::vector<bool> c(n);
    for (int i = 0; i < n; ++i) {
      // Coarse grid some of the time to exercise ties.
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      s[i] = trial % 2 ? std::round(u * 8.0) / 8.0 : u;
      c[i] = rng() % 3 != 0;
    }
    EXPECT_EQ(atc_threshold(s, c), oracle::brute_atc_threshold(s, c)) << "trial " << trial;
  }
}

TEST(AtcThreshold, ReproducesAchievableErrorRate) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 10 + static_cast<int>(rng() % 90);
    std::vector<double> s(n);
    for (auto& v : s) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const int wrong = static_cast<int>(rng() % (n + 1));
    std::vector<bool> c(n, true);
    for (int i = 0; i < wrong; ++i) c[i] = false;
    EXPECT_DOUBLE_EQ(hard_atc(s, atc_threshold(s, c)), static_cast<double>(wrong) / n);
  }
}

TEST(HardAtc, Examples) {
  const std::vector<double> s{0.1, 0.5, 0.9};
  EXPECT_EQ(hard_atc(s, 0.05), 0.0);
  EXPECT_EQ(hard_atc(s, 0.95), 1.0);
  EXPECT_DOUBLE_EQ(hard_atc(s, 0.5), 1.0 / 3.0);
}

TEST(HardAtc, MonotoneInDelta) {
  std::mt19937_64 rng(4);
  std::vector<double> s(200);
  for (auto& v : s) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double prev = 0.0;
  for (double d = -0.1; d <= 1.1; d += 0.01) {
    const double a = hard_atc(s, d);
    EXPECT_GE(a, prev);
    prev = a;
  }
}

TEST(DiffAtc, ScoreAtThresholdIsHalf) {
  const Matrix p = Matrix::Constant(3, 4, 0.25);
  EXPECT_DOUBLE_EQ(diff_atc(p, ScoreKind::MaxConfidence, 0.25, 0.1).value, 0.5);
}

TEST(DiffAtc, SaturatesFarAboveThreshold) {
  Matrix p = Matrix::Zero(2, 2);
  p << 0.9, 0.1, 0.2, 0.8;
  // Scores 0.9 and 0.8 sit at least 0.1 above delta = 0.7.
  EXPECT_LE(diff_atc(p, ScoreKind::MaxConfidence, 0.7, 1e-3).value, 1e-40);
}

TEST(DiffAtc, NonPositiveOmegaRejected) {
  const Matrix p = Matrix::Constant(1, 2, 0.5);
  EXPECT_THROW(diff_atc(p, ScoreKind::MaxConfidence, 0.5, 0.0), std::invalid_argument);
  EXPECT_THROW(diff_atc(p, ScoreKind::MaxConfidence, 0.5, -1.0), std::invalid_argument);
}

TEST(DiffAtc, ConvergesToHardAtc) {
  std::mt19937_64 rng(5);
  for (double omega : {1e-1, 1e-2, 1e-3}) {
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix p = oracle::random_probs(300, 3, rng, 2.0);
      const auto s = to_std(unit_scores(p, ScoreKind::MaxConfidence));
      const double delta = std::uniform_real_distribution<double>(0.4, 0.9)(rng);
      std::vector<double> keep_rows;
      Matrix kept(0, 3);
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (std::abs(s[i] - delta) < 0.01) continue;
        kept.conservativeResize(kept.rows() + 1, 3);
        kept.row(kept.rows() - 1) = p.row(static_cast<Eigen::Index>(i));
        keep_rows.push_back(s[i]);
      }
      const double soft = diff_atc(kept, ScoreKind::MaxConfidence, delta, omega).value;
      worst = std::max(worst, std::abs(soft - oracle::brute_hard_atc(keep_rows, delta)));
    }
    // sigmoid(-0.01 / omega) bounds each sample's contribution.
    EXPECT_LE(worst, 1.0 / (1.0 + std::exp(0.01 / omega)) + 1e-12) << "omega " << omega;
    if (omega == 1e-3) {
      EXPECT_LE(worst, 1e-3);
    }
  }
}

TEST(DiffAtc, MonotoneAndLipschitzInDelta) {
  std::mt19937_64 rng(6);
  const Matrix p = oracle::random_probs(100, 4, rng);
  const double omega = 0.05;
  double prev = diff_atc(p, ScoreKind::NegEntropy, -0.2, omega).value;
  for (double d = -0.19; d <= 1.2; d += 0.01) {
    const double v = diff_atc(p, ScoreKind::NegEntropy, d, omega).value;
    EXPECT_GE(v, prev - 1e-15);
    EXPECT_LE(v - prev, 0.01 / (4.0 * omega) + 1e-12);
    prev = v;
  }
}

TEST(SmoothScores, LogitGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  auto check = [](const Matrix& z, const std::function<SmoothScore(const Matrix&)>& f) {
    const Matrix p = softmax(z);
    const Matrix g = softmax_backward(p, f(p).d_probs);
    std::vector<double> analytic, numeric;
    for (int i = 0; i < z.rows(); ++i) {
      for (int j = 0; j < z.cols(); ++j) {
        Matrix up = z, down = z;
        up(i, j) += 1e-4;
        down(i, j) -= 1e-4;
        numeric.push_back((f(softmax(up)).value - f(softmax(down)).value) / 2e-4);
        analytic.push_back(g(i, j));
      }
    }
    return oracle::relative_error(analytic, numeric);
  };
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix z = oracle::random_matrix(6, 3, rng, 1.5);
    for (auto kind : {ScoreKind::MaxConfidence, ScoreKind::NegEntropy}) {
      EXPECT_LE(check(z, [kind](const Matrix& p) { return diff_atc(p, kind, 0.6, 0.1); }), 1e-6);
    }
    EXPECT_LE(check(z, [](const Matrix& p) { return diff_ac(p); }), 1e-6);
  }
}

TEST(DiffAc, Examples) {
  EXPECT_DOUBLE_EQ(diff_ac(one_hot_rows(5, 3)).value, 1.0);
  EXPECT_NEAR(diff_ac(Matrix::Constant(4, 10, 0.1)).value, 0.1, 1e-15);
  Matrix p(2, 2);
  p << 1.0, 0.0, 0.5, 0.5;
  EXPECT_DOUBLE_EQ(diff_ac(p).value, 0.75);
}

TEST(TemporalShift, Examples) {
  for (double eps : {0.0, 0.1, 1.0}) EXPECT_FALSE(temporal_shift_detected(0.4, 0.4, eps));
  EXPECT_TRUE(temporal_shift_detected(0.9, 0.7, 0.1));
  EXPECT_FALSE(temporal_shift_detected(0.9, 0.85, 0.05));
}

TEST(TemporalState, CommitValidatesRange) {
  TemporalState s;
  EXPECT_FALSE(s.has_previous());
  s.commit(0.3, 0.8);
  EXPECT_TRUE(s.has_previous());
  EXPECT_THROW(s.commit(1.2, 0.5), std::out_of_range);
  EXPECT_THROW(s.commit(0.5, -0.1), std::out_of_range);
}
