#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "tempscone/metrics.hpp"

using namespace tempscone;

namespace {

std::vector<double> random_scores(int n, std::mt19937_64& rng, bool coarse) {
  std::normal_distribution<double> d(0.0, 2.0);
  std::vector<double> s(n);
  for (auto& v : s) v = coarse ? std::round(d(rng) * 2.0) / 2.0 : d(rng);
  return s;
}

}  // namespace

TEST(FitThreshold, RankExample) {
  std::vector<double> s(100);
  std::iota(s.begin(), s.end(), 1.0);
  EXPECT_EQ(fit_threshold(s, 0.95), 5.0);
  EXPECT_EQ(oracle::brute_threshold(s, 0.95), 5.0);
}

TEST(FitThreshold, AllTiedStepsBelow) {
  const std::vector<double> s(40, 2.5);
  const double lambda = fit_threshold(s, 0.95);
  EXPECT_EQ(lambda, std::nextafter(2.5, -std::numeric_limits<double>::infinity()));
  EXPECT_EQ(fpr_at_tpr(s, s), 1.0);
}

TEST(FitThreshold, FullAcceptance) {
  std::mt19937_64 rng(1);
  const auto s = random_scores(50, rng, false);
  EXPECT_LT(fit_threshold(s, 1.0), *std::min_element(s.begin(), s.end()));
}

TEST(FitThreshold, TooFewScores) {
  EXPECT_THROW(fit_threshold(std::vector<double>(19, 1.0)), std::invalid_argument);
}

TEST(FitThreshold, RealisedTprWithinOneSample) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 20 + static_cast<int>(rng() % 480);
    const auto s = random_scores(n, rng, false);
    const double target = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
    const double lambda = fit_threshold(s, target);
    const double tpr =
        static_cast<double>(std::count_if(s.begin(), s.end(), [&](double v) { return v > lambda; })) / n;
    EXPECT_GE(tpr, target - 1e-12);
    EXPECT_LE(tpr - target, 1.0 / n + 1e-12);
  }
}

TEST(FprAtTpr, Examples) {
  std::vector<double> id(100);
  std::iota(id.begin(), id.end(), 1.0);
  EXPECT_EQ(fpr_at_tpr(id, std::vector<double>(30, -4.0)), 0.0);
  EXPECT_EQ(fpr_at_tpr(id, std::vector<double>(30, 500.0)), 1.0);
  std::vector<double> perm = id;
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  EXPECT_DOUBLE_EQ(fpr_at_tpr(id, perm), 0.95);
}

TEST(FprAtTpr, MatchesBruteForce) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const bool coarse = trial % 3 == 0;
    const auto id = random_scores(20 + static_cast<int>(rng() % 200), rng, coarse);
    const auto ood = random_scores(1 + static_cast<int>(rng() % 200), rng, coarse);
    EXPECT_EQ(fpr_at_tpr(id, ood), oracle::brute_fpr(id, ood)) << "trial " << trial;
  }
}

TEST(FprAtTpr, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto id = random_scores(100, rng, trial % 2 == 0);
    const auto ood = random_scores(80, rng, trial % 2 == 0);
    auto transform = [](std::vector<double> v) {
      for (auto& x : v) x = std::exp(0.7 * x) + 3.0;
      return v;
    };
    EXPECT_EQ(fpr_at_tpr(id, ood), fpr_at_tpr(transform(id), transform(ood)));
  }
}

TEST(Accuracy, Examples) {
  Matrix z = Matrix::Zero(3, 3);
  const std::vector<int> y{2, 0, 1};
  for (int i = 0; i < 3; ++i) z(i, y[i]) = 1.0;
  EXPECT_EQ(accuracy(z, y), 1.0);
  EXPECT_EQ(accuracy(Matrix::Zero(4, 3), std::vector<int>(4, 0)), 1.0);
  EXPECT_EQ(accuracy(Matrix::Zero(4, 3), std::vector<int>(4, 1)), 0.0);
}

TEST(Accuracy, MatchesRowLoop) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    // Integer-valued logits make ties common.
    Matrix z = oracle::random_matrix(30, 4, rng, 1.0).array().round();
    const auto y = oracle::random_labels(30, 4, rng);
    int hits = 0;
    for (int i = 0; i < 30; ++i) {
      int best = 0;
      for (int j = 0; j < 4; ++j)
        if (z(i, j) > z(i, best)) best = j;
      hits += best == y[i];
    }
    EXPECT_EQ(accuracy(z, y), hits / 30.0);
  }
}

TEST(EvaluateTimestep, ZeroModelPredictsFirstClass) {
  StreamConfig cfg;
  cfg.samples_per_split = 400;
  const auto snap = make_snapshot(cfg, 0);
  ModelParams p = init_params(std::vector<int>{8, 16, 4}, 1);
  for (auto& w : p.weights) w.setZero();
  for (auto& b : p.biases) b.setZero();
  const auto r = evaluate_timestep(p, make_eval_splits(cfg, snap), Hyperparams{}, 0.5, TemporalState{});
  EXPECT_DOUBLE_EQ(r.id_acc, 0.25);
  EXPECT_DOUBLE_EQ(r.ood_acc, 0.25);
}

TEST(EvaluateTimestep, IdenticalScoreDistributions) {
  StreamConfig cfg;
  cfg.samples_per_split = 2000;
  auto snap = make_snapshot(cfg, 0);
  snap.sem_class_means = snap.id_class_means;
  const auto splits = make_eval_splits(cfg, snap);
  const ModelParams p = init_params(std::vector<int>{8, 16, 4}, 3);
  const auto r = evaluate_timestep(p, splits, Hyperparams{}, 0.5, TemporalState{});
  const auto id = detection_scores(p, splits.id.data.features);
  const auto sem = detection_scores(p, splits.sem.features);
  EXPECT_EQ(r.fpr95, oracle::brute_fpr(id, sem));
  EXPECT_NEAR(r.fpr95, 0.95, 0.02);
}

TEST(EvaluateTimestep, RejectsNonTestSplits) {
  StreamConfig cfg;
  cfg.samples_per_split = 64;
  auto splits = make_eval_splits(cfg, make_snapshot(cfg, 0));
  splits.id.tag = SplitTag::Train;
  const ModelParams p = init_params(std::vector<int>{8, 4}, 0);
  EXPECT_THROW(evaluate_timestep(p, splits, Hyperparams{}, 0.5, TemporalState{}), std::logic_error);
}

TEST(Csv, FrozenHeader) {
  EXPECT_EQ(metrics_csv_header(),
            "t,id_acc,ood_acc,fpr95,lambda_threshold,atc_in,atc_cov,ac_in,ac_cov,drift_d_id,"
            "drift_d_cov,lambda_in_mult,lambda_ce_mult,loss_ce,loss_l_in,loss_l_out,loss_alm_in,"
            "loss_l_temp,loss_w_temp,loss_total");
  MetricsRecord r;
  r.t = 3;
  r.id_acc = 0.1;
  const std::string row = to_csv_row(r);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 19);
  EXPECT_EQ(row.substr(0, 6), "3,0.1,");
}

TEST(Csv, DoublesRoundTrip) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Json, RecordFields) {
  MetricsRecord r;
  r.t = 2;
  r.fpr95 = 0.25;
  r.loss.total = 1.5;
  const auto j = to_json(r);
  EXPECT_EQ(j["t"], 2);
  EXPECT_EQ(j["fpr95"], 0.25);
  EXPECT_EQ(j["loss"]["total"], 1.5);
}
