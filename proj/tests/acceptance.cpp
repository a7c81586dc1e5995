// Acceptance checks: one PASS/FAIL line per criterion, tolerances fixed here.
//
// Usage: acceptance [--strict] [--only N[,N...]]
// Without --strict the exit status only reflects whether every check ran;
// with it, any FAIL makes the exit status non-zero.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "tempscone/experiment.hpp"
#include "tempscone/metrics.hpp"
#include "tempscone/theory.hpp"
#include "tempscone/trainer.hpp"

using namespace tempscone;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-4;
constexpr int kGradDraws = 100;
constexpr double kMarginFraction = 0.90;
constexpr int kOracleInstances = 1000;
constexpr int kOracleMaxSize = 500;
constexpr double kSoftHardTol = 1e-3;
constexpr double kSoftOmega = 1e-3;
constexpr double kSoftExclusion = 0.01;
constexpr double kParityTol = 0.03;
constexpr double kChi2IdentityTol = 1e-12;
constexpr double kFisherLo = 0.9999, kFisherHi = 1.0001;
const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3, 4};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<double> energies(const ModelParams& p, const Matrix& x) {
  const Vector e = energy(forward(p, x));
  return {e.data(), e.data() + e.size()};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome scone_reduction() {
  RunConfig a;
  a.stream.num_timesteps = 5;
  a.stream.regime = Regime::Dynamic;
  a.method = Method::Scone;
  RunConfig b = a;
  b.method = Method::TempSconeATC;
  b.hyper.lambda_base = 0.0;
  const auto ra = run_stream_detailed(a);
  const auto rb = run_stream_detailed(b);
  bool same = ra.param_trajectory == rb.param_trajectory && ra.records.size() == rb.records.size();
  for (std::size_t i = 0; same && i < ra.records.size(); ++i) {
    same = to_csv_row(ra.records[i]) == to_csv_row(rb.records[i]);
  }
  return {same, same ? "parameter trajectories and metric rows identical over T=5"
                     : "trajectories or metric rows differ"};
}

Outcome gradient_suite() {
  const auto rep = oracle::gradient_suite(2024, kGradDraws, kGradStep);
  std::string detail;
  bool enough = true;
  for (const auto& [term, err] : rep.max_error) {
    detail += term + "=" + fmt(err, 3) + " ";
    enough = enough && rep.draws.at(term) >= kGradDraws;
  }
  detail += "(max rel err per term over " + std::to_string(kGradDraws) + " draws, tol " +
            fmt(kGradTol) + ")";
  return {enough && rep.worst() <= kGradTol, detail};
}

Outcome energy_margin() {
  std::vector<double> id_frac, sem_frac;
  for (std::uint64_t seed : kSeeds) {
    RunConfig cfg;
    cfg.stream.num_timesteps = 2;
    cfg.stream.drift_angle_per_step = 0.0;
    cfg.stream.class_cov_scale = 0.2;
    cfg.epochs_per_timestep = 10;
    cfg.seed = seed;
    cfg.stream.seed = seed;
    const auto res = run_stream_detailed(cfg);
    const auto splits = make_eval_splits(cfg.stream, make_snapshot(cfg.stream, 1));
    const auto e_id = energies(res.final_state.params, splits.id.data.features);
    const auto e_sem = energies(res.final_state.params, splits.sem.features);
    const double eta = cfg.hyper.eta;
    id_frac.push_back(static_cast<double>(std::count_if(e_id.begin(), e_id.end(),
                                                        [eta](double e) { return e < eta; })) /
                      static_cast<double>(e_id.size()));
    sem_frac.push_back(static_cast<double>(std::count_if(e_sem.begin(), e_sem.end(),
                                                         [](double e) { return e > 0.0; })) /
                       static_cast<double>(e_sem.size()));
  }
  const double mid = median(id_frac), msem = median(sem_frac);
  return {mid >= kMarginFraction && msem >= kMarginFraction,
          "median fraction ID E<eta=" + fmt(mid, 4) + ", semantic E>0=" + fmt(msem, 4) +
              " (need >= " + fmt(kMarginFraction) + ")"};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size_id(20, kOracleMaxSize), size_any(1, kOracleMaxSize);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](int n, bool coarse) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = coarse ? std::round(normal(rng) * 4.0) / 4.0 : normal(rng);
    return v;
  };
  int fpr_mismatch = 0, atc_mismatch = 0, thr_mismatch = 0;
  for (int i = 0; i < kOracleInstances; ++i) {
    const bool coarse = i % 4 == 0;
    const auto id = draw(size_id(rng), coarse);
    const auto ood = draw(size_any(rng), coarse);
    if (fpr_at_tpr(id, ood) != oracle::brute_fpr(id, ood)) ++fpr_mismatch;

    const auto s = draw(size_any(rng), coarse);
    const double delta = normal(rng);
    if (hard_atc(s, delta) != oracle::brute_hard_atc(s, delta)) ++atc_mismatch;
    std::vector<bool> correct(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) correct[j] = rng() % 4 != 0;
    if (atc_threshold(s, correct) != oracle::brute_atc_threshold(s, correct)) ++thr_mismatch;
  }
  return {fpr_mismatch == 0 && atc_mismatch == 0 && thr_mismatch == 0,
          "mismatches over " + std::to_string(kOracleInstances) +
              " instances: fpr_at_tpr=" + std::to_string(fpr_mismatch) +
              " hard_atc=" + std::to_string(atc_mismatch) +
              " atc_threshold=" + std::to_string(thr_mismatch)};
}

Outcome soft_to_hard() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int k = 2 + static_cast<int>(rng() % 5);
    const double delta = std::uniform_real_distribution<double>(1.0 / k + 0.02, 0.98)(rng);
    const Matrix p = oracle::random_probs(200, k, rng, 2.0);
    const Vector s = unit_scores(p, ScoreKind::MaxConfidence);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < s.size(); ++r)
      if (std::abs(s(r) - delta) >= kSoftExclusion) keep.push_back(r);
    if (keep.empty()) continue;
    Matrix kept(static_cast<Eigen::Index>(keep.size()), k);
    std::vector<double> kept_scores;
    for (std::size_t r = 0; r < keep.size(); ++r) {
      kept.row(static_cast<Eigen::Index>(r)) = p.row(keep[r]);
      kept_scores.push_back(s(keep[r]));
    }
    const double soft = diff_atc(kept, ScoreKind::MaxConfidence, delta, kSoftOmega).value;
    worst = std::max(worst, std::abs(soft - hard_atc(kept_scores, delta)));
  }
  return {worst <= kSoftHardTol, "max |diff_atc - hard_atc| = " + fmt(worst, 3) + " (tol " +
                                     fmt(kSoftHardTol) + ")"};
}

struct MethodSeries {
  std::vector<double> id_acc, ood_acc, fpr95;  // seed means per timestep
};

MethodSeries seed_means(const std::vector<CellResult>& cells, Method m) {
  MethodSeries out;
  int runs = 0;
  for (const auto& c : cells) {
    if (c.method != m) continue;
    if (!c.ok) throw std::runtime_error("run failed: " + c.error);
    if (out.id_acc.empty()) {
      out.id_acc.assign(c.records.size(), 0.0);
      out.ood_acc.assign(c.records.size(), 0.0);
      out.fpr95.assign(c.records.size(), 0.0);
    }
    for (std::size_t t = 0; t < c.records.size(); ++t) {
      out.id_acc[t] += c.records[t].id_acc;
      out.ood_acc[t] += c.records[t].ood_acc;
      out.fpr95[t] += c.records[t].fpr95;
    }
    ++runs;
  }
  for (auto* v : {&out.id_acc, &out.ood_acc, &out.fpr95})
    for (auto& x : *v) x /= runs;
  return out;
}

double max_consecutive_drop(const std::vector<double>& v) {
  double worst = 0.0;
  for (std::size_t t = 1; t < v.size(); ++t) worst = std::max(worst, v[t - 1] - v[t]);
  return worst;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

ExperimentSpec comparison_spec(Regime regime, int timesteps, const fs::path& out) {
  ExperimentSpec spec;
  spec.base.stream.regime = regime;
  spec.base.stream.num_timesteps = timesteps;
  spec.methods = {Method::Scone, Method::TempSconeATC};
  spec.seeds = kSeeds;
  spec.output_dir = out.string();
  return spec;
}

Outcome dynamic_direction() {
  const auto spec = comparison_spec(Regime::Dynamic, 10, "unused");
  const auto cells = run_cells(spec);
  const auto scone = seed_means(cells, Method::Scone);
  const auto temp = seed_means(cells, Method::TempSconeATC);
  const double ood_s = mean_of(scone.ood_acc), ood_t = mean_of(temp.ood_acc);
  const double drop_s = max_consecutive_drop(scone.id_acc);
  const double drop_t = max_consecutive_drop(temp.id_acc);
  return {ood_t >= ood_s && drop_t <= drop_s,
          "mean OOD-Acc temp_scone_atc=" + fmt(ood_t, 6) + " scone=" + fmt(ood_s, 6) +
              "; max ID-Acc drop temp_scone_atc=" + fmt(drop_t, 6) + " scone=" + fmt(drop_s, 6)};
}

Outcome distinct_parity() {
  const auto spec = comparison_spec(Regime::Distinct, 4, "unused");
  const auto cells = run_cells(spec);
  const auto scone = seed_means(cells, Method::Scone);
  const auto temp = seed_means(cells, Method::TempSconeATC);
  double worst_id = 0, worst_ood = 0, worst_fpr = 0;
  int worst_fpr_t = 0;
  for (std::size_t t = 0; t < scone.id_acc.size(); ++t) {
    worst_id = std::max(worst_id, std::abs(scone.id_acc[t] - temp.id_acc[t]));
    worst_ood = std::max(worst_ood, std::abs(scone.ood_acc[t] - temp.ood_acc[t]));
    const double gap = std::abs(scone.fpr95[t] - temp.fpr95[t]);
    if (gap > worst_fpr) {
      worst_fpr = gap;
      worst_fpr_t = static_cast<int>(t);
    }
  }
  return {worst_id <= kParityTol && worst_ood <= kParityTol && worst_fpr <= kParityTol,
          "max |seed-mean gap| ID-Acc=" + fmt(worst_id, 4) + " OOD-Acc=" + fmt(worst_ood, 4) +
              " FPR95=" + fmt(worst_fpr, 4) + " (at t=" + std::to_string(worst_fpr_t) +
              "), tol " + fmt(kParityTol)};
}

Outcome theory_sweep() {
  using namespace tempscone::theory;
  bool ok = true;
  std::string detail;

  // Monotonicity grid, K in 2..16.
  long mono_viol = 0;
  for (int k = 2; k <= 16; ++k) {
    double prev = two_point_entropy(1.0 / k, k);
    for (int i = 1; i <= 10000; ++i) {
      const double h = two_point_entropy(1.0 / k + (1.0 - 1.0 / k) * i / 10000.0, k);
      mono_viol += h >= prev;
      prev = h;
    }
  }
  ok = ok && mono_viol == 0;

  std::mt19937_64 rng(11);
  std::gamma_distribution<double> g(0.7, 1.0);
  auto random_dist = [&](int k) {
    std::vector<double> p(static_cast<std::size_t>(k));
    double s = 0;
    for (auto& v : p) s += (v = g(rng) + 1e-6);
    for (auto& v : p) v /= s;
    return DiscreteDist(p);
  };
  long chi2_viol = 0, kl_viol = 0;
  for (int i = 0; i < 1000; ++i) {
    const int k = 2 + static_cast<int>(rng() % 15);
    const auto p = random_dist(k), q = random_dist(k);
    double second = 0.0;
    for (int j = 0; j < k; ++j) second += p.probs()[j] * p.probs()[j] / q.probs()[j];
    const double c = chi2(p, q);
    chi2_viol += std::abs(second - 1.0 - c) > kChi2IdentityTol * std::max(1.0, c);
    kl_viol += kl(p, q) > 0.5 * (tv(p, q) + c) + 1e-12;
  }
  ok = ok && chi2_viol == 0 && kl_viol == 0;

  long entropy_conf_viol = 0;
  for (int i = 0; i < 100000; ++i) {
    const int k = 2 + static_cast<int>(rng() % 15);
    std::uniform_real_distribution<double> m(1.0 / k, 1.0);
    entropy_conf_viol += !entropy_confidence_check(DiscreteDist::two_mass(m(rng), k, static_cast<int>(rng() % k)),
                                DiscreteDist::two_mass(m(rng), k, static_cast<int>(rng() % k)));
  }
  ok = ok && entropy_conf_viol == 0;

  const double ratio = chi2_gaussian_shift(0.01, 1.0) / (0.01 * 0.01 * fisher_info_gaussian(1.0));
  ok = ok && ratio >= kFisherLo && ratio <= kFisherHi;

  long library_viol = 0;
  for (const auto& r : verify_theory(0)) library_viol += r.violations;
  ok = ok && library_viol == 0;

  detail = "monotone violations=" + std::to_string(mono_viol) +
           " chi2 identity violations=" + std::to_string(chi2_viol) +
           " KL bound violations=" + std::to_string(kl_viol) +
           " entropy-confidence violations=" + std::to_string(entropy_conf_viol) + " fisher ratio=" + fmt(ratio, 10) +
           " library sweep violations=" + std::to_string(library_viol);
  return {ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("tempscone_accept_" + std::to_string(::getpid()));
  std::vector<std::string> tables[2];
  for (int i = 0; i < 2; ++i) {
    const auto spec = comparison_spec(Regime::Dynamic, 10, root / std::to_string(i));
    write_outputs(spec, run_cells(spec));
    tables[i] = {slurp(spec.output_dir + "/metrics.csv"), slurp(spec.output_dir + "/summary.csv")};
  }
  fs::remove_all(root);
  const bool same = tables[0] == tables[1] && !tables[0][0].empty();
  return {same, same ? "metrics.csv and summary.csv byte-identical across two compare runs"
                     : "outputs differ"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--strict") {
      strict = true;
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: acceptance [--strict] [--only N[,N...]]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria{
      {1, "scone-reduction", 120, scone_reduction},
      {2, "gradient-suite", 60, gradient_suite},
      {3, "energy-margin", 120, energy_margin},
      {4, "metric-oracles", 30, metric_oracles},
      {5, "soft-to-hard", 10, soft_to_hard},
      {6, "dynamic-direction", 900, dynamic_direction},
      {7, "distinct-parity", 600, distinct_parity},
      {8, "theory-sweep", 30, theory_sweep},
      {9, "determinism", 900, determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = seconds_since(start);
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s criterion %d %-18s %s [%.1fs / %.0fs budget]\n", pass ? "PASS" : "FAIL", c.id,
                c.name, o.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  std::printf("%d criterion(s) failed\n", failures);
  return strict && failures > 0 ? 1 : 0;
}
