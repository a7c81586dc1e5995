#include "tempscone/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace tempscone::theory {
namespace {

void require_same_size(const DiscreteDist& p, const DiscreteDist& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("distributions have different support sizes");
  }
}

double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

DiscreteDist random_dist(int k, std::mt19937_64& rng) {
  // Dirichlet(a, ..., a) with a random concentration, so both near-uniform and
  // peaked pairs are covered.
  std::uniform_real_distribution<double> conc(0.05, 3.0);
  std::gamma_distribution<double> gamma(conc(rng), 1.0);
  std::vector<double> w(static_cast<std::size_t>(k));
  double sum = 0.0;
  for (auto& x : w) {
    x = std::max(gamma(rng), 1e-12);
    sum += x;
  }
  for (auto& x : w) x /= sum;
  // Renormalize away the last bit of rounding.
  const double s2 = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= s2;
  return DiscreteDist(std::move(w));
}

struct Tally {
  PropertyResult r;

  void check(double violation) {
    ++r.trials;
    if (violation > 0.0) {
      ++r.violations;
      r.max_violation = std::max(r.max_violation, violation);
    }
  }
};

}  // namespace

DiscreteDist::DiscreteDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("empty distribution");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("distribution entries must be finite and >= 0");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument("distribution does not sum to 1");
  }
}

DiscreteDist DiscreteDist::uniform(int k) {
  if (k < 1) throw std::invalid_argument("uniform needs k >= 1");
  return DiscreteDist(std::vector<double>(static_cast<std::size_t>(k), 1.0 / k));
}

DiscreteDist DiscreteDist::two_mass(double p_star, int k, int top) {
  if (k < 2 || top < 0 || top >= k) throw std::invalid_argument("bad two-mass layout");
  std::vector<double> p(static_cast<std::size_t>(k), (1.0 - p_star) / (k - 1));
  p[static_cast<std::size_t>(top)] = p_star;
  // Absorb rounding into the largest entry so the sum is 1.
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  p[static_cast<std::size_t>(top)] += 1.0 - sum;
  return DiscreteDist(std::move(p));
}

double DiscreteDist::max_mass() const { return *std::max_element(probs_.begin(), probs_.end()); }

bool DiscreteDist::is_two_mass(double tol) const {
  const auto top = std::max_element(probs_.begin(), probs_.end()) - probs_.begin();
  const double rest = (1.0 - probs_[static_cast<std::size_t>(top)]) / (size() - 1);
  for (int i = 0; i < size(); ++i) {
    if (i == top) continue;
    if (std::abs(probs_[static_cast<std::size_t>(i)] - rest) > tol) return false;
  }
  return true;
}

double entropy(const DiscreteDist& p) {
  double h = 0.0;
  for (double x : p.probs()) h -= xlogy(x, x);
  return h;
}

double two_point_entropy(double p_star, int k) {
  if (k < 2) throw std::invalid_argument("two_point_entropy needs K >= 2");
  const double lo = 1.0 / k;
  if (!(p_star >= lo - 1e-15 && p_star <= 1.0)) {
    throw std::out_of_range("p_star must lie in [1/K, 1]");
  }
  const double rest = 1.0 - p_star;
  return -xlogy(p_star, p_star) - xlogy(rest, rest / (k - 1));
}

double kl(const DiscreteDist& p, const DiscreteDist& q) {
  require_same_size(p, q);
  double d = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double pi = p.probs()[static_cast<std::size_t>(i)];
    const double qi = q.probs()[static_cast<std::size_t>(i)];
    if (pi == 0.0) continue;
    if (qi == 0.0) throw std::domain_error("kl: q has no mass where p does");
    d += pi * std::log(pi / qi);
  }
  return std::max(d, 0.0);
}

double tv(const DiscreteDist& p, const DiscreteDist& q) {
  require_same_size(p, q);
  double d = 0.0;
  for (int i = 0; i < p.size(); ++i)
    d += std::abs(p.probs()[static_cast<std::size_t>(i)] - q.probs()[static_cast<std::size_t>(i)]);
  return 0.5 * d;
}

double chi2(const DiscreteDist& p, const DiscreteDist& q) {
  require_same_size(p, q);
  double d = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    const double pi = p.probs()[static_cast<std::size_t>(i)];
    const double qi = q.probs()[static_cast<std::size_t>(i)];
    if (qi == 0.0) {
      if (pi == 0.0) continue;
      throw std::domain_error("chi2: q has no mass where p does");
    }
    d += (pi - qi) * (pi - qi) / qi;
  }
  return d;
}

bool entropy_confidence_check(const DiscreteDist& p_t, const DiscreteDist& p_t1) {
  require_same_size(p_t, p_t1);
  if (!p_t.is_two_mass() || !p_t1.is_two_mass()) {
    throw std::invalid_argument(
        "entropy_confidence_check only covers the two-mass family (max mass plus an even "
        "split); entropy does not determine the max mass of general distributions");
  }
  const int k = p_t.size();
  const double h_t = two_point_entropy(p_t.max_mass(), k);
  const double h_t1 = two_point_entropy(p_t1.max_mass(), k);
  if (h_t <= h_t1) return p_t.max_mass() >= p_t1.max_mass();
  return true;
}

double chi2_gaussian_shift(double delta, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  return std::expm1(delta * delta / (sigma * sigma));
}

double fisher_info_gaussian(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  return 1.0 / (sigma * sigma);
}

double score_dist_tv(std::span<const double> scores_a, std::span<const double> scores_b,
                     int bins) {
  if (scores_a.empty() || scores_b.empty()) throw std::invalid_argument("score_dist_tv: empty input");
  if (bins < 2) throw std::invalid_argument("score_dist_tv: bins must be >= 2");
  const auto [a_lo, a_hi] = std::minmax_element(scores_a.begin(), scores_a.end());
  const auto [b_lo, b_hi] = std::minmax_element(scores_b.begin(), scores_b.end());
  const double lo = std::min(*a_lo, *b_lo);
  const double hi = std::max(*a_hi, *b_hi);
  const double width = hi - lo;

  auto histogram = [&](std::span<const double> xs) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double x : xs) {
      int b = width > 0.0 ? static_cast<int>((x - lo) / width * bins) : 0;
      b = std::clamp(b, 0, bins - 1);
      h[static_cast<std::size_t>(b)] += 1.0;
    }
    for (auto& v : h) v /= static_cast<double>(xs.size());
    return h;
  };
  const auto ha = histogram(scores_a);
  const auto hb = histogram(scores_b);
  double d = 0.0;
  for (std::size_t i = 0; i < ha.size(); ++i) d += std::abs(ha[i] - hb[i]);
  return 0.5 * d;
}

std::vector<PropertyResult> verify_theory(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PropertyResult> out;

  {
    Tally t{{"two_point_entropy_strictly_decreasing"}};
    constexpr int kGrid = 10000;
    for (int k = 2; k <= 16; ++k) {
      const double lo = 1.0 / k;
      double prev = two_point_entropy(lo, k);
      for (int i = 1; i <= kGrid; ++i) {
        const double p = lo + (1.0 - lo) * i / kGrid;
        const double h = two_point_entropy(p, k);
        t.check(h >= prev ? h - prev + std::numeric_limits<double>::min() : 0.0);
        prev = h;
      }
    }
    out.push_back(t.r);
  }

  std::uniform_int_distribution<int> support(2, 16);
  {
    Tally chi2_identity{{"chi2_identity"}};
    Tally kl_bound{{"kl_le_half_tv_plus_chi2"}};
    Tally nonneg{{"divergences_nonnegative_zero_on_equal"}};
    for (int i = 0; i < 1000; ++i) {
      const int k = support(rng);
      const DiscreteDist p = random_dist(k, rng);
      const DiscreteDist q = random_dist(k, rng);
      double second_moment = 0.0;
      for (int j = 0; j < k; ++j) {
        const double pj = p.probs()[static_cast<std::size_t>(j)];
        second_moment += pj * pj / q.probs()[static_cast<std::size_t>(j)];
      }
      const double c = chi2(p, q);
      const double gap = std::abs(second_moment - 1.0 - c);
      chi2_identity.check(gap > 1e-12 * std::max(1.0, c) ? gap : 0.0);

      const double excess = kl(p, q) - 0.5 * (tv(p, q) + c);
      kl_bound.check(excess > 1e-12 ? excess : 0.0);

      const double worst_self = std::max({kl(p, p), tv(p, p), chi2(p, p)});
      const double most_negative = -std::min({kl(p, q), tv(p, q), c});
      nonneg.check(std::max({worst_self > 1e-12 ? worst_self : 0.0,
                             most_negative > 0.0 ? most_negative : 0.0}));
    }
    out.push_back(chi2_identity.r);
    out.push_back(kl_bound.r);
    out.push_back(nonneg.r);
  }

  {
    Tally t{{"entropy_confidence_two_mass"}};
    for (int i = 0; i < 100000; ++i) {
      const int k = support(rng);
      std::uniform_real_distribution<double> mass(1.0 / k, 1.0);
      std::uniform_int_distribution<int> top(0, k - 1);
      const auto a = DiscreteDist::two_mass(mass(rng), k, top(rng));
      const auto b = DiscreteDist::two_mass(mass(rng), k, top(rng));
      t.check(entropy_confidence_check(a, b) ? 0.0 : 1.0);
    }
    out.push_back(t.r);
  }

  {
    Tally t{{"chi2_fisher_ratio_at_0.01"}};
    const double ratio = chi2_gaussian_shift(0.01, 1.0) / (0.01 * 0.01 * fisher_info_gaussian(1.0));
    t.check(std::abs(ratio - 1.0) > 1e-4 ? std::abs(ratio - 1.0) : 0.0);
    out.push_back(t.r);
  }

  {
    Tally t{{"chi2_fisher_ratio_monotone"}};
    double prev = std::numeric_limits<double>::infinity();
    for (double delta : {0.5, 0.1, 0.01}) {
      const double gap = std::abs(chi2_gaussian_shift(delta, 1.0) / (delta * delta) - 1.0);
      t.check(gap >= prev ? gap - prev + std::numeric_limits<double>::min() : 0.0);
      prev = gap;
    }
    out.push_back(t.r);
  }
  return out;
}

std::string to_csv(const std::vector<PropertyResult>& results) {
  std::ostringstream os;
  os.precision(17);
  os << "property,trials,violations,max_violation,passed\n";
  for (const auto& r : results) {
    os << r.name << ',' << r.trials << ',' << r.violations << ',' << r.max_violation << ','
       << (r.passed() ? "true" : "false") << '\n';
  }
  return os.str();
}

}  // namespace tempscone::theory
