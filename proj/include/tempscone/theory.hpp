#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tempscone::theory {

/// Discrete probability vector; entries >= 0 summing to 1 within 1e-12.
class DiscreteDist {
 public:
  explicit DiscreteDist(std::vector<double> probs);

  static DiscreteDist uniform(int k);
  /// Max mass p_star on class `top`, the rest split evenly.
  static DiscreteDist two_mass(double p_star, int k, int top = 0);

  const std::vector<double>& probs() const { return probs_; }
  int size() const { return static_cast<int>(probs_.size()); }
  double max_mass() const;
  /// True when all entries except one maximal entry are equal within tol.
  bool is_two_mass(double tol = 1e-9) const;

 private:
  std::vector<double> probs_;
};

/// Shannon entropy in nats, with 0 log 0 = 0.
double entropy(const DiscreteDist& p);

/// -p log p - (1 - p) log((1 - p) / (K - 1)) for p in [1/K, 1].
double two_point_entropy(double p_star, int k);

double kl(const DiscreteDist& p, const DiscreteDist& q);
double tv(const DiscreteDist& p, const DiscreteDist& q);
double chi2(const DiscreteDist& p, const DiscreteDist& q);

/// Entropy/confidence monotonicity for two-mass distributions: if
/// H(p_t) <= H(p_t1) then max p_t >= max p_t1. Throws for inputs outside
/// the two-mass family, where the implication does not hold in general.
bool entropy_confidence_check(const DiscreteDist& p_t, const DiscreteDist& p_t1);

/// chi^2 between N(delta, sigma^2) and N(0, sigma^2): exp(delta^2/sigma^2) - 1.
double chi2_gaussian_shift(double delta, double sigma);
/// Fisher information of the Gaussian location family, 1 / sigma^2.
double fisher_info_gaussian(double sigma);

/// Total variation between the histograms of two score samples on a shared
/// grid spanning the pooled range. A diagnostic proxy only, not the
/// hypothesis-class discrepancy of the bound it is named after.
double score_dist_tv(std::span<const double> scores_a, std::span<const double> scores_b,
                     int bins);

struct PropertyResult {
  std::string name;
  long trials = 0;
  long violations = 0;
  double max_violation = 0.0;

  bool passed() const { return violations == 0; }
};

/// Randomized sweep of every checkable property above.
std::vector<PropertyResult> verify_theory(std::uint64_t seed = 0);

std::string to_csv(const std::vector<PropertyResult>& results);

}  // namespace tempscone::theory
