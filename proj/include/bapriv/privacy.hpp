#pragma once

// Distribution-privacy evaluation: per-feature two-sample Kolmogorov-Smirnov
// tests between recovered and ground-truth profiles.

#include <string>
#include <utility>
#include <vector>

#include "bapriv/dataio.hpp"

namespace bapriv::privacy {

struct KsResult {
  double d_statistic = 0.0;
  double p_value = 1.0;
};

inline constexpr double kDefaultAlpha = 0.05;

// Exact D over the merged sorted support; asymptotic Kolmogorov p-value with
// the (sqrt(n_e) + 0.12 + 0.11/sqrt(n_e)) small-sample correction.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// Kolmogorov survival function Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda);

// Fraction of features whose KS p-value is >= alpha (distribution recovered).
double feature_pass_fraction(const Profile& recovered, const Profile& truth, double alpha = kDefaultAlpha);

struct PrivacyReport {
  std::vector<std::pair<std::string, double>> per_profile;  // sorted by user id
  double epsilon_max = 0.0;   // headline: worst case over profiles
  double epsilon_mean = 0.0;
  std::size_t profiles_with_recovered_features = 0;
  double alpha = kDefaultAlpha;
  std::string knowledge_mode;

  std::string to_json() const;
  std::string to_csv() const;
};

// Pairs recovered and true profiles by user id; every profile needs a partner.
PrivacyReport evaluate_distribution_privacy(const std::vector<Profile>& recovered, const std::vector<Profile>& truth,
                                            double alpha, const std::string& knowledge_mode);

}  // namespace bapriv::privacy
