#include "bapriv/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <json.hpp>

namespace bapriv::privacy {

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("KS test needs at least 2 values per sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  for (double v : x) {
    if (!std::isfinite(v)) throw DataError("KS test sample contains a non-finite value");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("KS test sample contains a non-finite value");
  }
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());

  const auto na = static_cast<double>(x.size());
  const auto nb = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  // Step through every distinct support point, consuming ties on both sides.
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == t) ++i;
    while (j < y.size() && y[j] == t) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }

  const double ne = na * nb / (na + nb);
  const double root = std::sqrt(ne);
  const double lambda = (root + 0.12 + 0.11 / root) * d;
  return {d, kolmogorov_q(lambda)};
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Jacobi-transformed form converges quickly for small lambda:
    // Q = 1 - sqrt(2 pi)/lambda * sum_{j>=1} exp(-(2j-1)^2 pi^2 / (8 lambda^2)).
    const double c = -std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double sum = 0.0;
    for (int k = 1; k < 100; ++k) {
      const double term = std::exp(c * (2.0 * k - 1.0) * (2.0 * k - 1.0));
      sum += term;
      if (term < 1e-16 * sum || term == 0.0) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k < 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double feature_pass_fraction(const Profile& recovered, const Profile& truth, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (recovered.d() != truth.d()) throw DimensionError("recovered and true profiles differ in feature count");
  const std::size_t d = truth.d();
  std::vector<int> passed(d, 0);
  const auto n = static_cast<std::ptrdiff_t>(d);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const auto col = static_cast<std::size_t>(j);
    passed[col] = ks_two_sample(recovered.samples.column(col), truth.samples.column(col)).p_value >= alpha;
  }
  std::size_t count = 0;
  for (int p : passed) count += static_cast<std::size_t>(p);
  return static_cast<double>(count) / static_cast<double>(d);
}

PrivacyReport evaluate_distribution_privacy(const std::vector<Profile>& recovered, const std::vector<Profile>& truth,
                                            double alpha, const std::string& knowledge_mode) {
  if (recovered.empty() || truth.empty()) throw DataError("privacy evaluation needs profiles");
  std::map<std::string, const Profile*> by_user;
  for (const auto& t : truth) by_user[t.user_id] = &t;
  if (by_user.size() != truth.size() || recovered.size() != truth.size()) {
    throw DataError("recovered and true profile sets are not paired one to one");
  }
  PrivacyReport report;
  report.alpha = alpha;
  report.knowledge_mode = knowledge_mode;
  std::map<std::string, double> fractions;
  for (const auto& r : recovered) {
    auto it = by_user.find(r.user_id);
    if (it == by_user.end()) throw DataError("recovered profile '" + r.user_id + "' has no ground truth");
    fractions[r.user_id] = feature_pass_fraction(r, *it->second, alpha);
  }
  if (fractions.size() != recovered.size()) throw DataError("duplicate recovered profile");
  double sum = 0.0;
  for (const auto& [user, f] : fractions) {
    report.per_profile.emplace_back(user, f);
    report.epsilon_max = std::max(report.epsilon_max, f);
    sum += f;
    if (f > 0.0) ++report.profiles_with_recovered_features;
  }
  report.epsilon_mean = sum / static_cast<double>(fractions.size());
  return report;
}

std::string PrivacyReport::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& [user, f] : per_profile) per.push_back({{"user_id", user}, {"pass_fraction", f}});
  return nlohmann::json{{"knowledge_mode", knowledge_mode},
                        {"alpha", alpha},
                        {"epsilon_max", epsilon_max},
                        {"epsilon_mean", epsilon_mean},
                        {"profiles", per_profile.size()},
                        {"profiles_with_recovered_features", profiles_with_recovered_features},
                        {"per_profile", per}}
      .dump(2);
}

std::string PrivacyReport::to_csv() const {
  std::string out = "user_id,pass_fraction\n";
  for (const auto& [user, f] : per_profile) out += user + "," + nlohmann::json(f).dump() + "\n";
  return out;
}

}  // namespace bapriv::privacy
