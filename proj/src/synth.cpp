#include "bapriv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bapriv/rng.hpp"

namespace bapriv {

void SynthSpec::validate() const {
  if (n_users < 2) throw ConfigError("synthetic spec needs n_users >= 2");
  if (d < 2) throw ConfigError("synthetic spec needs d >= 2");
  if (m_per_user < 2) throw ConfigError("synthetic spec needs m_per_user >= 2");
  if (!(class_separation > 0.0)) throw ConfigError("class_separation must be > 0");
}

double SynthSpec::noise_std() const {
  if (std::isinf(class_separation)) return 0.0;
  return 1.0 / (class_separation * std::pow(static_cast<double>(n_users), 1.0 / static_cast<double>(d)));
}

namespace {

double reflect_unit(double v) {
  v = std::fabs(v);
  v = std::fmod(v, 2.0);
  return v > 1.0 ? 2.0 - v : v;
}

}  // namespace

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  const double sigma = spec.noise_std();
  Rng rng(spec.seed);

  Matrix means(spec.n_users, spec.d);
  for (double& v : means.flat()) v = rng.uniform();

  Dataset ds;
  ds.profiles.reserve(spec.n_users);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    char id[32];
    std::snprintf(id, sizeof id, "user%03zu", u);
    Profile p{id, Matrix(spec.m_per_user, spec.d), {}};
    for (std::size_t i = 0; i < spec.m_per_user; ++i) {
      for (std::size_t j = 0; j < spec.d; ++j) {
        const double v = means(u, j) + sigma * rng.normal();
        p.samples(i, j) = spec.boundary == BoundaryMode::kReflect ? reflect_unit(v) : std::clamp(v, 0.0, 1.0);
      }
    }
    ds.profiles.push_back(std::move(p));
  }
  return ds;
}

}  // namespace bapriv
