#pragma once

#include <cstdint>
#include <limits>

#include "bapriv/dataio.hpp"

namespace bapriv {

// How per-user Gaussian samples are brought back into [0, 1].
enum class BoundaryMode {
  kReflect,  // fold at 0 and 1 (default; no point masses at the edges)
  kClamp,
};

struct SynthSpec {
  std::size_t n_users = 10;
  std::size_t d = 24;
  std::size_t m_per_user = 240;
  // Separation between user means in units of the within-user std;
  // +infinity gives noiseless users.
  double class_separation = 4.0;
  std::uint64_t seed = 7;
  BoundaryMode boundary = BoundaryMode::kReflect;

  void validate() const;
  // Per-feature within-user std: 1 / (class_separation * n_users^(1/d)).
  double noise_std() const;
};

// User u gets mean mu_u ~ U[0,1]^d and samples mu_u + N(0, sigma^2 I).
Dataset generate(const SynthSpec& spec);

}  // namespace bapriv
