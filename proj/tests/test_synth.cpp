#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bapriv/dataio.hpp"
#include "bapriv/synth.hpp"

using namespace bapriv;

namespace {

// Nearest-centroid accuracy on held-out rows, centroids from training rows.
double nearest_centroid_accuracy(const Dataset& ds, std::uint64_t seed) {
  std::vector<std::vector<double>> centroids;
  std::vector<Profile> held;
  for (std::size_t u = 0; u < ds.profiles.size(); ++u) {
    auto [train, test] = split(ds.profiles[u], {0.8, seed + u});
    std::vector<double> c(train.d(), 0.0);
    for (std::size_t i = 0; i < train.m(); ++i)
      for (std::size_t j = 0; j < train.d(); ++j) c[j] += train.samples(i, j) / static_cast<double>(train.m());
    centroids.push_back(std::move(c));
    held.push_back(std::move(test));
  }
  std::size_t hits = 0, total = 0;
  for (std::size_t u = 0; u < held.size(); ++u) {
    for (std::size_t i = 0; i < held[u].m(); ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double dist = squared_distance(held[u].samples.row(i), centroids[c]);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      hits += best == u;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST(Synth, ShapeIdsAndUnitRange) {
  SynthSpec spec;
  const auto ds = generate(spec);
  ASSERT_EQ(ds.profiles.size(), 10u);
  EXPECT_EQ(ds.profiles[0].user_id, "user000");
  EXPECT_EQ(ds.profiles[9].user_id, "user009");
  for (const auto& p : ds.profiles) {
    EXPECT_EQ(p.m(), 240u);
    EXPECT_EQ(p.d(), 24u);
    for (double v : p.samples.flat()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  spec.boundary = BoundaryMode::kClamp;
  for (const auto& p : generate(spec).profiles) {
    for (double v : p.samples.flat()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Synth, DeterministicUnderSeed) {
  SynthSpec spec;
  spec.n_users = 3;
  spec.m_per_user = 20;
  const auto a = generate(spec), b = generate(spec);
  for (std::size_t u = 0; u < 3; ++u) EXPECT_EQ(a.profiles[u].samples, b.profiles[u].samples);
  spec.seed = 8;
  EXPECT_NE(generate(spec).profiles[0].samples, a.profiles[0].samples);
}

TEST(Synth, NoiselessLimitRepeatsTheMean) {
  SynthSpec spec;
  spec.n_users = 3;
  spec.m_per_user = 5;
  spec.class_separation = std::numeric_limits<double>::infinity();
  EXPECT_EQ(spec.noise_std(), 0.0);
  for (const auto& p : generate(spec).profiles) {
    for (std::size_t i = 1; i < p.m(); ++i) {
      for (std::size_t j = 0; j < p.d(); ++j) EXPECT_EQ(p.samples(i, j), p.samples(0, j));
    }
  }
}

TEST(Synth, NoiseStdFormula) {
  SynthSpec spec;
  EXPECT_DOUBLE_EQ(spec.noise_std(), 1.0 / (4.0 * std::pow(10.0, 1.0 / 24.0)));
}

TEST(Synth, DefaultSpecIsSeparableByNearestCentroid) {
  EXPECT_GE(nearest_centroid_accuracy(generate(SynthSpec{}), 11), 0.95);
}

TEST(Synth, SeparationIsMonotoneForNearestCentroid) {
  double prev = 0.0;
  for (double sep : {0.5, 1.0, 2.0}) {
    SynthSpec spec;
    spec.class_separation = sep;
    const double acc = nearest_centroid_accuracy(generate(spec), 11);
    EXPECT_GE(acc, prev) << "separation " << sep;
    prev = acc;
  }
}

TEST(Synth, RejectsInvalidSpecs) {
  SynthSpec spec;
  spec.n_users = 1;
  EXPECT_THROW(generate(spec), ConfigError);
  spec = {};
  spec.class_separation = 0.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.m_per_user = 1;
  EXPECT_THROW(spec.validate(), ConfigError);
}
