#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bapriv/matrix.hpp"

namespace bapriv {

// One user's behavioral samples: m rows of d features.
struct Profile {
  std::string user_id;
  Matrix samples;
  std::vector<std::string> feature_names;  // empty or exactly d labels

  std::size_t m() const { return samples.rows(); }
  std::size_t d() const { return samples.cols(); }

  // Throws DataError unless m >= 2, d >= 2 and every entry is finite.
  void validate() const;
};

struct FeatureBounds {
  double min = 0.0;
  double max = 0.0;
};

using NormalizationBounds = std::vector<FeatureBounds>;

struct Dataset {
  std::vector<Profile> profiles;
  NormalizationBounds bounds;  // empty until fitted

  std::size_t d() const { return profiles.empty() ? 0 : profiles.front().d(); }
  const Profile& find(const std::string& user_id) const;
  void validate() const;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

// Comma-separated values, '.' decimal, optional header row (detected when the
// first row is not numeric). NaN / Infinity entries become 0 and exact
// duplicate rows are dropped, keeping first occurrences in file order.
Profile load_csv(const std::filesystem::path& path, const std::string& user_id);
Profile parse_csv(const std::string& text, const std::string& user_id);
void write_csv(const Profile& profile, const std::filesystem::path& path);
std::string format_csv(const Profile& profile);

// One CSV per user; the file stem is the user id. Files are read in
// lexicographic order.
Dataset load_dataset_dir(const std::filesystem::path& dir);
void write_dataset_dir(const Dataset& dataset, const std::filesystem::path& dir);

NormalizationBounds fit_normalizer(const Dataset& dataset);
NormalizationBounds fit_normalizer(std::span<const Profile> profiles);
// (v - min) / (max - min) clamped to [0, 1]; constant features map to 0.
Profile normalize(const Profile& profile, const NormalizationBounds& bounds);

// SMOTE: grows the profile to target_m rows by interpolating between a random
// original row and one of its k nearest original neighbors.
Profile smote_oversample(const Profile& profile, std::size_t target_m, std::size_t k_neighbors,
                         std::uint64_t seed);

// Seeded disjoint partition; the train part gets round(train_fraction * m)
// rows. Both parts keep the original row order.
std::pair<Profile, Profile> split(const Profile& profile, const SplitSpec& spec);

}  // namespace bapriv
