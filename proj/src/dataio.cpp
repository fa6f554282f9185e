#include "bapriv/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "bapriv/rng.hpp"

namespace bapriv {

namespace fs = std::filesystem;

void Profile::validate() const {
  if (samples.rows() < 2) throw DataError("profile '" + user_id + "' needs at least 2 samples");
  if (samples.cols() < 2) throw DataError("profile '" + user_id + "' needs at least 2 features");
  if (!feature_names.empty() && feature_names.size() != samples.cols()) {
    throw DataError("profile '" + user_id + "' has " + std::to_string(feature_names.size()) +
                    " feature names for " + std::to_string(samples.cols()) + " features");
  }
  for (double v : samples.flat()) {
    if (!std::isfinite(v)) throw DataError("profile '" + user_id + "' contains a non-finite value");
  }
}

const Profile& Dataset::find(const std::string& user_id) const {
  for (const auto& p : profiles) {
    if (p.user_id == user_id) return p;
  }
  throw DataError("unknown user '" + user_id + "'");
}

void Dataset::validate() const {
  if (profiles.empty()) throw DataError("dataset has no profiles");
  std::set<std::string> seen;
  for (const auto& p : profiles) {
    p.validate();
    if (p.d() != d()) throw DimensionError("profiles disagree on feature count");
    if (!seen.insert(p.user_id).second) throw DataError("duplicate user id '" + p.user_id + "'");
  }
  if (!bounds.empty() && bounds.size() != d()) throw DimensionError("normalization bounds length != d");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

// Parses a numeric field; "NaN", "Infinity" and friends count as numeric.
bool parse_number(std::string_view field, double& value) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec == std::errc::result_out_of_range) {
    value = (field.front() == '-') ? -HUGE_VAL : HUGE_VAL;
    return true;
  }
  return ec == std::errc() && ptr == last;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

Profile parse_csv(const std::string& text, const std::string& user_id) {
  Profile profile;
  profile.user_id = user_id;

  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t width = 0;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw DataError("ragged CSV row at line " + std::to_string(line_no) + " for user '" + user_id + "'");
    }
    std::vector<double> values(width);
    bool numeric = true;
    for (std::size_t j = 0; j < width && numeric; ++j) numeric = parse_number(fields[j], values[j]);
    if (!numeric) {
      if (!first) {
        throw DataError("non-numeric value at line " + std::to_string(line_no) + " for user '" + user_id + "'");
      }
      for (auto f : fields) profile.feature_names.emplace_back(f);
      first = false;
      continue;
    }
    first = false;
    for (double& v : values) {
      if (!std::isfinite(v)) v = 0.0;
    }
    rows.push_back(std::move(values));
  }

  std::set<std::vector<double>> seen;
  Matrix samples(0, width);
  for (const auto& r : rows) {
    if (seen.insert(r).second) samples.append_row(r);
  }
  profile.samples = std::move(samples);
  if (profile.samples.rows() < 2) {
    throw DataError("profile '" + user_id + "' has fewer than 2 distinct data rows");
  }
  profile.validate();
  return profile;
}

Profile load_csv(const fs::path& path, const std::string& user_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), user_id);
}

std::string format_csv(const Profile& profile) {
  std::string out;
  for (std::size_t j = 0; j < profile.d(); ++j) {
    if (j) out += ',';
    out += profile.feature_names.empty() ? "f" + std::to_string(j) : profile.feature_names[j];
  }
  out += '\n';
  for (std::size_t i = 0; i < profile.m(); ++i) {
    for (std::size_t j = 0; j < profile.d(); ++j) {
      if (j) out += ',';
      out += format_number(profile.samples(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_csv(const Profile& profile, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_csv(profile);
  if (!out) throw DataError("failed writing " + path.string());
}

Dataset load_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Dataset ds;
  for (const auto& f : files) ds.profiles.push_back(load_csv(f, f.stem().string()));
  ds.validate();
  return ds;
}

void write_dataset_dir(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& p : dataset.profiles) write_csv(p, dir / (p.user_id + ".csv"));
}

NormalizationBounds fit_normalizer(std::span<const Profile> profiles) {
  if (profiles.empty()) throw DataError("cannot fit normalizer on an empty dataset");
  const std::size_t d = profiles.front().d();
  NormalizationBounds bounds(d, FeatureBounds{HUGE_VAL, -HUGE_VAL});
  for (const auto& p : profiles) {
    if (p.d() != d) throw DimensionError("profiles disagree on feature count");
    for (std::size_t i = 0; i < p.m(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        bounds[j].min = std::min(bounds[j].min, p.samples(i, j));
        bounds[j].max = std::max(bounds[j].max, p.samples(i, j));
      }
    }
  }
  return bounds;
}

NormalizationBounds fit_normalizer(const Dataset& dataset) { return fit_normalizer(dataset.profiles); }

Profile normalize(const Profile& profile, const NormalizationBounds& bounds) {
  if (bounds.size() != profile.d()) throw DimensionError("normalization bounds length != d");
  Profile out = profile;
  for (std::size_t i = 0; i < out.m(); ++i) {
    for (std::size_t j = 0; j < out.d(); ++j) {
      const auto [lo, hi] = bounds[j];
      double& v = out.samples(i, j);
      v = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    }
  }
  return out;
}

Profile smote_oversample(const Profile& profile, std::size_t target_m, std::size_t k_neighbors,
                         std::uint64_t seed) {
  const std::size_t m = profile.m();
  if (m < 2) throw DataError("SMOTE needs at least 2 samples");
  if (k_neighbors < 1) throw ConfigError("SMOTE k_neighbors must be >= 1");
  if (k_neighbors >= m) {
    throw ConfigError("SMOTE k_neighbors (" + std::to_string(k_neighbors) + ") must be < m (" +
                      std::to_string(m) + ")");
  }
  if (target_m < m) throw ConfigError("SMOTE target_m is smaller than the profile");
  Profile out = profile;
  if (target_m == m) return out;

  // k nearest original rows of every original row; ties broken by index.
  std::vector<std::vector<std::size_t>> neighbors(m);
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t a = 0; a < m; ++a) {
    dist.clear();
    for (std::size_t b = 0; b < m; ++b) {
      if (b != a) dist.emplace_back(squared_distance(profile.samples.row(a), profile.samples.row(b)), b);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_neighbors), dist.end());
    for (std::size_t i = 0; i < k_neighbors; ++i) neighbors[a].push_back(dist[i].second);
  }

  Rng rng(seed);
  std::vector<double> synthetic(profile.d());
  for (std::size_t n = m; n < target_m; ++n) {
    const std::size_t a = rng.index(m);
    const std::size_t b = neighbors[a][rng.index(k_neighbors)];
    const double u = rng.uniform();
    auto ra = profile.samples.row(a);
    auto rb = profile.samples.row(b);
    for (std::size_t j = 0; j < synthetic.size(); ++j) synthetic[j] = ra[j] + u * (rb[j] - ra[j]);
    out.samples.append_row(synthetic);
  }
  return out;
}

std::pair<Profile, Profile> split(const Profile& profile, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  const std::size_t m = profile.m();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(m)));
  if (n_train == 0 || n_train >= m) {
    throw ConfigError("split of " + std::to_string(m) + " rows leaves an empty part");
  }
  Rng rng(spec.seed);
  auto order = rng.permutation(m);
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> held(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());

  Profile a{profile.user_id, profile.samples.select_rows(train), profile.feature_names};
  Profile b{profile.user_id, profile.samples.select_rows(held), profile.feature_names};
  return {std::move(a), std::move(b)};
}

}  // namespace bapriv
