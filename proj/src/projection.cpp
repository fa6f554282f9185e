#include "bapriv/projection.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bapriv/kernels.hpp"
#include "bapriv/rng.hpp"

namespace bapriv {

using json = nlohmann::json;

Matrix RandomMatrix::as_matrix() const {
  Matrix out(k, d);
  for (std::size_t i = 0; i < entries.size(); ++i) out.flat()[i] = entries[i];
  return out;
}

RandomMatrix sample_matrix(std::size_t k, std::size_t d, double phi, std::uint64_t seed,
                           const MatrixOptions& options) {
  if (k < 1 || d < 1) throw ConfigError("projection matrix needs k >= 1 and d >= 1");
  if (k >= d && !options.allow_non_reducing) {
    throw ConfigError("projection must reduce dimension (k=" + std::to_string(k) + ", d=" + std::to_string(d) + ")");
  }
  if (!(phi > 1.0) || !std::isfinite(phi)) throw ConfigError("phi must be a finite value > 1");

  RandomMatrix r;
  r.k = k;
  r.d = d;
  r.phi = phi;
  r.seed = seed;
  if (options.matrix_id.empty()) {
    char id[40];
    std::snprintf(id, sizeof id, "R-%016llx", static_cast<unsigned long long>(seed));
    r.matrix_id = id;
  } else {
    r.matrix_id = options.matrix_id;
  }

  const double half = 1.0 / (2.0 * phi);
  Rng rng(seed);
  r.entries.resize(k * d);
  for (auto& e : r.entries) {
    const double u = rng.uniform();
    e = u < half ? std::int8_t{1} : (u < 2.0 * half ? std::int8_t{-1} : std::int8_t{0});
  }
  return r;
}

RandomMatrix matrix_from_entries(std::size_t k, std::size_t d, std::vector<std::int8_t> entries, double phi,
                                 std::string matrix_id) {
  if (k < 1 || d < 1 || entries.size() != k * d) throw DimensionError("matrix entries do not match k x d");
  if (!(phi >= 1.0)) throw ConfigError("phi must be >= 1");
  for (auto e : entries) {
    if (e < -1 || e > 1) throw DataError("matrix entries must be -1, 0 or 1");
  }
  return RandomMatrix{std::move(matrix_id), k, d, phi, 0, std::move(entries)};
}

double theoretical_sigma(double phi) {
  if (!(phi >= 1.0)) throw ConfigError("phi must be >= 1");
  return std::sqrt(1.0 / phi);
}

double empirical_sigma(const RandomMatrix& matrix) {
  const auto n = static_cast<double>(matrix.entries.size());
  double mean = 0.0;
  for (auto e : matrix.entries) mean += e;
  mean /= n;
  double var = 0.0;
  for (auto e : matrix.entries) var += (e - mean) * (e - mean);
  return std::sqrt(var / n);
}

double projection_scale(const RandomMatrix& matrix, SigmaMode mode) {
  const double sigma = mode == SigmaMode::kTheoretical ? theoretical_sigma(matrix.phi) : empirical_sigma(matrix);
  if (!(sigma > 0.0)) throw SingularMatrixError("projection matrix has zero spread");
  return 1.0 / (std::sqrt(static_cast<double>(matrix.k)) * sigma);
}

Matrix project(const Matrix& samples, const RandomMatrix& matrix, SigmaMode mode) {
  if (samples.cols() != matrix.d) {
    throw DimensionError("cannot project " + std::to_string(samples.cols()) + "-feature samples with a " +
                         std::to_string(matrix.k) + "x" + std::to_string(matrix.d) + " matrix");
  }
  return kernels::project_rows(samples, matrix.as_matrix(), projection_scale(matrix, mode));
}

std::vector<double> project(std::span<const double> x, const RandomMatrix& matrix, SigmaMode mode) {
  Matrix one(1, x.size(), std::vector<double>(x.begin(), x.end()));
  return project(one, matrix, mode).values();
}

ProjectedProfile project(const Profile& profile, const RandomMatrix& matrix, SigmaMode mode) {
  return ProjectedProfile{profile.user_id, matrix.matrix_id, project(profile.samples, matrix, mode)};
}

double jl_min_dimension(const JlParams& params, bool include_log) {
  const double eps = params.epsilon;
  if (!(eps > 0.0 && eps < 1.0 + 1e-12)) throw ConfigError("epsilon must lie in (0, 1]");
  if (!(params.beta > 0.0)) throw ConfigError("beta must be > 0");
  const double denom = eps * eps / 2.0 - eps * eps * eps / 3.0;
  if (!(denom > 0.0)) throw ConfigError("eps^2/2 - eps^3/3 must be positive");
  const double prefactor = (4.0 + 2.0 * params.beta) / denom;
  if (!include_log) return prefactor;
  if (params.n < 2) throw ConfigError("the log form needs n >= 2");
  return prefactor * std::log(static_cast<double>(params.n));
}

std::vector<double> distance_distortion(std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs,
                                        const RandomMatrix& matrix) {
  std::vector<double> ratios;
  for (const auto& [x, y] : pairs) {
    if (x.size() != matrix.d || y.size() != matrix.d) throw DimensionError("pair vector has wrong dimension");
    const double original = squared_distance(x, y);
    if (original == 0.0) continue;
    ratios.push_back(squared_distance(project(x, matrix), project(y, matrix)) / original);
  }
  if (ratios.empty()) throw DataError("every pair is degenerate (x == y)");
  return ratios;
}

std::string matrix_to_json(const RandomMatrix& matrix) {
  json j;
  j["matrix_id"] = matrix.matrix_id;
  j["k"] = matrix.k;
  j["d"] = matrix.d;
  j["phi"] = matrix.phi;
  j["seed"] = matrix.seed;
  j["entries"] = matrix.entries;
  return j.dump();
}

RandomMatrix matrix_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    auto r = matrix_from_entries(j.at("k").get<std::size_t>(), j.at("d").get<std::size_t>(),
                                 j.at("entries").get<std::vector<std::int8_t>>(), j.at("phi").get<double>(),
                                 j.at("matrix_id").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed matrix file: ") + e.what());
  } catch (const DimensionError& e) {
    throw DataError(std::string("malformed matrix file: ") + e.what());
  }
}

void save_matrix(const RandomMatrix& matrix, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << matrix_to_json(matrix) << '\n';
}

RandomMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return matrix_from_json(buf.str());
}

}  // namespace bapriv
