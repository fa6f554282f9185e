#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bapriv/dataio.hpp"
#include "bapriv/matrix.hpp"

namespace bapriv {

inline constexpr double kDefaultPhi = 3.0;

// Secret k x d ternary matrix with Pr(+1) = Pr(-1) = 1/(2 phi),
// Pr(0) = 1 - 1/phi.
struct RandomMatrix {
  std::string matrix_id;
  std::size_t k = 0;
  std::size_t d = 0;
  double phi = kDefaultPhi;
  std::uint64_t seed = 0;
  std::vector<std::int8_t> entries;  // row-major, values in {-1, 0, 1}

  std::int8_t at(std::size_t row, std::size_t col) const { return entries[row * d + col]; }
  Matrix as_matrix() const;
  bool operator==(const RandomMatrix&) const = default;
};

struct ProjectedProfile {
  std::string user_id;
  std::string matrix_id;
  Matrix samples;  // m x k
};

struct JlParams {
  std::size_t n = 0;
  double epsilon = 0.5;
  double beta = 1.0;
};

enum class SigmaMode {
  kTheoretical,  // sqrt(1/phi), independent of the sampled entries
  kEmpirical,    // std of the sampled entries of this matrix
};

struct MatrixOptions {
  std::string matrix_id;  // generated from the seed when empty
  // Permit k >= d. Only fixtures and distance-preservation experiments use it;
  // a deployed projection must reduce dimension.
  bool allow_non_reducing = false;
};

RandomMatrix sample_matrix(std::size_t k, std::size_t d, double phi, std::uint64_t seed,
                           const MatrixOptions& options = {});

// Builds a matrix from explicit entries (fixtures, file loading). Entries
// must be in {-1, 0, 1}; k <= d is allowed here.
RandomMatrix matrix_from_entries(std::size_t k, std::size_t d, std::vector<std::int8_t> entries,
                                 double phi = kDefaultPhi, std::string matrix_id = "fixture");

double theoretical_sigma(double phi);
double empirical_sigma(const RandomMatrix& matrix);
// 1 / (sqrt(k) sigma_r)
double projection_scale(const RandomMatrix& matrix, SigmaMode mode = SigmaMode::kTheoretical);

std::vector<double> project(std::span<const double> x, const RandomMatrix& matrix,
                            SigmaMode mode = SigmaMode::kTheoretical);
Matrix project(const Matrix& samples, const RandomMatrix& matrix, SigmaMode mode = SigmaMode::kTheoretical);
ProjectedProfile project(const Profile& profile, const RandomMatrix& matrix,
                         SigmaMode mode = SigmaMode::kTheoretical);

// Minimum projected dimension for n points: (4 + 2 beta) / (eps^2/2 - eps^3/3),
// multiplied by ln(n) when include_log is set.
double jl_min_dimension(const JlParams& params, bool include_log);

// D^2(f(x), f(y)) / D^2(x, y) for every pair with x != y, in input order.
std::vector<double> distance_distortion(std::span<const std::pair<std::vector<double>, std::vector<double>>> pairs,
                                        const RandomMatrix& matrix);

// Self-contained JSON: {matrix_id, k, d, phi, seed, entries}.
std::string matrix_to_json(const RandomMatrix& matrix);
RandomMatrix matrix_from_json(const std::string& text);
void save_matrix(const RandomMatrix& matrix, const std::filesystem::path& path);
RandomMatrix load_matrix(const std::filesystem::path& path);

}  // namespace bapriv
