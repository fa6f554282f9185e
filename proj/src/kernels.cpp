#include "bapriv/kernels.hpp"

#include <algorithm>

#ifdef BAPRIV_HAVE_OPENMP
#include <omp.h>
#endif

namespace bapriv::kernels {

namespace {

void check_matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
}
void check_at_b(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_at_b: row counts differ");
}
void check_a_bt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_a_bt: column counts differ");
}

// Row kernels shared by the serial and parallel drivers so both accumulate in
// exactly the same order.
inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  auto dst = out.row(i);
  std::fill(dst.begin(), dst.end(), 0.0);
  const std::size_t n = a.cols();
  const std::size_t p = b.cols();
  for (std::size_t k = 0; k < n; ++k) {
    const double aik = a(i, k);
    if (aik == 0.0) continue;
    const double* brow = b.row(k).data();
    for (std::size_t j = 0; j < p; ++j) dst[j] += aik * brow[j];
  }
}

inline void at_b_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t p) {
  auto dst = out.row(p);
  std::fill(dst.begin(), dst.end(), 0.0);
  const std::size_t m = a.rows();
  const std::size_t q = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const double aip = a(i, p);
    if (aip == 0.0) continue;
    const double* brow = b.row(i).data();
    for (std::size_t j = 0; j < q; ++j) dst[j] += aip * brow[j];
  }
}

inline void a_bt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const double* arow = a.row(i).data();
  const std::size_t n = a.cols();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* brow = b.row(j).data();
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += arow[k] * brow[k];
    out(i, j) = s;
  }
}

inline void project_row(const Matrix& x, const Matrix& r, double scale, Matrix& out, std::size_t row) {
  const double* xr = x.row(row).data();
  const std::size_t d = r.cols();
  for (std::size_t i = 0; i < r.rows(); ++i) {
    const double* ri = r.row(i).data();
    double s = 0.0;
    // Ternary entries: only the nonzero ones contribute.
    for (std::size_t j = 0; j < d; ++j) {
      if (ri[j] > 0.0) {
        s += xr[j];
      } else if (ri[j] < 0.0) {
        s -= xr[j];
      }
    }
    out(row, i) = scale * s;
  }
}

}  // namespace

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul(a, b);
  out = Matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  check_at_b(a, b);
  out = Matrix(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.cols(); ++p) at_b_row(a, b, out, p);
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
  check_a_bt(a, b);
  out = Matrix(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) a_bt_row(a, b, out, i);
}

void project_rows(const Matrix& samples, const Matrix& projection, double scale, Matrix& out) {
  if (samples.cols() != projection.cols()) throw DimensionError("projection: feature count mismatch");
  out = Matrix(samples.rows(), projection.rows());
  for (std::size_t r = 0; r < samples.rows(); ++r) project_row(samples, projection, scale, out, r);
}

}  // namespace serial

namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check_matmul(a, b);
  out = Matrix(a.rows(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) matmul_row(a, b, out, static_cast<std::size_t>(i));
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  check_at_b(a, b);
  out = Matrix(a.cols(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < n; ++p) at_b_row(a, b, out, static_cast<std::size_t>(p));
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
  check_a_bt(a, b);
  out = Matrix(a.rows(), b.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) a_bt_row(a, b, out, static_cast<std::size_t>(i));
}

void project_rows(const Matrix& samples, const Matrix& projection, double scale, Matrix& out) {
  if (samples.cols() != projection.cols()) throw DimensionError("projection: feature count mismatch");
  out = Matrix(samples.rows(), projection.rows());
  const auto n = static_cast<std::ptrdiff_t>(samples.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    project_row(samples, projection, scale, out, static_cast<std::size_t>(r));
  }
}

}  // namespace parallel

#ifdef BAPRIV_HAVE_OPENMP
namespace impl = parallel;
#else
namespace impl = serial;
#endif

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out;
  impl::matmul(a, b, out);
  return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  Matrix out;
  impl::matmul_at_b(a, b, out);
  return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  Matrix out;
  impl::matmul_a_bt(a, b, out);
  return out;
}

Matrix project_rows(const Matrix& samples, const Matrix& projection, double scale) {
  Matrix out;
  impl::project_rows(samples, projection, scale, out);
  return out;
}

int max_threads() {
#ifdef BAPRIV_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace bapriv::kernels
