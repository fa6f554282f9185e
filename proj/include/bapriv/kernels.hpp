#pragma once

// Dense kernels used by projection, training and evaluation.
//
// Every kernel has a serial reference in kernels::serial and an OpenMP version
// in kernels::parallel. Both produce bit-identical results: each output
// element is owned by one thread and accumulated in the same order as the
// serial loop, so parallelism never changes a reported number.

#include <span>

#include "bapriv/matrix.hpp"

namespace bapriv::kernels {

namespace serial {
// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out);
// out(r, :) = scale * (R x_r) for every row x_r of samples
void project_rows(const Matrix& samples, const Matrix& projection, double scale, Matrix& out);
}  // namespace serial

namespace parallel {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out);
void project_rows(const Matrix& samples, const Matrix& projection, double scale, Matrix& out);
}  // namespace parallel

// Dispatching entry points: OpenMP when built with it, serial otherwise.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);
Matrix project_rows(const Matrix& samples, const Matrix& projection, double scale);

// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace bapriv::kernels
