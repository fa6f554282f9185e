#include "bapriv/matrix.hpp"

namespace bapriv {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw DimensionError("appended row has wrong width");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::vstack(std::span<const Matrix> parts) {
  Matrix out;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.rows();
  if (parts.empty()) return out;
  out.cols_ = parts.front().cols();
  out.data_.reserve(total * out.cols_);
  for (const auto& p : parts) {
    if (p.cols() != out.cols_) throw DimensionError("vstack width mismatch");
    out.data_.insert(out.data_.end(), p.data_.begin(), p.data_.end());
    out.rows_ += p.rows();
  }
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("distance between vectors of different length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

double squared_norm(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

}  // namespace bapriv
