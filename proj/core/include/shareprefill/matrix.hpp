#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace shareprefill
{
/// Dense row-major matrix. Value type; copies are deep.
template <typename T>
class Matrix
{
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill)
  {
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Largest absolute elementwise difference; matrices must share a shape.
template <typename A, typename B>
double max_abs_diff(const Matrix<A>& a, const Matrix<B>& b);

/// ||a - b||_F / ||b||_F (0 when both are zero).
template <typename A, typename B>
double relative_frobenius_error(const Matrix<A>& a, const Matrix<B>& b);
}  // namespace shareprefill

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace shareprefill
{
template <typename A, typename B>
double max_abs_diff(const Matrix<A>& a, const Matrix<B>& b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols())
  {
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  }
  double worst = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i)
  {
    worst = std::max(worst, std::abs(static_cast<double>(da[i]) - static_cast<double>(db[i])));
  }
  return worst;
}

template <typename A, typename B>
double relative_frobenius_error(const Matrix<A>& a, const Matrix<B>& b)
{
  if (a.rows() != b.rows() || a.cols() != b.cols())
  {
    throw std::invalid_argument("relative_frobenius_error: shape mismatch");
  }
  double num = 0.0;
  double den = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i)
  {
    const double diff = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    num += diff * diff;
    den += static_cast<double>(db[i]) * static_cast<double>(db[i]);
  }
  if (den == 0.0)
  {
    return num == 0.0 ? 0.0 : std::sqrt(num);
  }
  return std::sqrt(num / den);
}
}  // namespace shareprefill
