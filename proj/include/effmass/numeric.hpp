#ifndef EFFMASS_NUMERIC_HPP
#define EFFMASS_NUMERIC_HPP

#include <array>
#include <cassert>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "effmass/errors.hpp"

/** @file effmass/numeric.hpp
    @brief Small numerical building blocks shared by the engines: a row-major
           dense matrix, compensated summation and uniform-grid interpolation.
 */

namespace effmass {

/// Row-major dense matrix with value semantics.
template <typename T>
class Matrix
{
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T init = T{})
    : rows_(rows), cols_(cols), data_(rows * cols, init) { }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  T& operator()(std::size_t r, std::size_t c) noexcept
  {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  const T& operator()(std::size_t r, std::size_t c) const noexcept
  {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<const T> data() const noexcept { return data_; }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Neumaier-compensated accumulator. Summation order is the call order, so
/// results are reproducible bit for bit.
template <std::floating_point Real>
class CompensatedSum
{
public:
  void add(Real x) noexcept
  {
    const Real t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(Real x) noexcept { add(x); return *this; }
  Real value() const noexcept { return sum_ + comp_; }

private:
  Real sum_ = 0;
  Real comp_ = 0;
};

template <std::floating_point Real>
Real compensated_sum(std::span<const Real> values)
{
  CompensatedSum<Real> acc;
  for (Real v : values)
    acc += v;
  return acc.value();
}

/// Stencil of four-point (cubic) Lagrange interpolation on a uniform grid
/// x_i = origin + i*step. The same stencil can be applied to many tabulated
/// functions sharing the grid.
struct CubicStencil
{
  std::size_t first = 0;          // index of the leftmost of the four nodes
  std::array<double, 4> weights{};

  template <typename Table>
  double apply(const Table& values) const
  {
    return weights[0] * values[first] + weights[1] * values[first + 1]
         + weights[2] * values[first + 2] + weights[3] * values[first + 3];
  }
};

/// Builds the stencil for `x`. Throws ResolutionError when x lies outside the
/// interval where a centred four-point stencil exists; there is no clamping.
inline CubicStencil cubic_stencil(double origin, double step, std::size_t count, double x)
{
  if (count < 4)
    throw ResolutionError("cubic interpolation needs at least four nodes");
  const double u = (x - origin) / step;
  const double upper = static_cast<double>(count - 1);
  if (!(u >= 0.0 && u <= upper))
    throw ResolutionError("interpolation point outside tabulated range");
  auto i = static_cast<std::ptrdiff_t>(std::floor(u));
  // keep the evaluation point in the middle interval of the stencil where possible
  std::ptrdiff_t first = i - 1;
  if (first < 0)
    first = 0;
  if (first + 3 > static_cast<std::ptrdiff_t>(count) - 1)
    first = static_cast<std::ptrdiff_t>(count) - 4;
  const double s = u - static_cast<double>(first);  // position relative to node `first`
  const double s0 = s, s1 = s - 1.0, s2 = s - 2.0, s3 = s - 3.0;
  CubicStencil st;
  st.first = static_cast<std::size_t>(first);
  st.weights[0] = -s1 * s2 * s3 / 6.0;
  st.weights[1] = s0 * s2 * s3 / 2.0;
  st.weights[2] = -s0 * s1 * s3 / 2.0;
  st.weights[3] = s0 * s1 * s2 / 6.0;
  return st;
}

/// Uniform grid helper.
struct UniformGrid
{
  double origin = 0.0;
  double step = 1.0;
  std::size_t count = 0;

  double at(std::size_t i) const noexcept { return origin + step * static_cast<double>(i); }
  double back() const noexcept { return at(count - 1); }
  CubicStencil stencil(double x) const { return cubic_stencil(origin, step, count, x); }
};

/// Five-point central second derivative.
template <typename F>
double second_derivative(F&& f, double x, double h)
{
  return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h);
}

/// Five-point central first derivative.
template <typename F>
auto first_derivative(F&& f, double x, double h)
{
  return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h);
}

inline bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) noexcept
{
  std::size_t p = 1;
  while (p < n)
    p <<= 1;
  return p;
}

} // namespace effmass

#endif
