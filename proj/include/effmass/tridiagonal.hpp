#ifndef EFFMASS_TRIDIAGONAL_HPP
#define EFFMASS_TRIDIAGONAL_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "effmass/numeric.hpp"

/** @file effmass/tridiagonal.hpp
    @brief Eigenpairs of a real symmetric tridiagonal matrix by Sturm-sequence
           bisection followed by inverse iteration.

    Only the lowest `count` eigenpairs are computed, which is what the band
    solver needs: a handful of bands out of a plane-wave basis of ~65 states.
    Eigenvalues are bisected to adjacent floating point numbers. Eigenvectors of
    clustered eigenvalues are reorthogonalized against each other, following the
    strategy of LAPACK's xSTEIN.
 */

namespace effmass {

template <std::floating_point Real>
struct TridiagonalEigenpairs
{
  std::vector<Real> values;   // ascending
  Matrix<Real> vectors;       // row i is the unit eigenvector of values[i]
};

template <std::floating_point Real>
class SymmetricTridiagonal
{
public:
  /// `diag` has n entries, `off` has n-1 entries (the sub/super diagonal).
  SymmetricTridiagonal(std::vector<Real> diag, std::vector<Real> off)
    : diag_(std::move(diag)), off_(std::move(off))
  {
    if (diag_.empty() || off_.size() + 1 != diag_.size())
      throw std::invalid_argument("SymmetricTridiagonal: need n diagonal and n-1 off-diagonal entries");
    Real max_off_sq = 0;
    off_sq_.resize(off_.size());
    for (std::size_t i = 0; i < off_.size(); ++i) {
      off_sq_[i] = off_[i] * off_[i];
      max_off_sq = std::max(max_off_sq, off_sq_[i]);
    }
    pivmin_ = std::numeric_limits<Real>::min() * std::max<Real>(1, max_off_sq);

    lower_ = std::numeric_limits<Real>::max();
    upper_ = std::numeric_limits<Real>::lowest();
    norm_ = 0;
    for (std::size_t i = 0; i < diag_.size(); ++i) {
      Real radius = 0;
      if (i > 0) radius += std::abs(off_[i - 1]);
      if (i + 1 < diag_.size()) radius += std::abs(off_[i]);
      lower_ = std::min(lower_, diag_[i] - radius);
      upper_ = std::max(upper_, diag_[i] + radius);
      norm_ = std::max(norm_, std::abs(diag_[i]) + radius);
    }
    // widen so that the Sturm counts at the ends are exactly 0 and n
    const Real pad = 4 * std::numeric_limits<Real>::epsilon() * std::max<Real>(norm_, 1) + 2 * pivmin_;
    lower_ -= pad;
    upper_ += pad;
  }

  std::size_t size() const noexcept { return diag_.size(); }
  Real norm() const noexcept { return norm_; }

  /// Number of eigenvalues strictly below `x` (Sturm sequence count).
  std::size_t count_below(Real x) const noexcept
  {
    std::size_t count = 0;
    Real q = diag_[0] - x;
    if (std::abs(q) < pivmin_) q = -pivmin_;
    if (q < 0) ++count;
    for (std::size_t i = 1; i < diag_.size(); ++i) {
      q = diag_[i] - x - off_sq_[i - 1] / q;
      if (std::abs(q) < pivmin_) q = -pivmin_;
      if (q < 0) ++count;
    }
    return count;
  }

  /// Sturm counts at x[i] for every i in `lanes`, written to out[i].
  void count_below(std::span<const std::size_t> lanes, std::span<const Real> x, std::span<std::size_t> out) const
  {
    constexpr std::size_t width = 8;
    const std::size_t n = diag_.size();
    for (std::size_t base = 0; base < lanes.size(); base += width) {
      const std::size_t w = std::min(width, lanes.size() - base);
      Real q[width];
      Real shift[width];
      std::size_t count[width];
      for (std::size_t l = 0; l < w; ++l) {
        shift[l] = x[lanes[base + l]];
        q[l] = diag_[0] - shift[l];
        if (std::abs(q[l]) < pivmin_) q[l] = -pivmin_;
        count[l] = q[l] < 0;
      }
      for (std::size_t i = 1; i < n; ++i) {
        const Real e2 = off_sq_[i - 1];
        const Real d = diag_[i];
        for (std::size_t l = 0; l < w; ++l) {
          Real v = d - shift[l] - e2 / q[l];
          if (std::abs(v) < pivmin_) v = -pivmin_;
          q[l] = v;
          count[l] += v < 0;
        }
      }
      for (std::size_t l = 0; l < w; ++l)
        out[lanes[base + l]] = count[l];
    }
  }

  /// The `index`-th smallest eigenvalue, bisected to machine resolution.
  Real eigenvalue(std::size_t index) const { return bisect(index, lower_); }

  /// The lowest `count` eigenvalues. All bisections advance in lockstep so
  /// that the independent Sturm recurrences overlap in the pipeline.
  std::vector<Real> eigenvalues(std::size_t count) const
  {
    check_count(count);
    std::vector<Real> lo(count, lower_), hi(count, upper_), mid(count);
    std::vector<std::size_t> below(count);
    std::vector<std::size_t> active(count);
    for (std::size_t i = 0; i < count; ++i)
      active[i] = i;
    for (int iter = 0; iter < 2000 && !active.empty(); ++iter) {
      std::size_t kept = 0;
      for (std::size_t a = 0; a < active.size(); ++a) {
        const std::size_t i = active[a];
        const Real m = lo[i] + (hi[i] - lo[i]) / 2;
        if (m > lo[i] && m < hi[i])
          active[kept++] = i;
        mid[i] = m;
      }
      active.resize(kept);
      count_below(active, mid, below);
      for (std::size_t i : active) {
        if (below[i] > i)
          hi[i] = mid[i];
        else
          lo[i] = mid[i];
      }
    }
    std::vector<Real> values(count);
    for (std::size_t i = 0; i < count; ++i)
      values[i] = lo[i] + (hi[i] - lo[i]) / 2;
    return values;
  }

  /// Lowest `count` eigenpairs.
  TridiagonalEigenpairs<Real> lowest(std::size_t count) const
  {
    TridiagonalEigenpairs<Real> out;
    out.values = eigenvalues(count);
    out.vectors = Matrix<Real>(count, size());
    inverse_iteration(out.values, out.vectors);
    return out;
  }

  /// y = T x
  void multiply(std::span<const Real> x, std::span<Real> y) const
  {
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) {
      Real acc = diag_[i] * x[i];
      if (i > 0) acc += off_[i - 1] * x[i - 1];
      if (i + 1 < n) acc += off_[i] * x[i + 1];
      y[i] = acc;
    }
  }

private:
  void check_count(std::size_t count) const
  {
    if (count > size())
      throw std::invalid_argument("SymmetricTridiagonal: more eigenpairs requested than the matrix order");
  }

  Real bisect(std::size_t index, Real lo) const
  {
    Real hi = upper_;
    for (int iter = 0; iter < 2000; ++iter) {
      const Real mid = lo + (hi - lo) / 2;
      if (!(mid > lo && mid < hi))
        break;
      if (count_below(mid) > index)
        hi = mid;
      else
        lo = mid;
    }
    return lo + (hi - lo) / 2;
  }

  // LU factorization with partial pivoting of (T - shift I), LAPACK xGTTRF layout.
  struct Factorization
  {
    std::vector<Real> dl, d, du, du2;
    std::vector<unsigned char> swapped;
  };

  Factorization factor(Real shift) const
  {
    const std::size_t n = size();
    Factorization f;
    f.d.resize(n);
    f.dl.assign(off_.begin(), off_.end());
    f.du.assign(off_.begin(), off_.end());
    f.du2.assign(n > 2 ? n - 2 : 0, Real(0));
    f.swapped.assign(n > 1 ? n - 1 : 0, 0);
    for (std::size_t i = 0; i < n; ++i)
      f.d[i] = diag_[i] - shift;

    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (std::abs(f.d[i]) >= std::abs(f.dl[i])) {
        if (f.d[i] != 0) {
          const Real fact = f.dl[i] / f.d[i];
          f.dl[i] = fact;
          f.d[i + 1] -= fact * f.du[i];
        }
      } else {
        const Real fact = f.d[i] / f.dl[i];
        f.d[i] = f.dl[i];
        f.dl[i] = fact;
        const Real temp = f.du[i];
        f.du[i] = f.d[i + 1];
        f.d[i + 1] = temp - fact * f.d[i + 1];
        if (i + 2 < n) {
          f.du2[i] = f.du[i + 1];
          f.du[i + 1] = -fact * f.du[i + 1];
        }
        f.swapped[i] = 1;
      }
    }
    // an exactly singular pivot is replaced by a tiny one; inverse iteration
    // only needs the direction of the (huge) solution
    const Real tiny = std::numeric_limits<Real>::epsilon() * std::max<Real>(norm_, 1);
    for (Real& p : f.d)
      if (std::abs(p) < tiny)
        p = std::copysign(tiny, p == 0 ? Real(1) : p);
    return f;
  }

  static void solve(const Factorization& f, std::span<Real> b)
  {
    const std::size_t n = b.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (!f.swapped[i]) {
        b[i + 1] -= f.dl[i] * b[i];
      } else {
        const Real temp = b[i] - f.dl[i] * b[i + 1];
        b[i] = b[i + 1];
        b[i + 1] = temp;
      }
    }
    b[n - 1] /= f.d[n - 1];
    if (n > 1)
      b[n - 2] = (b[n - 2] - f.du[n - 2] * b[n - 1]) / f.d[n - 2];
    for (std::size_t i = n - 2; i-- > 0;)
      b[i] = (b[i] - f.du[i] * b[i + 1] - f.du2[i] * b[i + 2]) / f.d[i];
  }

  static void normalize(std::span<Real> v)
  {
    Real scale = 0;
    for (Real x : v)
      scale = std::max(scale, std::abs(x));
    if (scale == 0)
      return;
    Real ss = 0;
    for (Real& x : v) {
      x /= scale;
      ss += x * x;
    }
    const Real inv = 1 / std::sqrt(ss);
    for (Real& x : v)
      x *= inv;
  }

  void inverse_iteration(std::span<const Real> values, Matrix<Real>& vectors) const
  {
    const std::size_t n = size();
    const Real eps = std::numeric_limits<Real>::epsilon();
    const Real scale = std::max<Real>(norm_, 1);
    const Real cluster_gap = Real(1e-3) * scale;
    const Real perturbation = 10 * eps * scale;

    std::vector<Real> y(n);
    std::size_t cluster_begin = 0;
    Real previous_shift = 0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      Real shift = values[k];
      if (k > 0 && values[k] - values[k - 1] < cluster_gap) {
        if (shift <= previous_shift)
          shift = previous_shift + perturbation;
      } else {
        cluster_begin = k;
      }
      previous_shift = shift;

      // deterministic pseudo-random start vector
      std::uint64_t state = 0x9E3779B97F4A7C15ull ^ (k * 0xBF58476D1CE4E5B9ull);
      for (std::size_t i = 0; i < n; ++i) {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        y[i] = static_cast<Real>(static_cast<double>(state >> 11) * 0x1.0p-53) - Real(0.5);
      }

      const Factorization f = factor(shift);
      for (int iter = 0; iter < 4; ++iter) {
        solve(f, y);
        for (std::size_t j = cluster_begin; j < k; ++j) {
          auto other = vectors.row(j);
          Real dot = 0;
          for (std::size_t i = 0; i < n; ++i)
            dot += other[i] * y[i];
          for (std::size_t i = 0; i < n; ++i)
            y[i] -= dot * other[i];
        }
        normalize(y);
      }
      std::copy(y.begin(), y.end(), vectors.row(k).begin());
    }
  }

  std::vector<Real> diag_;
  std::vector<Real> off_;
  std::vector<Real> off_sq_;
  Real pivmin_ = 0;
  Real lower_ = 0;
  Real upper_ = 0;
  Real norm_ = 0;
};

} // namespace effmass

#endif
