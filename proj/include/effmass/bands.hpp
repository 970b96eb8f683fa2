#ifndef EFFMASS_BANDS_HPP
#define EFFMASS_BANDS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "effmass/errors.hpp"
#include "effmass/numeric.hpp"
#include "effmass/tridiagonal.hpp"

/** @file effmass/bands.hpp
    @brief Bloch bands of the potential s*sin^2(x) in scaled units.

    Units: wavevectors in k_L = pi/b, energies in E_R = hbar^2 k_L^2 / 2m,
    positions in 1/k_L. The periodic part of a Bloch state at quasimomentum k is
    expanded as u(x) = sum_j C_j exp(2ijx), so the plane wave with index j
    carries total momentum k + 2j, and the Hamiltonian is the real symmetric
    tridiagonal matrix

        H[j][j]   = (k + 2j)^2 + s/2
        H[j][j+1] = -s/4

    Quasimomenta outside [-1, 1) are reduced by an even integer and the
    coefficient indices translated, so the solution is exactly periodic in the
    extended zone.
 */

namespace effmass {

inline constexpr double degeneracy_tolerance = 1e-6;
inline constexpr double fd_step = 1e-3;

struct LatticeSpec
{
  double s = 0.0;          // potential depth in units of E_R
  int cutoff = 32;         // plane waves j = -cutoff..cutoff
  int n_bands = 16;        // lowest bands retained

  std::size_t basis_size() const noexcept { return static_cast<std::size_t>(2 * cutoff + 1); }

  /// Whether the retained bands are well inside the basis (2J+1 >= n_bands + 8).
  bool well_converged() const noexcept { return basis_size() >= static_cast<std::size_t>(n_bands) + 8; }

  void validate() const
  {
    if (!std::isfinite(s) || s < 0)
      throw DomainError("s", "potential strength must be finite and >= 0");
    if (cutoff < 1)
      throw ConfigError("cutoff must be >= 1");
    if (n_bands < 1 || static_cast<std::size_t>(n_bands) > basis_size())
      throw ConfigError("n_bands = " + std::to_string(n_bands) + " exceeds the basis size "
                        + std::to_string(basis_size()) + " (2*cutoff+1)");
  }
};

/// How the eigenvector signs of a solution were fixed.
struct GaugeTag
{
  /// Seed convention: in every band the largest-magnitude coefficient is real
  /// positive. A chained solution may deviate from it, see `flipped`.
  bool chained = false;
  double chain_origin = 0.0;        // quasimomentum where the chain was seeded
  std::vector<signed char> flipped; // per band: 1 when the sign differs from the seed convention
  int refinements = 0;              // intermediate solves used to carry signs across fast rotations
};

class BlochSolution
{
public:
  BlochSolution() = default;
  BlochSolution(double k, double reduced_k, int j_min, std::vector<double> energies, Matrix<double> coeffs)
    : k_(k), reduced_k_(reduced_k), j_min_(j_min), energies_(std::move(energies)), coeffs_(std::move(coeffs))
  {
    gauge_.flipped.assign(energies_.size(), 0);
  }

  double k() const noexcept { return k_; }
  double reduced_k() const noexcept { return reduced_k_; }
  /// Plane-wave index of coefficient column 0.
  int j_min() const noexcept { return j_min_; }
  int j_max() const noexcept { return j_min_ + static_cast<int>(coeffs_.cols()) - 1; }

  std::size_t bands() const noexcept { return energies_.size(); }
  std::size_t basis_size() const noexcept { return coeffs_.cols(); }

  double energy(std::size_t n) const noexcept { return energies_[n]; }
  std::span<const double> energies() const noexcept { return energies_; }
  std::span<const double> coefficients(std::size_t n) const noexcept { return coeffs_.row(n); }

  /// Coefficient of exp(i(k + 2j)x); zero outside the basis window.
  double coefficient(std::size_t n, int j) const noexcept
  {
    if (j < j_min_ || j > j_max())
      return 0.0;
    return coeffs_(n, static_cast<std::size_t>(j - j_min_));
  }

  /// Total momentum k + 2j of coefficient column `col`.
  double momentum(std::size_t col) const noexcept { return k_ + 2.0 * (j_min_ + static_cast<int>(col)); }

  const GaugeTag& gauge() const noexcept { return gauge_; }
  GaugeTag& gauge() noexcept { return gauge_; }

  void flip(std::size_t n) noexcept
  {
    for (double& c : coeffs_.row(n))
      c = -c;
    gauge_.flipped[n] ^= 1;
  }

private:
  double k_ = 0.0;
  double reduced_k_ = 0.0;
  int j_min_ = 0;
  std::vector<double> energies_;
  Matrix<double> coeffs_;
  GaugeTag gauge_;
};

/// Overlap of the periodic parts <u_n(a)|u_m(b)>, summed over common plane-wave indices.
inline double periodic_overlap(const BlochSolution& a, std::size_t n, const BlochSolution& b, std::size_t m)
{
  const int lo = std::max(a.j_min(), b.j_min());
  const int hi = std::min(a.j_max(), b.j_max());
  double acc = 0.0;
  for (int j = lo; j <= hi; ++j)
    acc += a.coefficient(n, j) * b.coefficient(m, j);
  return acc;
}

/// Overlap of full Bloch functions, matching plane waves by total momentum.
/// Meaningful when a.k() - b.k() is an even integer.
inline double bloch_overlap(const BlochSolution& a, std::size_t n, const BlochSolution& b, std::size_t m)
{
  const double shift = (a.k() - b.k()) / 2.0;
  const int offset = static_cast<int>(std::lround(shift));
  if (std::abs(shift - offset) > 1e-9)
    throw ConfigError("bloch_overlap: quasimomenta differ by a non-even amount");
  // momentum a.k + 2j == b.k + 2(j + offset)
  double acc = 0.0;
  for (int j = a.j_min(); j <= a.j_max(); ++j)
    acc += a.coefficient(n, j) * b.coefficient(m, j + offset);
  return acc;
}

namespace detail {

inline void apply_seed_convention(BlochSolution& sol)
{
  for (std::size_t n = 0; n < sol.bands(); ++n) {
    auto c = sol.coefficients(n);
    double largest = 0.0;
    for (double x : c)
      largest = std::max(largest, std::abs(x));
    for (double x : c) {
      if (std::abs(x) >= (1.0 - 1e-8) * largest) {
        if (x < 0)
          sol.flip(n);
        break;
      }
    }
    sol.gauge().flipped[n] = 0;
  }
}

} // namespace detail

/// Bands and plane-wave eigenvectors at any real quasimomentum `k`.
/// Signs follow the seed convention (largest coefficient real positive).
inline BlochSolution solve_bloch(const LatticeSpec& spec, double k)
{
  spec.validate();
  if (!std::isfinite(k))
    throw DomainError("k", "quasimomentum must be finite");

  const double shift = std::floor((k + 1.0) / 2.0);
  const double reduced = k - 2.0 * shift;
  const int m = static_cast<int>(shift);
  const int J = spec.cutoff;
  const std::size_t size = spec.basis_size();

  std::vector<double> diag(size);
  std::vector<double> off(size - 1, -spec.s / 4.0);
  for (std::size_t i = 0; i < size; ++i) {
    const double q = reduced + 2.0 * (static_cast<int>(i) - J);
    diag[i] = q * q + spec.s / 2.0;
  }
  SymmetricTridiagonal<double> h(std::move(diag), std::move(off));
  auto pairs = h.lowest(static_cast<std::size_t>(spec.n_bands));

  // column i holds plane wave reduced + 2(i - J) = k + 2(i - J - m)
  BlochSolution sol(k, reduced, -J - m, std::move(pairs.values), std::move(pairs.vectors));
  detail::apply_seed_convention(sol);
  sol.gauge().chain_origin = k;
  return sol;
}

struct ChainOptions
{
  double min_overlap = 0.9;
  std::size_t bands = 0;     // leading bands to chain; 0 chains every retained band
  int max_refine_depth = 0;  // 0: report insufficient resolution as an error
};

namespace detail {

// Sign to apply to band n of `to` so that it continues `from` smoothly.
inline int transport_sign(const LatticeSpec& spec, const BlochSolution& from, const BlochSolution& to,
                          std::size_t n, const ChainOptions& opt, int depth, int& refinements)
{
  const double ov = periodic_overlap(from, n, to, n);
  if (std::abs(ov) >= opt.min_overlap)
    return ov < 0 ? -1 : 1;
  if (depth <= 0) {
    throw ResolutionError("gauge chain: overlap " + std::to_string(ov) + " of band " + std::to_string(n)
                          + " between k = " + std::to_string(from.k()) + " and k = " + std::to_string(to.k())
                          + " is below " + std::to_string(opt.min_overlap) + "; use a finer k grid");
  }
  ++refinements;
  const BlochSolution mid = solve_bloch(spec, 0.5 * (from.k() + to.k()));
  const int first = transport_sign(spec, from, mid, n, opt, depth - 1, refinements);
  const int second = transport_sign(spec, mid, to, n, opt, depth - 1, refinements);
  return first * second;
}

} // namespace detail

/// Aligns the signs of `next` with `previous` (continuity along a path).
inline void chain_step(const LatticeSpec& spec, const BlochSolution& previous, BlochSolution& next,
                       const ChainOptions& opt = {})
{
  const std::size_t nb = opt.bands == 0 ? next.bands() : std::min(opt.bands, next.bands());
  int refinements = 0;
  for (std::size_t n = 0; n < nb; ++n)
    if (detail::transport_sign(spec, previous, next, n, opt, opt.max_refine_depth, refinements) < 0)
      next.flip(n);
  next.gauge().chained = true;
  next.gauge().chain_origin = previous.gauge().chain_origin;
  next.gauge().refinements = previous.gauge().refinements + refinements;
}

/// Solutions along a monotone path with eigenvector signs chosen continuously.
/// The first point carries the seed convention.
inline std::vector<BlochSolution> gauge_chain(const LatticeSpec& spec, std::span<const double> path,
                                              const ChainOptions& opt = {})
{
  if (path.size() > 1) {
    const bool ascending = path[1] > path[0];
    for (std::size_t i = 1; i < path.size(); ++i)
      if (ascending ? !(path[i] > path[i - 1]) : !(path[i] < path[i - 1]))
        throw ConfigError("gauge_chain: path must be strictly monotone");
  }

  std::vector<BlochSolution> out;
  out.reserve(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    BlochSolution sol = solve_bloch(spec, path[i]);
    if (i == 0) {
      sol.gauge().chained = true;
      sol.gauge().chain_origin = path[0];
    } else {
      chain_step(spec, out.back(), sol, opt);
    }
    out.push_back(std::move(sol));
  }
  return out;
}

/// Sign picked up by band n of a chain over one full zone, -1 -> 1 with
/// `points` samples: +1 or -1 for a Zak phase of 0 or pi.
inline int zone_loop_sign(const LatticeSpec& spec, std::size_t band, std::size_t points)
{
  std::vector<double> path(points);
  for (std::size_t i = 0; i < points; ++i)
    path[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(points - 1);
  ChainOptions opt;
  opt.bands = band + 1;
  opt.max_refine_depth = 40;
  const auto chain = gauge_chain(spec, path, opt);
  const double ov = bloch_overlap(chain.back(), band, chain.front(), band);
  return ov < 0 ? -1 : 1;
}

/// Scaled momentum matrix elements p_{nn'} = sum_j (k + 2j) C_n[j] C_n'[j].
/// In these units the group velocity of band n (in units of the recoil
/// velocity) equals p_{nn}.
inline Matrix<double> momentum_elements(const BlochSolution& sol)
{
  const std::size_t nb = sol.bands();
  const std::size_t cols = sol.basis_size();
  Matrix<double> p(nb, nb);
  std::vector<double> weighted(cols);
  for (std::size_t a = 0; a < nb; ++a) {
    auto ca = sol.coefficients(a);
    for (std::size_t c = 0; c < cols; ++c)
      weighted[c] = sol.momentum(c) * ca[c];
    for (std::size_t b = a; b < nb; ++b) {
      auto cb = sol.coefficients(b);
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c)
        acc += weighted[c] * cb[c];
      p(a, b) = acc;
      p(b, a) = acc;
    }
  }
  return p;
}

/// First-order interband mixing Delta_{n'n} = F xi_{n'n} / E_{n'n} for the
/// leading `count` bands (0 means all retained bands). With the interband Lax
/// connection xi_{n'n} = -2i p_{n'n} / E_{n'n} this is purely imaginary:
/// Delta_{n'n} = -2i F p_{n'n} / E_{n'n}^2.
inline Matrix<std::complex<double>> delta_parameters(const BlochSolution& sol, const Matrix<double>& p,
                                                     double force, std::size_t count = 0)
{
  const std::size_t nb = count == 0 ? sol.bands() : std::min(count, sol.bands());
  Matrix<std::complex<double>> delta(nb, nb);
  if (force == 0.0)
    return delta;
  for (std::size_t a = 0; a < nb; ++a) {
    for (std::size_t b = 0; b < nb; ++b) {
      if (a == b)
        continue;
      const double gap = sol.energy(a) - sol.energy(b);
      if (std::abs(gap) < degeneracy_tolerance)
        throw DegeneracyError("bands " + std::to_string(a) + " and " + std::to_string(b)
                              + " are degenerate at k = " + std::to_string(sol.k())
                              + "; first-order mixing is undefined there");
      delta(a, b) = {0.0, -2.0 * force * p(a, b) / (gap * gap)};
    }
  }
  return delta;
}

inline Matrix<std::complex<double>> delta_parameters(const BlochSolution& sol, double force, std::size_t count = 0)
{
  return delta_parameters(sol, momentum_elements(sol), force, count);
}

/// Real matrix A_{n'n} = <u_n'| d/dk u_n> from a five-point stencil on
/// solutions sign-aligned with the centre point; the Lax connection is i*A.
inline Matrix<double> lax_connection_fd(const LatticeSpec& spec, double k, std::size_t count, double h = fd_step)
{
  const BlochSolution centre = solve_bloch(spec, k);
  const std::size_t nb = std::min(count, centre.bands());
  const double offsets[4] = {-2 * h, -h, h, 2 * h};
  const double weights[4] = {1.0, -8.0, 8.0, -1.0};
  ChainOptions opt;
  opt.bands = nb;
  opt.max_refine_depth = 40;

  Matrix<double> a(nb, nb);
  for (int s = 0; s < 4; ++s) {
    BlochSolution sol = solve_bloch(spec, k + offsets[s]);
    chain_step(spec, centre, sol, opt);
    for (std::size_t r = 0; r < nb; ++r)
      for (std::size_t c = 0; c < nb; ++c)
        a(r, c) += weights[s] * periodic_overlap(centre, r, sol, c) / (12 * h);
  }
  return a;
}

/// Diagonal of the Lax connection (imaginary unit stripped), expected to vanish
/// for the inversion-symmetric potential in a real gauge.
inline std::vector<double> diagonal_lax_connection(const LatticeSpec& spec, double k, std::size_t count)
{
  const auto a = lax_connection_fd(spec, k, count);
  std::vector<double> out(a.rows());
  for (std::size_t n = 0; n < a.rows(); ++n)
    out[n] = a(n, n);
  return out;
}

enum class MassMethod { curvature, sum_rule };

/// 1/m* = 1 + 4 sum_{n' != n} p_{nn'}^2 / (E_n - E_n') over the retained bands.
inline double inverse_mass_sum_rule(const BlochSolution& sol, const Matrix<double>& p, std::size_t band)
{
  CompensatedSum<double> acc;
  acc += 1.0;
  for (std::size_t m = 0; m < sol.bands(); ++m)
    if (m != band)
      acc += 4.0 * p(band, m) * p(m, band) / (sol.energy(band) - sol.energy(m));
  return acc.value();
}

/// Inverse band effective mass in units of 1/m: (1/2) d^2E/dk^2.
inline double inverse_effective_mass(const LatticeSpec& spec, std::size_t band, double k,
                                     MassMethod method = MassMethod::sum_rule)
{
  if (band >= static_cast<std::size_t>(spec.n_bands))
    throw ConfigError("band " + std::to_string(band) + " is not retained (n_bands = "
                      + std::to_string(spec.n_bands) + ")");
  if (method == MassMethod::curvature) {
    auto energy = [&](double q) { return solve_bloch(spec, q).energy(band); };
    return 0.5 * second_derivative(energy, k, fd_step);
  }
  const BlochSolution sol = solve_bloch(spec, k);
  return inverse_mass_sum_rule(sol, momentum_elements(sol), band);
}

/// Band effective mass in units of the bare mass; infinite at an inflection point.
inline double effective_mass(const LatticeSpec& spec, std::size_t band, double k,
                             MassMethod method = MassMethod::sum_rule)
{
  return 1.0 / inverse_effective_mass(spec, band, k, method);
}

/// Reduced mass 1/m_red = 1/m*_N - 1/m*_nbar, absent when the curvatures coincide.
inline std::optional<double> reduced_mass(const LatticeSpec& spec, std::size_t band, std::size_t partner, double k,
                                          MassMethod method = MassMethod::sum_rule)
{
  const double inv = inverse_effective_mass(spec, band, k, method) - inverse_effective_mass(spec, partner, k, method);
  if (std::abs(inv) < 1e-12)
    return std::nullopt;
  return 1.0 / inv;
}

/// The band closest in energy to `band` at quasimomentum k.
inline std::size_t nearest_band(const BlochSolution& sol, std::size_t band)
{
  std::size_t best = band == 0 ? 1 : 0;
  for (std::size_t n = 0; n < sol.bands(); ++n) {
    if (n == band)
      continue;
    if (std::abs(sol.energy(n) - sol.energy(band)) < std::abs(sol.energy(best) - sol.energy(band)))
      best = n;
  }
  return best;
}

} // namespace effmass

#endif
