#ifndef EFFMASS_FIRSTORDER_HPP
#define EFFMASS_FIRSTORDER_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "effmass/bands.hpp"
#include "effmass/errors.hpp"
#include "effmass/numeric.hpp"
#include "effmass/scenario.hpp"
#include "effmass/timeseries.hpp"

/** @file effmass/firstorder.hpp
    @brief Response of a Gaussian Bloch wavepacket to a suddenly applied force,
           to first order in the interband mixing.

    With q the initial quasimomentum and k = q + F t the drifted one,

      a(t) = F sum_q w(q) [ 1/m*_N(k)
             + 4 sum_{n != N} E_nN(k)/E_nN(q)^2 p_Nn(k) p_nN(q) cos gamma_Nn(q, t) ]

    where w is the normalized Gaussian weight of the packet, gamma_Nn the
    difference of the dynamical phases of bands N and n accumulated along the
    trajectory, and the momentum elements are taken on one sign-continuous
    chain so that the products are gauge independent. At t = 0 the sum rule
    cancels the interband terms against the curvature term and the packet
    starts with the bare mass.
 */

namespace effmass {

/// The dimensionless problem: everything the dynamics depend on.
struct Dynamics
{
  double s = 0.0;
  double force = 0.0;
  double sigma = 0.2;
  int band = 0;
  double horizon = 0.0;  // units of hbar/E_R
};

inline Dynamics make_dynamics(const ScaledParams& sp, double horizon)
{
  return {sp.s, sp.force, sp.sigma, sp.band, horizon};
}

struct FirstOrderOptions
{
  int cutoff = 32;
  int n_bands = 16;
  std::size_t min_samples = 4096;
  double samples_per_period = 40.0;
  std::size_t q_points = 0;             // 0: 513, or 2049 for sigma <= 0.01
  double table_step = 2e-3;
  int bands_below = 2;                  // coupled bands below N
  int bands_above = 4;                  // coupled bands above N, extended while the tail is significant
  double tail_tolerance = 1e-7;         // sum-rule weight left outside the coupled set
  double quadrature_tolerance = 1e-4;   // in units of F
  int quadrature_refinements = 3;
  double zener_warning = 0.1;           // largest first-order mixing considered safe
};

/// Bands tabulated on a uniform quasimomentum grid along one gauge chain.
class BandTable
{
public:
  BandTable() = default;

  /// Bands 0..`chained`-1 are tabulated and sign-chained; `band` is the
  /// initially occupied band whose couplings p_{band,n} are stored. The part of
  /// the sum rule not carried by the `coupled` bands is tabulated separately.
  BandTable(const LatticeSpec& spec, std::size_t band, std::size_t chained, const std::vector<std::size_t>& coupled,
            double lo, double hi, double step)
    : band_(band)
  {
    const auto count = static_cast<std::size_t>(std::ceil((hi - lo) / step)) + 1;
    grid_ = {lo, step, std::max<std::size_t>(count, 4)};
    energy_.assign(chained, std::vector<double>(grid_.count));
    slope_.assign(chained, std::vector<double>(grid_.count));
    coupling_.assign(chained, std::vector<double>(grid_.count));
    inverse_mass_.assign(grid_.count, 1.0);
    remainder_.assign(grid_.count, 0.0);

    const bool interband = spec.s > 0;
    ChainOptions chain;
    chain.bands = chained;
    chain.max_refine_depth = 40;

    BlochSolution previous;
    std::vector<double> row(static_cast<std::size_t>(spec.n_bands));
    for (std::size_t i = 0; i < grid_.count; ++i) {
      BlochSolution sol = solve_bloch(spec, grid_.at(i));
      if (interband && i > 0)
        chain_step(spec, previous, sol, chain);

      // p_{band,m} for every retained band: the sum rule needs all of them
      auto cn = sol.coefficients(band);
      for (std::size_t m = 0; m < sol.bands(); ++m) {
        auto cm = sol.coefficients(m);
        double acc = 0.0;
        for (std::size_t c = 0; c < sol.basis_size(); ++c)
          acc += sol.momentum(c) * cn[c] * cm[c];
        row[m] = acc;
      }
      for (std::size_t n = 0; n < chained; ++n) {
        energy_[n][i] = sol.energy(n);
        auto c = sol.coefficients(n);
        double acc = 0.0;
        for (std::size_t j = 0; j < sol.basis_size(); ++j)
          acc += sol.momentum(j) * c[j] * c[j];
        slope_[n][i] = acc;
        coupling_[n][i] = interband ? row[n] : 0.0;
      }
      if (interband) {
        CompensatedSum<double> inv;
        inv += 1.0;
        for (std::size_t m = 0; m < sol.bands(); ++m)
          if (m != band)
            inv += 4.0 * row[m] * row[m] / (sol.energy(band) - sol.energy(m));
        inverse_mass_[i] = inv.value();
        CompensatedSum<double> rest;
        for (std::size_t m = 0; m < sol.bands(); ++m)
          if (m != band && std::find(coupled.begin(), coupled.end(), m) == coupled.end())
            rest += 4.0 * row[m] * row[m] / (sol.energy(band) - sol.energy(m));
        remainder_[i] = rest.value();
        for (std::size_t n = 0; n < chained; ++n) {
          if (n == band)
            continue;
          const double gap = sol.energy(n) - sol.energy(band);
          if (std::abs(gap) < degeneracy_tolerance)
            throw DegeneracyError("bands " + std::to_string(band) + " and " + std::to_string(n)
                                  + " are degenerate at k = " + std::to_string(grid_.at(i)));
        }
      }
      previous = std::move(sol);
    }
    refinements_ = interband && grid_.count > 0 ? previous.gauge().refinements : 0;

    // cumulative integral of E_n with the end-point derivative correction
    // (exact for cubics); dE/dk = 2 p_nn
    phase_.assign(chained, std::vector<double>(grid_.count, 0.0));
    for (std::size_t n = 0; n < chained; ++n) {
      const auto& e = energy_[n];
      const auto& d = slope_[n];
      for (std::size_t i = 0; i + 1 < grid_.count; ++i)
        phase_[n][i + 1] = phase_[n][i] + 0.5 * step * (e[i] + e[i + 1])
                         + step * step / 12.0 * (2.0 * d[i] - 2.0 * d[i + 1]);
    }
  }

  const UniformGrid& grid() const noexcept { return grid_; }
  std::size_t band() const noexcept { return band_; }
  std::size_t bands() const noexcept { return energy_.size(); }
  int refinements() const noexcept { return refinements_; }

  bool covers(double lo, double hi) const noexcept
  {
    return !energy_.empty() && lo >= grid_.origin && hi <= grid_.back();
  }

  CubicStencil stencil(double k) const { return grid_.stencil(k); }

  const std::vector<double>& energy(std::size_t n) const { return energy_[n]; }
  /// p_{band,n} along the chain
  const std::vector<double>& coupling(std::size_t n) const { return coupling_[n]; }
  /// p_nn, half the band slope
  const std::vector<double>& slope(std::size_t n) const { return slope_[n]; }
  /// cumulative integral of E_n from the grid origin
  const std::vector<double>& phase_integral(std::size_t n) const { return phase_[n]; }
  /// 1/m* of `band()` from the sum rule
  const std::vector<double>& inverse_mass() const { return inverse_mass_; }
  /// sum-rule terms of the bands outside the coupled set
  const std::vector<double>& remainder() const { return remainder_; }

private:
  std::size_t band_ = 0;
  UniformGrid grid_;
  std::vector<std::vector<double>> energy_, slope_, coupling_, phase_;
  std::vector<double> inverse_mass_, remainder_;
  int refinements_ = 0;
};

struct Timescales
{
  std::size_t band = 0;
  std::size_t partner = 0;                    // nearest band at k = 0
  double gap = 0.0;                           // E_band - E_partner at k = 0
  double oscillation = 0.0;                   // 2 pi / |gap|
  std::optional<double> bloch;                // 2 / F
  std::optional<double> reduced_mass;         // 1/(1/m*_N - 1/m*_partner)
  std::optional<double> decay;                // sqrt(15) |m_red| / (2 sigma^2)
  std::optional<double> oscillation_over_bloch;
  std::optional<double> decay_over_bloch;
};

/// Characteristic times in units of hbar/E_R.
inline Timescales timescales(const LatticeSpec& spec, const Dynamics& dyn)
{
  const auto n = static_cast<std::size_t>(dyn.band);
  const BlochSolution sol = solve_bloch(spec, 0.0);
  Timescales ts;
  ts.band = n;
  ts.partner = nearest_band(sol, n);
  ts.gap = sol.energy(n) - sol.energy(ts.partner);
  ts.oscillation = 2.0 * std::numbers::pi / std::abs(ts.gap);
  const auto p = momentum_elements(sol);
  const double inv = inverse_mass_sum_rule(sol, p, n) - inverse_mass_sum_rule(sol, p, ts.partner);
  if (std::abs(inv) > 1e-12) {
    ts.reduced_mass = 1.0 / inv;
    ts.decay = std::sqrt(15.0) * std::abs(*ts.reduced_mass) / (2.0 * dyn.sigma * dyn.sigma);
  }
  if (dyn.force > 0) {
    ts.bloch = 2.0 / dyn.force;
    ts.oscillation_over_bloch = ts.oscillation / *ts.bloch;
    if (ts.decay)
      ts.decay_over_bloch = *ts.decay / *ts.bloch;
  }
  return ts;
}

/// Closed-form early-time approximation of the oscillating acceleration
/// a(t) - baseline(t) near k = 0, keeping only the nearest band:
///   A0 (1 + x^2)^(-1/4) cos(E_N,partner(0) t + atan(x)/2),  x = 2 sigma^2 t / m_red.
/// `raw` uses A0 = 4 F p^2 / E_partner,N at k = 0; `matched` rescales A0 to a
/// supplied initial value (typically the full series at t = 0).
struct EnvelopeSeries
{
  std::vector<double> t;
  std::vector<double> envelope;
  std::vector<double> raw;
  std::vector<double> matched;
  double raw_amplitude = 0.0;
  double matched_amplitude = 0.0;
};

inline double envelope_factor(double t, double sigma, double reduced_mass)
{
  const double x = 2.0 * sigma * sigma * t / reduced_mass;
  return std::pow(1.0 + x * x, -0.25);
}

inline EnvelopeSeries envelope_approx(const LatticeSpec& spec, const Dynamics& dyn, const std::vector<double>& t,
                                      std::optional<double> matched_amplitude = std::nullopt)
{
  const Timescales ts = timescales(spec, dyn);
  const BlochSolution sol = solve_bloch(spec, 0.0);
  const auto p = momentum_elements(sol);
  const double pnn = p(ts.band, ts.partner);
  EnvelopeSeries out;
  out.t = t;
  out.raw_amplitude = 4.0 * dyn.force * pnn * pnn / (-ts.gap);
  out.matched_amplitude = matched_amplitude.value_or(out.raw_amplitude);
  out.envelope.resize(t.size());
  out.raw.resize(t.size());
  out.matched.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    double env = 1.0;
    double shift = 0.0;
    if (ts.reduced_mass) {
      const double x = 2.0 * dyn.sigma * dyn.sigma * t[i] / *ts.reduced_mass;
      env = std::pow(1.0 + x * x, -0.25);
      shift = 0.5 * std::atan(x);
    }
    const double c = std::cos(ts.gap * t[i] + shift);
    out.envelope[i] = env;
    out.raw[i] = out.raw_amplitude * env * c;
    out.matched[i] = out.matched_amplitude * env * c;
  }
  return out;
}

/// Trapezoid velocity from a sampled acceleration; a Richardson comparison
/// against the half-density rule guards against undersampling.
inline std::vector<double> velocity_series(const std::vector<double>& t, const std::vector<double>& a,
                                           double tolerance = 1e-5)
{
  if (t.size() != a.size())
    throw ConfigError("velocity_series: sample count mismatch");
  auto v = cumulative_trapezoid(t, a);
  if (t.size() >= 5) {
    double coarse = 0.0;
    double worst = 0.0;
    for (std::size_t i = 2; i < t.size(); i += 2) {
      coarse += 0.5 * (t[i] - t[i - 2]) * (a[i] + a[i - 2]);
      worst = std::max(worst, std::abs(v[i] - coarse) / 3.0);
    }
    if (worst > tolerance)
      throw ResolutionError("velocity quadrature error estimate " + std::to_string(worst)
                            + " exceeds tolerance; increase the number of time samples");
  }
  return v;
}

struct FirstOrderResult
{
  TimeSeries series;     // first-order response, with baseline columns
  TimeSeries baseline;   // band effective-mass response alone
  Timescales scales;
};

class FirstOrderEngine
{
public:
  explicit FirstOrderEngine(const Dynamics& dyn, const FirstOrderOptions& opt = {})
    : dyn_(dyn), opt_(opt)
  {
    spec_.s = dyn.s;
    spec_.cutoff = opt.cutoff;
    spec_.n_bands = opt.n_bands;
    spec_.validate();
    if (!(dyn.sigma > 0 && dyn.sigma < 1))
      throw DomainError("sigma", "must lie in (0, 1)");
    if (!(dyn.force >= 0) || !std::isfinite(dyn.force))
      throw DomainError("force", "must be finite and >= 0");
    if (!(dyn.horizon >= 0))
      throw DomainError("horizon", "must be >= 0");
    if (dyn.band < 0 || dyn.band + opt.bands_above >= opt.n_bands)
      throw ConfigError("band " + std::to_string(dyn.band) + " leaves fewer than "
                        + std::to_string(opt.bands_above) + " retained bands above it");
    if (dyn.force > 0 && dyn.horizon > 1.25 * 2.0 / dyn.force * (1 + 1e-12))
      throw ConfigError("first-order horizon is limited to 1.25 Bloch periods");

    q_points_ = opt.q_points ? opt.q_points : (dyn.sigma <= 0.01 ? 2049 : 513);
    if (q_points_ % 2 == 0)
      ++q_points_;
    select_bands();
    const double reach = 8.0 * dyn.sigma;
    ensure_range(-reach, reach + dyn.force * dyn.horizon);
  }

  const LatticeSpec& lattice() const noexcept { return spec_; }
  const Dynamics& dynamics() const noexcept { return dyn_; }
  const BandTable& table() const noexcept { return table_; }
  /// Bands n != N entering the oscillating sum.
  const std::vector<std::size_t>& coupled() const noexcept { return coupled_; }
  /// Weighted sum-rule share of the bands left out at t = 0.
  double excluded_weight() const noexcept { return excluded_weight_; }
  /// Share of the outermost coupled band in the oscillation amplitude at t = 0.
  double outermost_share() const noexcept { return outermost_share_; }

  /// Makes sure the chained table covers [lo, hi], rebuilding it if needed.
  void ensure_range(double lo, double hi)
  {
    if (table_.covers(lo, hi))
      return;
    const double h = opt_.table_step;
    double a = lo - 4 * h;
    double b = hi + 4 * h;
    if (table_.bands() > 0) {
      a = std::min(a, table_.grid().origin);
      b = std::max(b, table_.grid().back());
    }
    table_ = BandTable(spec_, static_cast<std::size_t>(dyn_.band), chained_bands_, coupled_, a, b, h);
  }

  /// Dynamical phase of band n along k(t') = q + F t', 0 <= t' <= t.
  double gamma(std::size_t n, double q, double t)
  {
    if (n >= chained_bands_)
      throw ConfigError("gamma: band " + std::to_string(n) + " is not tabulated");
    if (t == 0.0)
      return 0.0;
    const double k = q + dyn_.force * t;
    ensure_range(std::min(q, k), std::max(q, k));
    if (dyn_.force == 0.0)
      return table_.stencil(q).apply(table_.energy(n)) * t;
    const auto& g = table_.phase_integral(n);
    return (table_.stencil(k).apply(g) - table_.stencil(q).apply(g)) / dyn_.force;
  }

  /// Uniform sample times covering the horizon.
  std::vector<double> sample_times() const
  {
    const Timescales ts = timescales(spec_, dyn_);
    std::size_t count = opt_.min_samples;
    if (dyn_.horizon > 0) {
      const double needed = std::ceil(opt_.samples_per_period * dyn_.horizon / ts.oscillation) + 1;
      count = std::max(count, static_cast<std::size_t>(needed));
    }
    std::vector<double> t(count);
    for (std::size_t i = 0; i < count; ++i)
      t[i] = dyn_.horizon * static_cast<double>(i) / static_cast<double>(count - 1);
    return t;
  }

  FirstOrderResult run(bool populations = false) { return run(sample_times(), populations); }

  FirstOrderResult run(const std::vector<double>& times, bool populations)
  {
    if (!times.empty())
      ensure_range(-8.0 * dyn_.sigma, 8.0 * dyn_.sigma + dyn_.force * *std::max_element(times.begin(), times.end()));

    Evaluation ev;
    std::size_t nq = q_points_;
    int refinement = 0;
    for (;; ++refinement) {
      ev = evaluate(times, nq, populations);
      if (ev.quadrature_error <= opt_.quadrature_tolerance * std::max(dyn_.force, 1e-300) || dyn_.force == 0.0)
        break;
      if (refinement == opt_.quadrature_refinements)
        throw ResolutionError("first-order quadrature did not converge: halving the q grid changes the "
                              "acceleration by " + std::to_string(ev.quadrature_error / dyn_.force) + " F");
      nq = 2 * nq - 1;
    }

    FirstOrderResult out;
    out.scales = timescales(spec_, dyn_);
    TimeSeries& ts = out.series;
    ts.provenance = Provenance::first_order;
    ts.t = times;
    ts.a = std::move(ev.a);
    ts.a_baseline = std::move(ev.a_baseline);
    ts.v = velocity_series(ts.t, ts.a);
    ts.v_baseline = velocity_series(ts.t, ts.a_baseline);
    ts.fill_effective_mass(dyn_.force);
    ts.populations = std::move(ev.populations);

    auto fmt = [](double x) { return detail::format_real(x); };
    std::string bands;
    for (auto n : coupled_)
      bands += (bands.empty() ? "" : " ") + std::to_string(n);
    ts.annotate("engine", "firstorder");
    ts.annotate("q_points", std::to_string(nq));
    ts.annotate("q_refinements", std::to_string(refinement));
    ts.annotate("quadrature_error_over_F", dyn_.force > 0 ? fmt(ev.quadrature_error / dyn_.force) : "0");
    ts.annotate("coupled_bands", bands);
    ts.annotate("excluded_sum_rule_weight", fmt(excluded_weight_));
    ts.annotate("outermost_band_share", fmt(outermost_share_));
    ts.annotate("table_step", fmt(opt_.table_step));
    ts.annotate("table_points", std::to_string(table_.grid().count));
    ts.annotate("chain_refinements", std::to_string(table_.refinements()));
    ts.annotate("sum_rule_residual", fmt(sum_rule_residual()));
    ts.annotate("max_mixing", fmt(ev.max_mixing));
    if (ev.max_mixing > opt_.zener_warning)
      ts.annotate("warning", "first-order mixing " + fmt(ev.max_mixing)
                             + " is large; interband tunneling may invalidate the expansion");

    TimeSeries& base = out.baseline;
    base.provenance = Provenance::baseline;
    base.t = ts.t;
    base.a = ts.a_baseline;
    base.v = ts.v_baseline;
    base.a_baseline = ts.a_baseline;
    base.v_baseline = ts.v_baseline;
    base.fill_effective_mass(dyn_.force);
    base.annotate("engine", "baseline");
    base.annotate("q_points", std::to_string(nq));
    return out;
  }

  /// |1/m* (sum rule) - 1/m* (curvature)| of band N at k = 0.
  double sum_rule_residual() const
  {
    const auto n = static_cast<std::size_t>(dyn_.band);
    return std::abs(inverse_effective_mass(spec_, n, 0.0, MassMethod::sum_rule)
                    - inverse_effective_mass(spec_, n, 0.0, MassMethod::curvature));
  }

private:
  struct Evaluation
  {
    std::vector<double> a, a_baseline;
    std::vector<std::vector<double>> populations;
    double quadrature_error = 0.0;
    double max_mixing = 0.0;
  };

  // Coupled set {N-2..N+4} \ {N}, extended upward until the sum-rule weight
  // of the remaining bands is negligible.
  void select_bands()
  {
    const auto N = static_cast<std::size_t>(dyn_.band);
    const std::size_t nb = static_cast<std::size_t>(spec_.n_bands);
    std::size_t upper = N + static_cast<std::size_t>(opt_.bands_above);
    const std::size_t lower = N > static_cast<std::size_t>(opt_.bands_below) ? N - opt_.bands_below : 0;

    std::vector<double> share(nb, 0.0);
    if (dyn_.s > 0) {
      // weights from a coarse q grid; signs do not matter here
      const std::size_t samples = 65;
      double norm = 0.0;
      for (std::size_t i = 0; i < samples; ++i) {
        const double q = -8.0 * dyn_.sigma + 16.0 * dyn_.sigma * static_cast<double>(i) / (samples - 1);
        const double w = std::exp(-q * q / (2.0 * dyn_.sigma * dyn_.sigma));
        norm += w;
        const BlochSolution sol = solve_bloch(spec_, q);
        const auto p = momentum_elements(sol);
        for (std::size_t n = 0; n < nb; ++n)
          if (n != N)
            share[n] += w * 4.0 * p(N, n) * p(N, n) / std::abs(sol.energy(n) - sol.energy(N));
      }
      for (double& x : share)
        x /= norm;
    }
    auto tail = [&](std::size_t up) {
      double acc = 0.0;
      for (std::size_t n = up + 1; n < nb; ++n)
        acc += share[n];
      for (std::size_t n = 0; n < lower; ++n)
        acc += share[n];
      return acc;
    };
    while (upper + 1 < nb && tail(upper) > opt_.tail_tolerance)
      ++upper;
    excluded_weight_ = tail(upper);

    coupled_.clear();
    if (dyn_.s > 0)
      for (std::size_t n = lower; n <= upper; ++n)
        if (n != N)
          coupled_.push_back(n);
    chained_bands_ = std::max(upper, N) + 1;

    double total = 0.0;
    for (auto n : coupled_)
      total += share[n];
    outermost_share_ = coupled_.empty() || total == 0.0 ? 0.0 : share[coupled_.back()] / total;
  }

  Evaluation evaluate(const std::vector<double>& times, std::size_t nq, bool populations) const
  {
    const auto N = static_cast<std::size_t>(dyn_.band);
    const double F = dyn_.force;
    const double sigma = dyn_.sigma;
    const std::size_t nc = coupled_.size();

    // q grid and Gaussian weights (normalized on the grid, and on the even subgrid)
    std::vector<double> q(nq), w(nq), w_half(nq, 0.0);
    double norm = 0.0, norm_half = 0.0;
    for (std::size_t i = 0; i < nq; ++i) {
      q[i] = -8.0 * sigma + 16.0 * sigma * static_cast<double>(i) / static_cast<double>(nq - 1);
      w[i] = std::exp(-q[i] * q[i] / (2.0 * sigma * sigma));
      norm += w[i];
      if (i % 2 == 0) {
        w_half[i] = w[i];
        norm_half += w[i];
      }
    }
    for (std::size_t i = 0; i < nq; ++i) {
      w[i] /= norm;
      w_half[i] /= norm_half;
    }

    // quantities at the initial quasimomentum
    const auto& table = table_;
    std::vector<double> phase_q(nq * nc), coef_q(nq * nc), mix_q(nq * nc);
    Evaluation ev;
    for (std::size_t i = 0; i < nq; ++i) {
      const auto st = table.stencil(q[i]);
      const double eN = st.apply(table.energy(N));
      const double gN = st.apply(table.phase_integral(N));
      for (std::size_t c = 0; c < nc; ++c) {
        const std::size_t n = coupled_[c];
        const double gap = st.apply(table.energy(n)) - eN;
        const double p = st.apply(table.coupling(n));
        phase_q[i * nc + c] = gN - st.apply(table.phase_integral(n));
        coef_q[i * nc + c] = 4.0 * p / (gap * gap);
        mix_q[i * nc + c] = 2.0 * F * p / (gap * gap);
      }
    }

    const std::size_t nt = times.size();
    ev.a.resize(nt);
    ev.a_baseline.resize(nt);
    if (populations) {
      ev.populations.assign(chained_bands_, std::vector<double>(nt, 0.0));
    }
    std::vector<CompensatedSum<double>> pops(nc);
    std::vector<double> pop_band(nc);
    for (std::size_t it = 0; it < nt; ++it) {
      const double t = times[it];
      CompensatedSum<double> acc, acc_half, base;
      if (populations)
        std::fill(pops.begin(), pops.end(), CompensatedSum<double>{});
      for (std::size_t i = 0; i < nq; ++i) {
        const double k = q[i] + F * t;
        const auto st = table.stencil(k);
        const double eN = st.apply(table.energy(N));
        const double gN = st.apply(table.phase_integral(N));
        // 1/m* assembled from the same interpolants as the oscillating terms,
        // so that the cancellation at t = 0 survives interpolation
        double inv_mass = 1.0 + st.apply(table.remainder());
        double osc = 0.0;
        for (std::size_t c = 0; c < nc; ++c) {
          const std::size_t n = coupled_[c];
          const double gap = st.apply(table.energy(n)) - eN;
          const double p = st.apply(table.coupling(n));
          inv_mass -= 4.0 * p * p / gap;
          double phase;
          if (F > 0)
            phase = (gN - st.apply(table.phase_integral(n)) - phase_q[i * nc + c]) / F;
          else
            phase = -gap * t;
          const double cg = std::cos(phase);
          osc += coef_q[i * nc + c] * gap * p * cg;
          const double mix_k = 2.0 * F * p / (gap * gap);
          ev.max_mixing = std::max(ev.max_mixing, std::abs(mix_k));
          if (populations) {
            const double mq = mix_q[i * nc + c];
            pops[c] += w[i] * (mix_k * mix_k + mq * mq - 2.0 * mix_k * mq * cg);
          }
        }
        const double value = F * (inv_mass + osc);
        acc += w[i] * value;
        if (w_half[i] != 0.0)
          acc_half += w_half[i] * value;
        base += w[i] * F * inv_mass;
      }
      ev.a[it] = acc.value();
      ev.a_baseline[it] = base.value();
      ev.quadrature_error = std::max(ev.quadrature_error, std::abs(acc.value() - acc_half.value()));
      if (populations) {
        CompensatedSum<double> leaked;
        for (std::size_t c = 0; c < nc; ++c) {
          ev.populations[coupled_[c]][it] = pops[c].value();
          leaked += pops[c].value();
        }
        ev.populations[N][it] = 1.0 - leaked.value();
      }
    }
    return ev;
  }

  Dynamics dyn_;
  FirstOrderOptions opt_;
  LatticeSpec spec_;
  std::size_t q_points_ = 0;
  std::vector<std::size_t> coupled_;
  std::size_t chained_bands_ = 1;
  double excluded_weight_ = 0.0;
  double outermost_share_ = 0.0;
  BandTable table_;
};

/// Dynamical phase of band n, integral of E_n(q + F t') over [0, t].
inline double gamma_phase(const LatticeSpec& spec, const Dynamics& dyn, std::size_t n, double q, double t)
{
  FirstOrderOptions opt;
  opt.cutoff = spec.cutoff;
  opt.n_bands = spec.n_bands;
  Dynamics local = dyn;
  local.horizon = 0.0;
  FirstOrderEngine engine(local, opt);
  return engine.gamma(n, q, t);
}

inline FirstOrderResult acceleration_series(const Dynamics& dyn, const FirstOrderOptions& opt = {},
                                            bool populations = false)
{
  FirstOrderEngine engine(dyn, opt);
  return engine.run(populations);
}

inline std::vector<std::vector<double>> population_firstorder(const Dynamics& dyn, const FirstOrderOptions& opt = {})
{
  FirstOrderEngine engine(dyn, opt);
  return engine.run(true).series.populations;
}

} // namespace effmass

#endif
