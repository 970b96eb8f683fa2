#ifndef EFFMASS_SPLITSTEP_HPP
#define EFFMASS_SPLITSTEP_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "effmass/bands.hpp"
#include "effmass/errors.hpp"
#include "effmass/fft.hpp"
#include "effmass/firstorder.hpp"
#include "effmass/numeric.hpp"
#include "effmass/scenario.hpp"
#include "effmass/timeseries.hpp"

/** @file effmass/splitstep.hpp
    @brief Full numerical propagation of the wavepacket on a periodic box.

    The force is carried by a uniform vector potential: in lattice units the
    Hamiltonian is (k + F t)^2 + s sin^2(x), where k is the canonical momentum
    on the grid and k + F t the mechanical one. It stays periodic in x, so the
    potential step of the Strang splitting is exact and the kinetic step is
    diagonal in Fourier space, with the phase integrated exactly over the step.

    Grid: `cells` lattice cells of length pi, `pts_per_cell` points each.
    Momenta are k_l = 2 l / cells. The potential only couples l to l +- cells,
    so every ladder l = r + j*cells is an independent Bloch problem at
    quasimomentum 2r/cells; band populations project each ladder onto the
    Bloch states at the drifted quasimomentum 2r/cells + F t.
 */

namespace effmass {

struct SimGrid
{
  std::size_t cells = 128;
  std::size_t pts_per_cell = 32;
  double dt = 1e-3;

  std::size_t size() const noexcept { return cells * pts_per_cell; }
  double dx() const noexcept { return std::numbers::pi / static_cast<double>(pts_per_cell); }
  double x(std::size_t i) const noexcept { return dx() * static_cast<double>(i); }
  /// Signed frequency index of FFT slot `l`.
  long long frequency(std::size_t l) const noexcept
  {
    const auto n = static_cast<long long>(size());
    const auto ll = static_cast<long long>(l);
    return ll < n / 2 ? ll : ll - n;
  }
  double momentum(std::size_t l) const noexcept { return 2.0 * static_cast<double>(frequency(l)) / static_cast<double>(cells); }
  /// FFT slot of signed frequency `f` (must lie in [-size/2, size/2)).
  std::size_t slot(long long f) const noexcept
  {
    const auto n = static_cast<long long>(size());
    return static_cast<std::size_t>(f < 0 ? f + n : f);
  }
  double momentum_step() const noexcept { return 2.0 / static_cast<double>(cells); }

  void validate() const
  {
    if (cells < 4 || !is_power_of_two(cells))
      throw ConfigError("grid cells must be a power of two >= 4");
    if (pts_per_cell < 4 || !is_power_of_two(pts_per_cell))
      throw ConfigError("points per cell must be a power of two >= 4");
    if (!(dt > 0) || !std::isfinite(dt))
      throw ConfigError("time step must be > 0");
  }
};

/// Smallest power-of-two box whose momentum spacing 2/cells resolves sigma/8.
inline std::size_t required_cells(double sigma)
{
  return next_power_of_two(static_cast<std::size_t>(std::ceil(16.0 / sigma - 1e-9)));
}

/// Default box: 128 cells for sigma >= 0.1, 4096 below 0.02, otherwise the
/// smallest power of two resolving the packet (at least 128).
inline std::size_t default_cells(double sigma)
{
  if (sigma >= 0.1)
    return 128;
  if (sigma < 0.02)
    return std::max<std::size_t>(4096, required_cells(sigma));
  return std::max<std::size_t>(128, required_cells(sigma));
}

inline void check_resolution(const SimGrid& grid, double sigma)
{
  if (grid.momentum_step() > sigma / 8.0 * (1 + 1e-12)) {
    const std::size_t needed = required_cells(sigma);
    throw SizingError(needed, "box of " + std::to_string(grid.cells) + " cells cannot resolve sigma = "
                                  + detail::format_real(sigma) + " (momentum spacing 2/cells must be <= sigma/8); "
                                  "use at least " + std::to_string(needed) + " cells");
  }
}

/// Wavefunction samples, normalized so that sum |psi_i|^2 = 1.
struct FieldState
{
  std::vector<std::complex<double>> psi;
  double t = 0.0;
  double norm = 1.0;  // sum |psi_i|^2 at the last update

  double measure_norm() const noexcept
  {
    double acc = 0.0;
    for (const auto& z : psi)
      acc += std::norm(z);
    return acc;
  }
};

namespace detail {

// Plane-wave index of band `band` for the free particle at reduced k.
inline int free_band_index(double k, int band)
{
  std::vector<int> js;
  for (int j = -band - 2; j <= band + 2; ++j)
    js.push_back(j);
  std::sort(js.begin(), js.end(), [k](int a, int b) {
    const double pa = k + 2.0 * a, pb = k + 2.0 * b;
    if (std::abs(pa) != std::abs(pb))
      return std::abs(pa) < std::abs(pb);
    return pa < pb;
  });
  return js[static_cast<std::size_t>(band)];
}

} // namespace detail

/// Gaussian superposition of band-N Bloch states, sum_r f(k_r) psi_N(k_r, x)
/// with f(k) = exp(-k^2 / 4 sigma^2), on the grid's quasimomenta k_r = 2r/cells.
/// Eigenvector signs are continued outward from k = 0.
inline FieldState synthesize_initial(const SimGrid& grid, const LatticeSpec& spec, double sigma, int band,
                                     const FftPlan* plan = nullptr)
{
  grid.validate();
  spec.validate();
  check_resolution(grid, sigma);
  if (band < 0 || band >= spec.n_bands)
    throw ConfigError("initial band " + std::to_string(band) + " is not retained");

  const std::size_t n = grid.size();
  const auto cells = static_cast<long long>(grid.cells);
  const auto half = static_cast<long long>(n / 2);
  std::vector<std::complex<double>> phi(n);
  const auto N = static_cast<std::size_t>(band);

  auto deposit = [&](long long r, double amp, auto&& coefficient, int j_lo, int j_hi) {
    for (int j = j_lo; j <= j_hi; ++j) {
      const long long f = r + static_cast<long long>(j) * cells;
      if (f < -half || f >= half)
        continue;
      phi[grid.slot(f)] += amp * coefficient(j);
    }
  };
  auto amplitude = [&](long long r) {
    const double k = 2.0 * static_cast<double>(r) / static_cast<double>(cells);
    return std::exp(-k * k / (4.0 * sigma * sigma));
  };

  if (spec.s == 0.0) {
    for (long long r = -cells / 2; r < cells / 2; ++r) {
      const double k = 2.0 * static_cast<double>(r) / static_cast<double>(cells);
      const int jb = detail::free_band_index(k, band);
      deposit(r, amplitude(r), [jb](int j) { return j == jb ? 1.0 : 0.0; }, jb, jb);
    }
  } else {
    ChainOptions chain;
    chain.bands = N + 1;
    chain.max_refine_depth = 20;
    for (int direction : {+1, -1}) {
      BlochSolution previous = solve_bloch(spec, 0.0);
      if (direction > 0)
        deposit(0, amplitude(0), [&](int j) { return previous.coefficient(N, j); }, previous.j_min(), previous.j_max());
      for (long long r = direction; r >= -cells / 2 && r < cells / 2; r += direction) {
        const double amp = amplitude(r);
        if (amp < 1e-20)
          break;
        BlochSolution sol = solve_bloch(spec, 2.0 * static_cast<double>(r) / static_cast<double>(cells));
        chain_step(spec, previous, sol, chain);
        deposit(r, amp, [&](int j) { return sol.coefficient(N, j); }, sol.j_min(), sol.j_max());
        previous = std::move(sol);
      }
    }
  }

  FieldState state;
  state.psi = std::move(phi);
  if (plan) {
    plan->backward(state.psi);
  } else {
    FftPlan local(n);
    local.backward(state.psi);
  }
  const double norm = state.measure_norm();
  const double scale = 1.0 / std::sqrt(norm);
  for (auto& z : state.psi)
    z *= scale;
  state.norm = state.measure_norm();
  return state;
}

struct Observables
{
  double velocity = 0.0;      // <k + F t>, units of v_R
  double acceleration = 0.0;  // F - s <sin 2x>
};

class SplitStepper
{
public:
  SplitStepper(const SimGrid& grid, double s, double force)
    : grid_(grid), s_(s), force_(force), plan_((grid.validate(), grid.size())), buffer_(grid.size())
  {
    const std::size_t n = grid.size();
    const double dt = grid.dt;
    const double inv_n = 1.0 / static_cast<double>(n);
    potential_half_.resize(n);
    potential_full_.resize(n);
    sin2x_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = grid.x(i);
      const double sx = std::sin(x);
      const double v = s * sx * sx;
      potential_half_[i] = std::polar(inv_n, -0.5 * v * dt);
      potential_full_[i] = std::polar(inv_n, -v * dt);
      sin2x_[i] = std::sin(2.0 * x);
    }
    kinetic_static_.resize(n);
    momentum_.resize(n);
    for (std::size_t l = 0; l < n; ++l) {
      const double k = grid.momentum(l);
      momentum_[l] = k;
      kinetic_static_[l] = std::polar(1.0, -dt * k * k);
    }
    // exp(-i f theta) for signed frequency f = hi*block + lo - n/2
    block_ = std::size_t{1} << ((std::bit_width(n) + 1) / 2);
    coarse_.resize(n / block_ + 1);
    fine_.resize(block_);
  }

  const SimGrid& grid() const noexcept { return grid_; }
  const FftPlan& plan() const noexcept { return plan_; }

  /// One Strang step: half potential, full kinetic, half potential.
  void step(FieldState& state) { advance(state, 1); }

  /// `steps` Strang steps with adjacent potential half steps fused.
  void advance(FieldState& state, std::size_t steps)
  {
    if (state.psi.size() != grid_.size())
      throw ConfigError("field state does not match the grid");
    auto& psi = state.psi;
    const std::size_t n = psi.size();
    const double start = state.t;
    const double scale = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      psi[i] *= potential_half_[i] * scale;
    for (std::size_t st = 0; st < steps; ++st) {
      plan_.forward(psi);
      kinetic(psi, start + static_cast<double>(st) * grid_.dt);
      plan_.backward(psi);
      const auto& pot = st + 1 == steps ? potential_half_ : potential_full_;
      for (std::size_t i = 0; i < n; ++i)
        psi[i] *= pot[i];
      ++steps_taken_;
    }
    state.t = start + static_cast<double>(steps) * grid_.dt;
    state.norm = state.measure_norm();
    if (!std::isfinite(state.norm))
      throw NumericalError("split-step propagation produced a non-finite state at step "
                           + std::to_string(steps_taken_));
  }

  Observables observables(const FieldState& state)
  {
    const std::size_t n = state.psi.size();
    double weight = 0.0, force_term = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::norm(state.psi[i]);
      weight += p;
      force_term += p * sin2x_[i];
    }
    std::copy(state.psi.begin(), state.psi.end(), buffer_.begin());
    plan_.forward(buffer_);
    double mweight = 0.0, mom = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      const double p = std::norm(buffer_[l]);
      mweight += p;
      mom += p * momentum_[l];
    }
    Observables out;
    out.velocity = mom / mweight + force_ * state.t;
    out.acceleration = force_ - s_ * force_term / weight;
    return out;
  }

  /// Populations of the lowest `spec.n_bands` bands, projecting every ladder
  /// onto the Bloch states at its drifted quasimomentum. `unresolved`, when
  /// given, receives the weight of ladders skipped as negligible.
  std::vector<double> populations(const FieldState& state, const LatticeSpec& spec, double* unresolved = nullptr)
  {
    const std::size_t n = state.psi.size();
    std::copy(state.psi.begin(), state.psi.end(), buffer_.begin());
    plan_.forward(buffer_);
    double total = 0.0;
    for (const auto& z : buffer_)
      total += std::norm(z);

    const auto cells = static_cast<long long>(grid_.cells);
    const auto half = static_cast<long long>(n / 2);
    const auto nb = static_cast<std::size_t>(spec.n_bands);
    std::vector<CompensatedSum<double>> acc(nb);
    double skipped = 0.0;
    std::vector<std::complex<double>> ladder;
    std::vector<int> index;
    for (long long r = -cells / 2; r < cells / 2; ++r) {
      ladder.clear();
      index.clear();
      double w = 0.0;
      for (long long j = -half / cells - 1; j <= half / cells + 1; ++j) {
        const long long f = r + j * cells;
        if (f < -half || f >= half)
          continue;
        const auto& z = buffer_[grid_.slot(f)];
        ladder.push_back(z);
        index.push_back(static_cast<int>(j));
        w += std::norm(z);
      }
      if (w < 1e-16 * total) {
        skipped += w;
        continue;
      }
      const double kappa = 2.0 * static_cast<double>(r) / static_cast<double>(cells) + force_ * state.t;
      const BlochSolution sol = solve_bloch(spec, kappa);
      for (std::size_t b = 0; b < nb; ++b) {
        std::complex<double> c = 0.0;
        for (std::size_t i = 0; i < ladder.size(); ++i)
          c += sol.coefficient(b, index[i]) * ladder[i];
        acc[b] += std::norm(c) / total;
      }
    }
    if (unresolved)
      *unresolved = skipped / total;
    std::vector<double> out(nb);
    for (std::size_t b = 0; b < nb; ++b)
      out[b] = acc[b].value();
    return out;
  }

private:
  // exp(-i dt [A^2 + A F dt + F^2 dt^2 / 3]) with A = k + F t: the exact
  // integral of the kinetic energy over the step.
  void kinetic(std::vector<std::complex<double>>& phi, double t)
  {
    const std::size_t n = phi.size();
    const double dt = grid_.dt;
    const double F = force_;
    if (F == 0.0) {
      for (std::size_t l = 0; l < n; ++l)
        phi[l] *= kinetic_static_[l];
      return;
    }
    // A^2 + A F dt + F^2 dt^2/3 = k^2 + k c/dt + g/dt
    const double c = dt * F * (2.0 * t + dt);
    const double g = dt * F * F * (t * t + t * dt + dt * dt / 3.0);
    const double theta = 2.0 * c / static_cast<double>(grid_.cells);  // phase per frequency unit
    const auto shift = static_cast<double>(n / 2);
    for (std::size_t h = 0; h < coarse_.size(); ++h)
      coarse_[h] = std::polar(1.0, -theta * (static_cast<double>(h * block_) - shift) - g);
    for (std::size_t lo = 0; lo < block_; ++lo)
      fine_[lo] = std::polar(1.0, -theta * static_cast<double>(lo));
    for (std::size_t l = 0; l < n; ++l) {
      const auto u = static_cast<std::size_t>(grid_.frequency(l) + static_cast<long long>(n / 2));
      phi[l] *= kinetic_static_[l] * coarse_[u / block_] * fine_[u % block_];
    }
  }

  SimGrid grid_;
  double s_ = 0.0;
  double force_ = 0.0;
  FftPlan plan_;
  std::vector<std::complex<double>> buffer_;
  std::vector<std::complex<double>> potential_half_, potential_full_, kinetic_static_;
  std::vector<double> sin2x_, momentum_;
  std::size_t block_ = 1;
  std::vector<std::complex<double>> coarse_, fine_;
  std::size_t steps_taken_ = 0;
};

struct SplitStepOptions
{
  SimGrid grid;
  int cutoff = 32;            // basis for the initial Bloch states
  int n_bands = 16;
  int projection_bands = 8;
  bool populations = false;
  std::size_t population_samples = 512;  // projections are costly; other rows are left NaN
  bool gate = true;           // rerun at twice the step and compare the final velocity
  double gate_tolerance = 1e-4;
};

inline SplitStepOptions splitstep_options(const SolverSettings& st, double sigma)
{
  SplitStepOptions opt;
  opt.grid.cells = st.grid_cells ? st.grid_cells : default_cells(sigma);
  opt.grid.pts_per_cell = st.pts_per_cell;
  opt.grid.dt = st.dt;
  opt.cutoff = st.cutoff;
  opt.n_bands = st.n_bands;
  opt.projection_bands = st.projection_bands;
  opt.gate = st.convergence_gate;
  return opt;
}

namespace detail {

struct Schedule
{
  std::size_t intervals = 0;
  std::size_t steps_per_sample = 1;
  double dt = 0.0;
};

// Output samples at t_i = i * horizon / (samples - 1), with a whole number of
// steps of at most `dt` between them.
inline Schedule schedule(double horizon, std::size_t samples, double dt)
{
  Schedule s;
  s.intervals = samples > 1 ? samples - 1 : 0;
  if (s.intervals == 0 || horizon == 0.0) {
    s.intervals = 0;
    s.dt = dt;
    return s;
  }
  s.steps_per_sample = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(horizon / (dt * static_cast<double>(s.intervals)) - 1e-9)));
  s.dt = horizon / static_cast<double>(s.steps_per_sample * s.intervals);
  return s;
}

} // namespace detail

/// Final velocity of a propagation at step `dt`, used by the convergence gate.
inline double final_velocity(const Dynamics& dyn, const SplitStepOptions& opt, double dt)
{
  SimGrid grid = opt.grid;
  const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dyn.horizon / dt - 1e-9)));
  grid.dt = dyn.horizon / static_cast<double>(steps);
  LatticeSpec spec{dyn.s, opt.cutoff, opt.n_bands};
  SplitStepper stepper(grid, dyn.s, dyn.force);
  FieldState state = synthesize_initial(grid, spec, dyn.sigma, dyn.band, &stepper.plan());
  stepper.advance(state, steps);
  return stepper.observables(state).velocity;
}

/// Propagates over the horizon and samples the observables on the same
/// uniform time grid the first-order engine uses.
inline TimeSeries run_splitstep(const Dynamics& dyn, std::size_t samples, const SplitStepOptions& opt)
{
  if (samples < 1)
    throw ConfigError("at least one sample is required");
  const auto plan = detail::schedule(dyn.horizon, samples, opt.grid.dt);
  SimGrid grid = opt.grid;
  grid.dt = plan.dt;
  grid.validate();
  LatticeSpec spec{dyn.s, opt.cutoff, opt.n_bands};
  LatticeSpec projection{dyn.s, static_cast<int>(grid.pts_per_cell / 2), opt.projection_bands};
  projection.n_bands = std::min<int>(projection.n_bands, static_cast<int>(projection.basis_size()));

  SplitStepper stepper(grid, dyn.s, dyn.force);
  FieldState state = synthesize_initial(grid, spec, dyn.sigma, dyn.band, &stepper.plan());

  TimeSeries ts;
  ts.provenance = Provenance::full_numeric;
  const std::size_t count = plan.intervals + 1;
  ts.t.resize(count);
  ts.a.resize(count);
  ts.v.resize(count);
  std::size_t stride = 1;
  if (opt.populations) {
    ts.populations.assign(static_cast<std::size_t>(projection.n_bands),
                          std::vector<double>(count, std::numeric_limits<double>::quiet_NaN()));
    const std::size_t wanted = std::max<std::size_t>(2, opt.population_samples);
    stride = count > wanted ? (count - 1 + wanted - 2) / (wanted - 1) : 1;
  }

  double max_norm_drift = 0.0, max_unresolved = 0.0, max_missing = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    if (i > 0)
      stepper.advance(state, plan.steps_per_sample);
    // sample times on the exact grid, independent of step accumulation
    state.t = count > 1 ? dyn.horizon * static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    const auto obs = stepper.observables(state);
    ts.t[i] = state.t;
    ts.a[i] = obs.acceleration;
    ts.v[i] = obs.velocity;
    max_norm_drift = std::max(max_norm_drift, std::abs(state.norm - 1.0));
    if (opt.populations && (i % stride == 0 || i + 1 == count)) {
      double unresolved = 0.0;
      const auto pop = stepper.populations(state, projection, &unresolved);
      double sum = 0.0;
      for (std::size_t b = 0; b < pop.size(); ++b) {
        ts.populations[b][i] = pop[b];
        sum += pop[b];
      }
      max_unresolved = std::max(max_unresolved, unresolved);
      max_missing = std::max(max_missing, 1.0 - sum);
    }
  }
  ts.fill_effective_mass(dyn.force);
  ts.a_baseline.assign(count, std::numeric_limits<double>::quiet_NaN());
  ts.v_baseline.assign(count, std::numeric_limits<double>::quiet_NaN());

  using detail::format_real;
  ts.annotate("engine", "splitstep");
  ts.annotate("grid_cells", std::to_string(grid.cells));
  ts.annotate("pts_per_cell", std::to_string(grid.pts_per_cell));
  ts.annotate("dt", format_real(grid.dt));
  ts.annotate("steps", std::to_string(plan.intervals * plan.steps_per_sample));
  ts.annotate("max_norm_drift", format_real(max_norm_drift));
  if (opt.populations) {
    ts.annotate("projection_bands", std::to_string(projection.n_bands));
    ts.annotate("population_stride", std::to_string(stride));
    ts.annotate("max_population_deficit", format_real(max_missing));
    ts.annotate("max_unprojected_weight", format_real(max_unresolved));
  }

  if (opt.gate && dyn.horizon > 0) {
    const double coarse = final_velocity(dyn, opt, 2.0 * grid.dt);
    const double change = std::abs(coarse - ts.v.back());
    ts.annotate("gate_dt", format_real(2.0 * grid.dt));
    ts.annotate("gate_velocity_change", format_real(change));
    ts.annotate("gate", change < opt.gate_tolerance ? "pass" : "fail");
    if (!(change < opt.gate_tolerance))
      throw ResolutionError("time step not converged: doubling dt changes the final velocity by "
                            + format_real(change) + " v_R; reduce dt");
  } else {
    ts.annotate("gate", "skipped");
  }
  return ts;
}

/// Copies the effective-mass baseline of `reference` onto `ts` (same time grid).
inline void attach_baseline(TimeSeries& ts, const TimeSeries& reference)
{
  if (reference.t.size() != ts.t.size())
    throw ConfigError("baseline and series have different time grids");
  for (std::size_t i = 0; i < ts.t.size(); ++i)
    if (std::abs(reference.t[i] - ts.t[i]) > 1e-9 * std::max(1.0, std::abs(ts.t[i])))
      throw ConfigError("baseline and series have different time grids");
  ts.a_baseline = reference.a_baseline;
  ts.v_baseline = reference.v_baseline;
}

// Checkpoints: little-endian binary.
//   offset 0   8 bytes  magic "EFFMASS\0"
//          8   u32      format version (1)
//         12   u32      reserved (0)
//         16   u32      cells
//         20   u32      points per cell
//         24   f64      time
//         32   f64      time step
//         40   u64      number of samples n (= cells * points per cell)
//         48   n pairs of f64 (real, imaginary)

inline constexpr std::uint32_t checkpoint_version = 1;

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, int bytes)
{
  for (int i = 0; i < bytes; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes)
{
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const SimGrid& grid, const FieldState& state)
{
  if (state.psi.size() != grid.size())
    throw ConfigError("checkpoint: state does not match the grid");
  std::string out;
  out.reserve(48 + 16 * state.psi.size());
  out.append("EFFMASS", 7);
  out.push_back('\0');
  detail::put_le(out, checkpoint_version, 4);
  detail::put_le(out, 0, 4);
  detail::put_le(out, grid.cells, 4);
  detail::put_le(out, grid.pts_per_cell, 4);
  detail::put_le(out, std::bit_cast<std::uint64_t>(state.t), 8);
  detail::put_le(out, std::bit_cast<std::uint64_t>(grid.dt), 8);
  detail::put_le(out, state.psi.size(), 8);
  for (const auto& z : state.psi) {
    detail::put_le(out, std::bit_cast<std::uint64_t>(z.real()), 8);
    detail::put_le(out, std::bit_cast<std::uint64_t>(z.imag()), 8);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f)
    throw IoError("write to '" + path + "' failed");
}

struct Checkpoint
{
  SimGrid grid;
  FieldState state;
};

inline Checkpoint load_checkpoint(const std::string& path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open '" + path + "'");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < 48 || std::memcmp(data.data(), "EFFMASS\0", 8) != 0)
    throw IoError("'" + path + "' is not a checkpoint");
  const auto version = detail::get_le(&data[8], 4);
  if (version != checkpoint_version)
    throw IoError("'" + path + "': unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.grid.cells = detail::get_le(&data[16], 4);
  c.grid.pts_per_cell = detail::get_le(&data[20], 4);
  c.state.t = std::bit_cast<double>(detail::get_le(&data[24], 8));
  c.grid.dt = std::bit_cast<double>(detail::get_le(&data[32], 8));
  const auto n = detail::get_le(&data[40], 8);
  if (n != c.grid.size() || data.size() != 48 + 16 * n)
    throw IoError("'" + path + "': truncated or inconsistent checkpoint");
  c.state.psi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double re = std::bit_cast<double>(detail::get_le(&data[48 + 16 * i], 8));
    const double im = std::bit_cast<double>(detail::get_le(&data[56 + 16 * i], 8));
    c.state.psi[i] = {re, im};
  }
  c.state.norm = c.state.measure_norm();
  return c;
}

} // namespace effmass

#endif
