#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "effmass/firstorder.hpp"
#include "effmass/spectral.hpp"
#include "effmass/splitstep.hpp"

using namespace effmass;
using cplx = std::complex<double>;

namespace {

SimGrid small_grid(double dt = 1e-3)
{
  SimGrid g;
  g.cells = 128;
  g.pts_per_cell = 16;
  g.dt = dt;
  return g;
}

double rb_force() { return scale(preset("rb-s7")).force; }

// Position-gauge stepper for the tilted lattice s sin^2 x - F (x - x_c),
// used only to cross-check the vector-potential stepper.
class TiltedStepper
{
public:
  TiltedStepper(const SimGrid& grid, double s, double force, double centre) : grid_(grid), plan_(grid.size())
  {
    const std::size_t n = grid.size();
    half_.resize(n);
    kin_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = grid.x(i);
      const double v = s * std::sin(x) * std::sin(x) - force * (x - centre);
      half_[i] = std::polar(1.0, -0.5 * v * grid.dt);
    }
    for (std::size_t l = 0; l < n; ++l) {
      const double k = grid.momentum(l);
      kin_[l] = std::polar(1.0 / static_cast<double>(n), -k * k * grid.dt);
    }
  }

  void advance(std::vector<cplx>& psi, std::size_t steps) const
  {
    for (std::size_t st = 0; st < steps; ++st) {
      for (std::size_t i = 0; i < psi.size(); ++i)
        psi[i] *= half_[i];
      plan_.forward(psi);
      for (std::size_t l = 0; l < psi.size(); ++l)
        psi[l] *= kin_[l];
      plan_.backward(psi);
      for (std::size_t i = 0; i < psi.size(); ++i)
        psi[i] *= half_[i];
    }
  }

  double velocity(const std::vector<cplx>& psi) const
  {
    std::vector<cplx> phi = psi;
    plan_.forward(phi);
    double w = 0.0, m = 0.0;
    for (std::size_t l = 0; l < phi.size(); ++l) {
      w += std::norm(phi[l]);
      m += std::norm(phi[l]) * grid_.momentum(l);
    }
    return m / w;
  }

private:
  SimGrid grid_;
  FftPlan plan_;
  std::vector<cplx> half_, kin_;
};

double final_velocity_at(double dt, double horizon)
{
  const SimGrid grid = small_grid(dt);
  const LatticeSpec spec{7.0, 32, 16};
  SplitStepper stepper(grid, 7.0, rb_force());
  FieldState state = synthesize_initial(grid, spec, 0.2, 0);
  stepper.advance(state, static_cast<std::size_t>(std::llround(horizon / dt)));
  return stepper.observables(state).velocity;
}

} // namespace

TEST(SimGrid, RejectsInvalidSizes)
{
  SimGrid g;
  g.cells = 100;
  EXPECT_THROW(g.validate(), ConfigError);
  g.cells = 128;
  g.pts_per_cell = 2;
  EXPECT_THROW(g.validate(), ConfigError);
  g.pts_per_cell = 32;
  g.dt = 0;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(SimGrid, DefaultBoxResolvesTheMomentumWidth)
{
  EXPECT_EQ(default_cells(0.2), 128u);
  EXPECT_EQ(default_cells(0.01), 4096u);
  EXPECT_EQ(required_cells(0.004), 4096u);
  for (double sigma : {0.2, 0.05, 0.01, 0.004}) {
    SimGrid g;
    g.cells = default_cells(sigma);
    EXPECT_LE(g.momentum_step(), sigma / 8.0 * (1 + 1e-12)) << sigma;
  }
}

TEST(Synthesis, NarrowPacketNeedsALargerBox)
{
  SimGrid g;
  g.cells = 128;
  try {
    synthesize_initial(g, LatticeSpec{7.0, 32, 16}, 0.004, 0);
    FAIL() << "expected a sizing error";
  } catch (const SizingError& e) {
    EXPECT_EQ(e.required_cells(), 4096u);
    EXPECT_NE(std::string(e.what()).find("4096"), std::string::npos);
  }
}

TEST(Synthesis, PacketStartsInTheInitialBand)
{
  for (int band : {0, 2}) {
    SimGrid g;
    const LatticeSpec spec{7.0, 32, 16};
    SplitStepper stepper(g, 7.0, rb_force());
    const auto state = synthesize_initial(g, spec, 0.2, band, &stepper.plan());
    EXPECT_NEAR(state.norm, 1.0, 1e-12);
    const auto pop = stepper.populations(state, LatticeSpec{7.0, 16, 8});
    EXPECT_GT(pop[static_cast<std::size_t>(band)], 1.0 - 1e-8) << band;
    const auto obs = stepper.observables(state);
    EXPECT_NEAR(obs.acceleration, rb_force(), 1e-4 * rb_force());
    EXPECT_NEAR(obs.velocity, 0.0, 1e-12);
  }
}

TEST(Synthesis, FreePacketIsAGaussianInMomentum)
{
  const SimGrid g = small_grid();
  const auto state = synthesize_initial(g, LatticeSpec{0.0, 32, 16}, 0.2, 0);
  std::vector<cplx> phi = state.psi;
  FftPlan(g.size()).forward(phi);
  // the lowest folded band covers -1 <= k < 1 only
  auto expected = [](double k) { return k >= -1.0 && k < 1.0 ? std::exp(-k * k / (2 * 0.2 * 0.2)) : 0.0; };
  double total = 0.0, gauss = 0.0;
  for (std::size_t l = 0; l < phi.size(); ++l) {
    total += std::norm(phi[l]);
    gauss += expected(g.momentum(l));
  }
  for (std::size_t l = 0; l < phi.size(); ++l)
    EXPECT_NEAR(std::norm(phi[l]) / total, expected(g.momentum(l)) / gauss, 1e-14);
}

TEST(SplitStep, NormIsPreservedOverManySteps)
{
  SimGrid g;
  g.cells = 16;
  g.pts_per_cell = 16;
  g.dt = 1e-3;
  std::mt19937 rng(3);
  std::normal_distribution<double> u;
  FieldState state;
  state.psi.resize(g.size());
  for (auto& z : state.psi)
    z = {u(rng), u(rng)};
  const double n0 = state.measure_norm();
  for (auto& z : state.psi)
    z /= std::sqrt(n0);
  SplitStepper stepper(g, 7.0, 0.173);
  double worst = 0.0;
  for (int block = 0; block < 100; ++block) {
    stepper.advance(state, 1000);
    worst = std::max(worst, std::abs(state.norm - 1.0));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(SplitStep, FreeParticleAcceleratesExactly)
{
  const SimGrid g = small_grid(1e-2);
  const LatticeSpec spec{0.0, 32, 16};
  SplitStepper stepper(g, 0.0, 0.3);
  auto state = synthesize_initial(g, spec, 0.2, 0, &stepper.plan());
  // the grid holds k = -1 but not k = +1, so the packet starts with a tiny drift
  const double v0 = stepper.observables(state).velocity;
  EXPECT_LT(std::abs(v0), 1e-6);
  for (int i = 0; i < 20; ++i) {
    stepper.advance(state, 50);
    const auto obs = stepper.observables(state);
    EXPECT_NEAR(obs.velocity - v0, 0.3 * state.t, 1e-8);
    EXPECT_NEAR(obs.acceleration, 0.3, 1e-12);
  }
}

TEST(SplitStep, EigenpacketIsStationaryWithoutForce)
{
  const SimGrid g = small_grid();
  const LatticeSpec spec{7.0, 32, 16};
  SplitStepper stepper(g, 7.0, 0.0);
  auto state = synthesize_initial(g, spec, 0.2, 0, &stepper.plan());
  const LatticeSpec proj{7.0, 8, 8};
  const auto p0 = stepper.populations(state, proj);
  for (int i = 0; i < 5; ++i) {
    stepper.advance(state, 400);
    EXPECT_LT(std::abs(stepper.observables(state).acceleration), 1e-8);
    const auto p = stepper.populations(state, proj);
    for (std::size_t b = 0; b < p.size(); ++b)
      EXPECT_NEAR(p[b], p0[b], 1e-10) << b;
  }
}

TEST(SplitStep, VelocityDerivativeMatchesAcceleration)
{
  const SimGrid g = small_grid();
  const LatticeSpec spec{7.0, 32, 16};
  const double force = rb_force();
  SplitStepper stepper(g, 7.0, force);
  auto state = synthesize_initial(g, spec, 0.2, 0, &stepper.plan());
  const std::size_t stride = 5;
  const double h = stride * g.dt;
  std::vector<double> v, a;
  for (int i = 0; i < 800; ++i) {
    const auto obs = stepper.observables(state);
    v.push_back(obs.velocity);
    a.push_back(obs.acceleration);
    stepper.advance(state, stride);
  }
  double worst = 0.0;
  for (std::size_t i = 2; i + 2 < v.size(); ++i) {
    const double dv = (v[i - 2] - 8 * v[i - 1] + 8 * v[i + 1] - v[i + 2]) / (12 * h);
    worst = std::max(worst, std::abs(dv - a[i]));
  }
  EXPECT_LT(worst, 1e-3 * force);
}

TEST(SplitStep, StrangSplittingIsSecondOrder)
{
  const double horizon = 2.0;
  const double reference = final_velocity_at(1.25e-3, horizon);
  const double e1 = std::abs(final_velocity_at(0.02, horizon) - reference);
  const double e2 = std::abs(final_velocity_at(0.01, horizon) - reference);
  const double e3 = std::abs(final_velocity_at(0.005, horizon) - reference);
  EXPECT_NEAR(e1 / e2, 4.0, 0.5);
  EXPECT_NEAR(e2 / e3, 4.0, 0.5);
}

TEST(SplitStep, PositionGaugeGivesTheSameVelocity)
{
  const SimGrid g = small_grid();
  const LatticeSpec spec{7.0, 32, 16};
  const double force = rb_force();
  SplitStepper stepper(g, 7.0, force);
  auto state = synthesize_initial(g, spec, 0.2, 0, &stepper.plan());

  // shift the packet by half the box so that it sits far from the edges of
  // the tilted potential
  std::vector<cplx> tilted(state.psi);
  std::rotate(tilted.begin(), tilted.begin() + static_cast<long>(g.size() / 2), tilted.end());
  const double centre = g.x(g.size() / 2);
  TiltedStepper other(g, 7.0, force, centre);

  const double quarter = 0.25 * 2.0 / force;
  const auto steps = static_cast<std::size_t>(std::llround(quarter / g.dt / 10));
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    stepper.advance(state, steps);
    other.advance(tilted, steps);
    worst = std::max(worst, std::abs(stepper.observables(state).velocity - other.velocity(tilted)));
  }
  // the packet stays in the middle of the box
  double edge = 0.0;
  const std::size_t margin = 10 * g.pts_per_cell;
  for (std::size_t i = 0; i < margin; ++i)
    edge += std::norm(tilted[i]) + std::norm(tilted[g.size() - 1 - i]);
  EXPECT_LT(edge, 1e-8);
  EXPECT_LT(worst, 1e-3);
}

TEST(SplitStep, NonFiniteStateIsReported)
{
  const SimGrid g = small_grid();
  SplitStepper stepper(g, 7.0, 0.1);
  FieldState state;
  state.psi.assign(g.size(), cplx(0.01, 0.0));
  state.psi[5] = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
  EXPECT_THROW(stepper.advance(state, 3), NumericalError);
}

TEST(SplitStep, ConvergenceGateRejectsCoarseSteps)
{
  const auto sp = scale(preset("rb-s7"));
  const auto dyn = make_dynamics(sp, 0.25 * *sp.bloch_period_scaled);
  SplitStepOptions opt;
  opt.grid = small_grid(0.05);
  EXPECT_THROW(run_splitstep(dyn, 101, opt), ResolutionError);
}

TEST(Checkpoint, RoundTripIsBitExact)
{
  const SimGrid g = small_grid(2.5e-3);
  SplitStepper stepper(g, 7.0, 0.173);
  auto state = synthesize_initial(g, LatticeSpec{7.0, 32, 16}, 0.2, 0, &stepper.plan());
  stepper.advance(state, 37);
  const auto path = (std::filesystem::temp_directory_path() / "effmass_checkpoint_test.bin").string();
  save_checkpoint(path, g, state);
  EXPECT_EQ(std::filesystem::file_size(path), 48 + 16 * g.size());
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.grid.cells, g.cells);
  EXPECT_EQ(back.grid.pts_per_cell, g.pts_per_cell);
  EXPECT_EQ(back.grid.dt, g.dt);
  EXPECT_EQ(back.state.t, state.t);
  ASSERT_EQ(back.state.psi.size(), state.psi.size());
  for (std::size_t i = 0; i < state.psi.size(); ++i)
    ASSERT_EQ(back.state.psi[i], state.psi[i]) << i;

  // continuing from the checkpoint is identical to not stopping
  auto resumed = back.state;
  stepper.advance(state, 10);
  SplitStepper fresh(back.grid, 7.0, 0.173);
  fresh.advance(resumed, 10);
  for (std::size_t i = 0; i < state.psi.size(); ++i)
    ASSERT_EQ(resumed.psi[i], state.psi[i]);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char bad = 9;
    f.write(&bad, 1);
  }
  EXPECT_THROW(load_checkpoint(path), IoError);
  std::filesystem::resize_file(path, 40);
  EXPECT_THROW(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

namespace {

struct CrossRun
{
  TimeSeries numeric;
  FirstOrderResult first;
};

CrossRun cross_run(const char* name, std::size_t samples, bool populations)
{
  const auto sp = scale(preset(name));
  const auto dyn = make_dynamics(sp, *sp.bloch_period_scaled);
  FirstOrderEngine engine(dyn);
  std::vector<double> t(samples);
  for (std::size_t i = 0; i < samples; ++i)
    t[i] = dyn.horizon * static_cast<double>(i) / static_cast<double>(samples - 1);
  CrossRun out;
  out.first = engine.run(t, populations);
  SplitStepOptions opt;
  opt.grid.cells = default_cells(dyn.sigma);
  opt.populations = populations;
  opt.population_samples = samples;
  opt.gate = false;
  out.numeric = run_splitstep(dyn, samples, opt);
  attach_baseline(out.numeric, out.first.series);
  return out;
}

} // namespace

TEST(CrossSolver, RubidiumAgreesWithTheFirstOrderSeries)
{
  for (const char* name : {"rb-s7", "rb-s13"}) {
    const auto run = cross_run(name, 2049, false);
    const auto& a = run.numeric;
    const auto& b = run.first.series;
    ASSERT_EQ(a.size(), b.size());
    double dv = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a.t[i], b.t[i]);
      dv = std::max(dv, std::abs(a.v[i] - b.v[i]));
    }
    EXPECT_LT(dv, 0.02) << name;
    const double force = scale(preset(name)).force;
    const std::size_t mid = a.size() / 2;
    // half a period in, the packet sits at the zone edge where the
    // second-order correction is largest
    EXPECT_LT(std::abs(a.a[mid] - b.a[mid]), 0.04 * force) << name;
    EXPECT_NEAR(a.a.front(), force, 1e-4 * force);
  }
}

TEST(CrossSolver, PopulationsTrackTheAccelerationOscillation)
{
  const auto run = cross_run("rb-s7", 1025, true);
  const auto& ts = run.numeric;
  ASSERT_EQ(*ts.find("population_stride"), "1");
  const auto& sc = run.first.scales;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double sum = 0.0;
    for (const auto& p : ts.populations) {
      EXPECT_GE(p[i], -1e-15);
      sum += p[i];
    }
    EXPECT_GT(sum, 1.0 - 1e-6);
  }

  const auto count = static_cast<std::size_t>(std::upper_bound(ts.t.begin(), ts.t.end(), *sc.decay) - ts.t.begin());
  std::vector<double> osc(ts.size()), pop = ts.populations[sc.partner];
  for (std::size_t i = 0; i < ts.size(); ++i)
    osc[i] = ts.a[i] - ts.a_baseline[i];
  // remove the slow drift of the population before locating its peak
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t i = 0; i < count; ++i) {
    st += ts.t[i];
    sy += pop[i];
    stt += ts.t[i] * ts.t[i];
    sty += ts.t[i] * pop[i];
  }
  const double n = static_cast<double>(count);
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  for (std::size_t i = 0; i < pop.size(); ++i)
    pop[i] -= (sy - slope * st) / n + slope * ts.t[i];
  const auto a_peak = dominant_frequency(ts.t, osc, count);
  const auto p_peak = dominant_frequency(ts.t, pop, count);
  EXPECT_LE(std::abs(static_cast<double>(a_peak.bin) - static_cast<double>(p_peak.bin)), 1.0);

  // split-step and first-order populations agree on the leakage scale
  double leak_num = 0.0, leak_fo = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    leak_num = std::max(leak_num, 1.0 - ts.populations[0][i]);
    leak_fo = std::max(leak_fo, 1.0 - run.first.series.populations[0][i]);
  }
  EXPECT_NEAR(leak_num, leak_fo, 0.1 * leak_fo);
}

TEST(RunSplitStep, RecordsGridAndGate)
{
  const auto sp = scale(preset("rb-s7"));
  const auto dyn = make_dynamics(sp, 0.1 * *sp.bloch_period_scaled);
  SplitStepOptions opt;
  opt.grid = small_grid();
  opt.populations = true;
  opt.population_samples = 4;
  const auto ts = run_splitstep(dyn, 101, opt);
  EXPECT_EQ(ts.size(), 101u);
  EXPECT_EQ(ts.t.back(), dyn.horizon);
  EXPECT_EQ(*ts.find("engine"), "splitstep");
  EXPECT_EQ(*ts.find("grid_cells"), "128");
  EXPECT_EQ(*ts.find("gate"), "pass");
  EXPECT_NE(ts.find("gate_velocity_change"), nullptr);
  EXPECT_LT(std::stod(*ts.find("max_norm_drift")), 1e-10);
  // strided projections: first and last rows are always present
  EXPECT_FALSE(std::isnan(ts.populations[0].front()));
  EXPECT_FALSE(std::isnan(ts.populations[0].back()));
  EXPECT_TRUE(std::isnan(ts.populations[0][1]));
  EXPECT_TRUE(std::isnan(ts.a_baseline[0]));
}
