#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "effmass/bands.hpp"

using namespace effmass;

namespace {

// Dense plane-wave Hamiltonian diagonalized by Eigen; j runs over -J..J.
struct DenseOracle
{
  Eigen::VectorXd energies;
  Eigen::MatrixXd vectors;  // column n is band n
  int cutoff = 0;

  DenseOracle(double s, double k, int J) : cutoff(J)
  {
    const int n = 2 * J + 1;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      const double q = k + 2.0 * (i - J);
      h(i, i) = q * q + s / 2.0;
      if (i + 1 < n)
        h(i, i + 1) = h(i + 1, i) = -s / 4.0;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    energies = es.eigenvalues();
    vectors = es.eigenvectors();
  }

  double momentum(double k, int a, int b) const
  {
    double acc = 0.0;
    for (int i = 0; i < vectors.rows(); ++i)
      acc += (k + 2.0 * (i - cutoff)) * vectors(i, a) * vectors(i, b);
    return acc;
  }
};

// Both neighbours of band n are at least `gap` away, so a five-point stencil
// with step 1e-3 resolves its k dependence.
bool resolved(const BlochSolution& sol, std::size_t n, double gap)
{
  if (n > 0 && sol.energy(n) - sol.energy(n - 1) < gap)
    return false;
  return n + 1 < sol.bands() && sol.energy(n + 1) - sol.energy(n) >= gap;
}

} // namespace

TEST(SolveBloch, FreeParticleFolding)
{
  const auto sol = solve_bloch({0.0, 32, 16}, 0.3);
  EXPECT_NEAR(sol.energy(0), 0.09, 1e-12);
  EXPECT_NEAR(sol.energy(1), 2.89, 1e-12);
  for (double k : {-0.9, -0.4, 0.0, 0.55, 0.99})
    EXPECT_NEAR(solve_bloch({0.0, 32, 8}, k).energy(0), k * k, 1e-12);
}

TEST(SolveBloch, MatchesDenseDiagonalization)
{
  for (double s : {1.0, 7.0, 10.0, 14.0})
    for (double k : {0.0, 0.25, -0.7, 1.0}) {
      const auto sol = solve_bloch({s, 32, 16}, k);
      const DenseOracle oracle(s, k, 64);
      for (std::size_t n = 0; n < 16; ++n)
        EXPECT_NEAR(sol.energy(n), oracle.energies(static_cast<Eigen::Index>(n)), 1e-10)
            << "s=" << s << " k=" << k << " n=" << n;
    }
}

TEST(SolveBloch, ZoneCentreGaps)
{
  // s = 10: gap between bands 1 and 2, the 1.30 fs period at E_R = 1.5 eV
  const DenseOracle s10(10.0, 0.0, 64);
  const auto sol10 = solve_bloch({10.0, 32, 16}, 0.0);
  const double gap21 = sol10.energy(2) - sol10.energy(1);
  EXPECT_NEAR(gap21, s10.energies(2) - s10.energies(1), 1e-10);
  EXPECT_NEAR(gap21, 2.12, 0.01);

  // s = 7: gap between bands 0 and 1 against the oracle
  const DenseOracle s7(7.0, 0.0, 64);
  const auto sol7 = solve_bloch({7.0, 32, 16}, 0.0);
  EXPECT_NEAR(sol7.energy(1) - sol7.energy(0), s7.energies(1) - s7.energies(0), 1e-10);
}

TEST(SolveBloch, ConvergedInTheCutoff)
{
  for (double s : {7.0, 14.0}) {
    const auto a = solve_bloch({s, 32, 16}, 0.37);
    const auto b = solve_bloch({s, 40, 16}, 0.37);
    for (std::size_t n = 0; n < 16; ++n)
      EXPECT_LT(std::abs(a.energy(n) - b.energy(n)), 1e-10);
  }
}

TEST(SolveBloch, EigenvectorsAreUnitNormalizedAndSeeded)
{
  const auto sol = solve_bloch({7.0, 32, 16}, 0.4);
  for (std::size_t n = 0; n < sol.bands(); ++n) {
    double norm = 0.0, largest = 0.0;
    for (double c : sol.coefficients(n)) {
      norm += c * c;
      if (std::abs(c) > std::abs(largest))
        largest = c;
    }
    EXPECT_NEAR(norm, 1.0, 1e-12);
    EXPECT_GT(largest, 0.0);
  }
}

TEST(SolveBloch, ExtendedZonePeriodicity)
{
  const LatticeSpec spec{7.0, 32, 12};
  // shifts by multiples of 2 are exact in binary for these k
  for (double k : {0.375, -0.875, 1.0}) {
    const auto a = solve_bloch(spec, k);
    const auto b = solve_bloch(spec, k + 2.0);
    const auto c = solve_bloch(spec, k - 4.0);
    const auto pa = momentum_elements(a), pb = momentum_elements(b), pc = momentum_elements(c);
    for (std::size_t n = 0; n < a.bands(); ++n) {
      EXPECT_EQ(a.energy(n), b.energy(n));
      EXPECT_EQ(a.energy(n), c.energy(n));
      for (std::size_t m = 0; m < a.bands(); ++m) {
        EXPECT_NEAR(std::abs(pa(n, m)), std::abs(pb(n, m)), 1e-12);
        EXPECT_NEAR(std::abs(pa(n, m)), std::abs(pc(n, m)), 1e-12);
      }
    }
    // same Bloch function: the overlap with matched momenta is +-1
    for (std::size_t n = 0; n < 4; ++n)
      EXPECT_NEAR(std::abs(bloch_overlap(a, n, b, n)), 1.0, 1e-12);
  }
}

TEST(SolveBloch, CompletenessOfTheFullBasis)
{
  const LatticeSpec spec{7.0, 10, 21};
  const auto sol = solve_bloch(spec, 0.2);
  for (int j = sol.j_min(); j <= sol.j_max(); ++j)
    for (int l = sol.j_min(); l <= sol.j_max(); ++l) {
      double acc = 0.0;
      for (std::size_t n = 0; n < sol.bands(); ++n)
        acc += sol.coefficient(n, j) * sol.coefficient(n, l);
      EXPECT_NEAR(acc, j == l ? 1.0 : 0.0, 1e-12);
    }
}

TEST(LatticeSpec, RejectsMoreBandsThanBasisStates)
{
  EXPECT_THROW((LatticeSpec{7.0, 4, 10}.validate()), ConfigError);
  EXPECT_THROW((LatticeSpec{-1.0, 32, 16}.validate()), DomainError);
  EXPECT_THROW(solve_bloch({7.0, 4, 10}, 0.0), ConfigError);
  EXPECT_TRUE((LatticeSpec{7.0, 32, 16}.well_converged()));
  EXPECT_FALSE((LatticeSpec{7.0, 10, 21}.well_converged()));
}

TEST(GaugeChain, SinglePointCarriesTheSeedConvention)
{
  const LatticeSpec spec{7.0, 32, 8};
  const double k = 0.3;
  const auto chain = gauge_chain(spec, std::span<const double>(&k, 1));
  ASSERT_EQ(chain.size(), 1u);
  const auto ref = solve_bloch(spec, k);
  for (std::size_t n = 0; n < 8; ++n) {
    EXPECT_EQ(chain[0].gauge().flipped[n], 0);
    for (std::size_t c = 0; c < ref.basis_size(); ++c)
      EXPECT_EQ(chain[0].coefficients(n)[c], ref.coefficients(n)[c]);
  }
}

TEST(GaugeChain, ConsecutiveOverlapsAcrossTheZone)
{
  const LatticeSpec spec{7.0, 32, 8};
  std::vector<double> path(512);
  for (std::size_t i = 0; i < path.size(); ++i)
    path[i] = -1.0 + 2.0 * static_cast<double>(i) / 511.0;
  ChainOptions opt;
  opt.bands = 6;
  opt.max_refine_depth = 20;
  const auto chain = gauge_chain(spec, path, opt);
  // from band 2 up, pairs meet in avoided crossings at k = 0 and k = +-1
  // (gaps 0.16, 8e-3, 2e-4) narrower than the sample spacing; the chain
  // follows them through midpoints, but neighbouring samples there are
  // genuinely rotated
  for (std::size_t i = 1; i < chain.size(); ++i)
    for (std::size_t n = 0; n < 2; ++n)
      EXPECT_GT(periodic_overlap(chain[i - 1], n, chain[i], n), 0.999) << "i=" << i << " n=" << n;
  EXPECT_GT(chain.back().gauge().refinements, 0);
}

TEST(GaugeChain, ClosedLoopRecordsTheZakSign)
{
  const LatticeSpec spec{7.0, 32, 8};
  std::vector<double> path(257);
  for (std::size_t i = 0; i < path.size(); ++i)
    path[i] = -1.0 + 2.0 * static_cast<double>(i) / 256.0;
  ChainOptions opt;
  opt.bands = 4;
  opt.max_refine_depth = 40;
  const auto chain = gauge_chain(spec, path, opt);
  for (std::size_t n = 0; n < 4; ++n) {
    const double ov = bloch_overlap(chain.back(), n, chain.front(), n);
    EXPECT_NEAR(std::abs(ov), 1.0, 1e-10);
    EXPECT_EQ(zone_loop_sign(spec, n, 257), ov < 0 ? -1 : 1);
  }
}

TEST(GaugeChain, RejectsNonMonotonePathsAndCoarseSteps)
{
  const LatticeSpec spec{7.0, 32, 8};
  const std::vector<double> zigzag{0.0, 0.2, 0.1};
  EXPECT_THROW(gauge_chain(spec, zigzag), ConfigError);
  // one step across a whole zone cannot be followed without refinement
  const std::vector<double> coarse{0.0, 1.9};
  EXPECT_THROW(gauge_chain(spec, coarse), ResolutionError);
}

TEST(MomentumElements, FreeParticleHasNoInterbandElements)
{
  const auto sol = solve_bloch({0.0, 32, 8}, 0.3);
  const auto p = momentum_elements(sol);
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = 0; b < 8; ++b)
      if (a != b) {
        EXPECT_NEAR(p(a, b), 0.0, 1e-14);
      }
  EXPECT_NEAR(p(0, 0), 0.3, 1e-14);
}

TEST(MomentumElements, SymmetricAndHellmannFeynman)
{
  const LatticeSpec spec{7.0, 32, 12};
  for (double k : {0.0, 0.25, 0.8}) {
    const auto sol = solve_bloch(spec, k);
    const auto p = momentum_elements(sol);
    for (std::size_t a = 0; a < 12; ++a) {
      for (std::size_t b = 0; b < 12; ++b)
        EXPECT_EQ(p(a, b), p(b, a));
      // near-degenerate pairs at k = 0 mix within less than the stencil width
      if (!resolved(sol, a, 0.2))
        continue;
      auto energy = [&](double q) { return solve_bloch(spec, q).energy(a); };
      EXPECT_NEAR(p(a, a), 0.5 * first_derivative(energy, k, fd_step), 1e-6) << "band " << a;
    }
  }
}

TEST(MomentumElements, ParitySelectionAtSymmetryPoints)
{
  const LatticeSpec spec{10.0, 32, 12};
  for (double k : {0.0, 1.0, -1.0}) {
    const auto p = momentum_elements(solve_bloch(spec, k));
    EXPECT_NEAR(p(0, 2), 0.0, 1e-12);
    EXPECT_NEAR(p(1, 3), 0.0, 1e-12);
    EXPECT_GT(std::abs(p(0, 1)), 0.1);
  }
}

TEST(MomentumElements, ZoneCentreCouplingMatchesDenseOracle)
{
  const DenseOracle oracle(7.0, 0.0, 64);
  const auto p = momentum_elements(solve_bloch({7.0, 32, 16}, 0.0));
  EXPECT_NEAR(std::abs(p(0, 1)), std::abs(oracle.momentum(0.0, 0, 1)), 1e-10);
  EXPECT_NEAR(std::abs(p(1, 2)), std::abs(oracle.momentum(0.0, 1, 2)), 1e-10);
}

TEST(DeltaParameters, ZeroWithoutForceAndOnTheDiagonal)
{
  const auto sol = solve_bloch({7.0, 32, 8}, 0.25);
  const auto none = delta_parameters(sol, 0.0);
  for (std::size_t a = 0; a < none.rows(); ++a)
    for (std::size_t b = 0; b < none.cols(); ++b)
      EXPECT_EQ(none(a, b), std::complex<double>(0.0, 0.0));
  const auto d = delta_parameters(sol, 0.173);
  const auto p = momentum_elements(sol);
  for (std::size_t a = 0; a < d.rows(); ++a) {
    EXPECT_EQ(d(a, a), std::complex<double>(0.0, 0.0));
    for (std::size_t b = 0; b < d.cols(); ++b) {
      EXPECT_EQ(d(a, b).real(), 0.0);
      if (a != b) {
        const double gap = sol.energy(a) - sol.energy(b);
        EXPECT_NEAR(d(a, b).imag() * gap * gap, -2.0 * 0.173 * p(a, b), 1e-14);
      }
    }
  }
}

TEST(DeltaParameters, AgreesWithFiniteDifferenceConnection)
{
  const LatticeSpec spec{7.0, 32, 8};
  const double k = 0.25, force = 0.173;
  const auto sol = solve_bloch(spec, k);
  const auto delta = delta_parameters(sol, force, 6);
  const auto conn = lax_connection_fd(spec, k, 6);
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) {
      if (a == b)
        continue;
      // Delta = F xi / E_ab with xi = i A
      const double from_fd = force * conn(a, b) / (sol.energy(a) - sol.energy(b));
      EXPECT_NEAR(delta(a, b).imag(), from_fd, 1e-4) << a << "," << b;
    }
}

TEST(DeltaParameters, DegenerateBandsAreRefused)
{
  // free particle at the zone edge: bands 0 and 1 cross
  const auto sol = solve_bloch({0.0, 32, 8}, 1.0);
  EXPECT_THROW(delta_parameters(sol, 0.1), DegeneracyError);
}

TEST(DeltaParameters, SmallMixingForTheRubidiumScenario)
{
  double worst = 0.0;
  for (int i = 0; i <= 64; ++i) {
    const double k = -1.0 + i / 32.0;
    const auto d = delta_parameters(solve_bloch({7.0, 32, 8}, k), 0.1734, 2);
    worst = std::max(worst, std::abs(d(1, 0)));
  }
  EXPECT_LT(worst, 0.05);
}

TEST(LaxConnection, DiagonalVanishes)
{
  const LatticeSpec spec{7.0, 32, 8};
  for (double k : {0.0, 0.3, 0.77})
    for (double x : diagonal_lax_connection(spec, k, 6))
      EXPECT_LT(std::abs(x), 1e-8);
}

TEST(EffectiveMass, FreeParticle)
{
  EXPECT_NEAR(effective_mass({0.0, 32, 8}, 0, 0.0, MassMethod::sum_rule), 1.0, 1e-14);
  EXPECT_NEAR(effective_mass({0.0, 32, 8}, 0, 0.0, MassMethod::curvature), 1.0, 1e-8);
}

TEST(EffectiveMass, SumRuleMatchesCurvature)
{
  for (double s : {1.0, 7.0, 10.0, 14.0}) {
    const LatticeSpec spec{s, 32, 12};
    for (std::size_t n = 0; n < 4; ++n)
      for (double k : {0.0, 0.4, 1.0}) {
        if (!resolved(solve_bloch(spec, k), n, 0.2))
          continue;
        const double a = inverse_effective_mass(spec, n, k, MassMethod::sum_rule);
        const double b = inverse_effective_mass(spec, n, k, MassMethod::curvature);
        EXPECT_LT(std::abs(a - b), 1e-5 * std::max(1.0, std::abs(b))) << "s=" << s << " n=" << n << " k=" << k;
      }
  }
}

TEST(EffectiveMass, FivePointCurvatureOfTheLowestBand)
{
  const LatticeSpec spec{7.0, 32, 16};
  auto energy = [&](double q) { return DenseOracle(7.0, q, 64).energies(0); };
  const double oracle = 0.5 * second_derivative(energy, 0.0, fd_step);
  EXPECT_NEAR(inverse_effective_mass(spec, 0, 0.0, MassMethod::sum_rule), oracle, 1e-5);
}

TEST(ReducedMass, SwapFlipsSignAndEqualBandsAreSingular)
{
  const LatticeSpec spec{7.0, 32, 16};
  const auto a = reduced_mass(spec, 0, 1, 0.0);
  const auto b = reduced_mass(spec, 1, 0, 0.0);
  ASSERT_TRUE(a && b);
  EXPECT_NEAR(*a, -*b, 1e-14);
  EXPECT_FALSE(reduced_mass(spec, 2, 2, 0.0).has_value());
}

TEST(ReducedMass, DeeperLatticeGivesLargerReducedMass)
{
  const auto m7 = reduced_mass({7.0, 32, 16}, 0, 1, 0.0);
  const auto m13 = reduced_mass({13.0, 32, 16}, 0, 1, 0.0);
  ASSERT_TRUE(m7 && m13);
  EXPECT_GT(std::abs(*m13), std::abs(*m7));
}

TEST(NearestBand, PicksTheClosestLevel)
{
  const auto sol = solve_bloch({10.0, 32, 8}, 0.0);
  EXPECT_EQ(nearest_band(sol, 0), 1u);
  EXPECT_EQ(nearest_band(sol, 2), 1u);
}
