#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "latmetric/inversion.hpp"
#include "latmetric/metrics.hpp"

using namespace latmetric;

namespace {

SiteField exact_density(const HubbardSystem& sys) {
  return density_of_state(ground_state(build_hubbard(sys)).state).total;
}

double average_error(const SiteField& a, const SiteField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST(InvertDensity, RecoversImpurityPotential) {
  const SpinSector s{6, 2, 1};
  const HubbardSystem truth{1.0, 4.0, SiteField{0, 0, 1, 0, 0, 0}, s};
  const auto target = exact_density(truth);
  const auto r = invert_density(target, 4.0, 1.0, s, SiteField(6));
  EXPECT_LT(r.final_error, 1e-8);
  EXPECT_LT(potential_distance_a(r.v, truth.v).raw, 1e-6);
  EXPECT_NEAR(r.v.sum(), 0.0, 1e-12);
  EXPECT_EQ(r.direction_violations, 0);
  EXPECT_LT(average_error(density_of_state(r.state).total, target), 1e-8);
}

TEST(InvertDensity, UniformChainIsFixedPoint) {
  const SpinSector s{6, 2, 1};
  const auto target = exact_density({1.0, 4.0, SiteField(6), s});
  const auto r = invert_density(target, 4.0, 1.0, s, SiteField(6));
  EXPECT_LE(r.iterations, 1);
  for (double x : r.v) EXPECT_NEAR(x, 0.0, 1e-8);
}

TEST(InvertDensity, RejectsNearlyEmptySite) {
  const SpinSector s{3, 1, 0};
  try {
    invert_density(SiteField{1e-9, 0.5, 0.5 - 1e-9}, 4.0, 1.0, s, SiteField(3));
    FAIL() << "expected IllConditionedTarget";
  } catch (const IllConditionedTarget& e) {
    EXPECT_EQ(e.site(), 0u);
    EXPECT_EQ(e.value(), 1e-9);
  }
}

TEST(InvertDensity, ValidatesTarget) {
  const SpinSector s{3, 1, 0};
  EXPECT_THROW(invert_density(SiteField{0.5, 0.5, 0.5}, 4.0, 1.0, s, SiteField(3)), InvalidArgument);
  EXPECT_THROW(invert_density(SiteField{0.5, 0.5}, 4.0, 1.0, s, SiteField(2)), DimensionMismatch);
  EXPECT_THROW(invert_density(SiteField{0.5, 0.25, 0.25}, 4.0, 1.0, s, SiteField(2)), DimensionMismatch);
}

TEST(InvertDensity, FixedPointReproducesTarget) {
  const SpinSector s{7, 2, 2};
  const HubbardSystem truth{1.0, 2.0, SiteField{0.4, -0.3, 0.0, 0.8, -0.5, 0.1, 0.2}, s};
  const auto target = exact_density(truth);
  InversionOptions opts;
  const auto r = invert_density(target, 2.0, 1.0, s, SiteField(7), opts);
  const auto again = exact_density({1.0, 2.0, r.v, s});
  EXPECT_LT(average_error(again, target), 2.0 * opts.threshold);
  // energy is reported in the gauge-fixed potential
  EXPECT_NEAR(r.energy, ground_state(build_hubbard({1.0, 2.0, r.v, s})).energy, 1e-8);
}

TEST(InvertDensity, GaugeInvariantStart) {
  // large shifts included: the step scale is taken in the sum(v) = 0 gauge
  const SpinSector s{6, 2, 2};
  const auto target = exact_density({1.0, 4.0, SiteField{0.5, 0, 0, 0, 0, -0.2}, s});
  const auto a = invert_density(target, 4.0, 1.0, s, SiteField(6));
  const auto b = invert_density(target, 4.0, 1.0, s, SiteField(6, 3.0));
  const auto c = invert_density(target, 4.0, 1.0, s, SiteField(6, -9.0));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(a.v[i], b.v[i], 1e-8);
    EXPECT_NEAR(a.v[i], c.v[i], 1e-8);
  }
}

TEST(InvertDensity, TraceAndCallback) {
  const SpinSector s{5, 1, 1};
  const auto target = exact_density({1.0, 4.0, SiteField{0, 1, 0, 0, 0}, s});
  InversionOptions opts;
  int calls = 0;
  opts.on_iteration = [&](int k, double err, double) {
    EXPECT_EQ(k, calls);
    EXPECT_GE(err, 0.0);
    ++calls;
  };
  const auto r = invert_density(target, 4.0, 1.0, s, SiteField(5), opts);
  EXPECT_EQ(calls, r.iterations + 1);
  ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(calls));
  EXPECT_LT(r.trace.back().average_error, 1e-8);

  std::ostringstream os;
  write_trace_csv(os, r.trace);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "iteration,average_error,energy");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, r.trace.size());
}

TEST(InvertDensity, IterationCapRaises) {
  const SpinSector s{5, 1, 1};
  const auto target = exact_density({1.0, 4.0, SiteField{0, 2, 0, 0, 0}, s});
  InversionOptions opts;
  opts.max_iter = 3;
  try {
    invert_density(target, 4.0, 1.0, s, SiteField(5), opts);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.trace().size(), 4u);
    EXPECT_GT(e.best_residual(), 1e-8);
  }
}

TEST(InvertDensity, SmallEnergyUsesUnitStep) {
  // strongly repulsive dimer: |E| stays well below the energy floor
  const SpinSector s{2, 1, 1};
  const HubbardSystem truth{1.0, 20.0, SiteField{0.3, -0.3}, s};
  const auto target = exact_density(truth);
  const auto r = invert_density(target, 20.0, 1.0, s, SiteField(2));
  for (const auto& p : r.trace) EXPECT_LT(std::abs(p.energy), 0.5);
  EXPECT_LT(r.final_error, 1e-8);
  // dn/dv is small at U = 20, so the potential is only fixed to ~1e-5
  EXPECT_LT(potential_distance_a(r.v, truth.v).raw, 1e-4);
}

TEST(InvertDensity, BacktracksOutOfTwoCycle) {
  // mirror-symmetric target on an odd-N chain: full steps alternate between
  // two symmetry-broken potentials; halving the weight breaks the cycle
  const SpinSector s{8, 2, 1};
  const HubbardSystem truth{1.0, 4.0, SiteField{0, 0, 0, 4, 4, 0, 0, 0}, s};
  const auto target = exact_density(truth);
  const auto r = invert_density(target, 4.0, 1.0, s, SiteField(8));
  EXPECT_GT(r.step_reductions, 0);
  EXPECT_LT(r.final_error, 1e-8);
  EXPECT_LT(potential_distance_a(r.v, truth.v).raw, 1e-5);

  InversionOptions stiff;
  stiff.min_update_weight = 1.0;
  stiff.max_iter = 400;
  EXPECT_THROW(invert_density(target, 4.0, 1.0, s, SiteField(8), stiff), ConvergenceError);
}

TEST(BuildIlda, NonInteractingRecoversOriginal) {
  const HubbardSystem sys{1.0, 0.0, SiteField{0.2, -0.4, 0.0, 0.6, 0.1, -0.3}, {6, 2, 1}};
  const auto out = build_ilda(sys);
  EXPECT_LT(potential_distance_a(out.ilda.v, sys.v).raw, 1e-8);
}

TEST(BuildIlda, EightSiteChainPipeline) {
  const SpinSector s{8, 2, 2};
  const HubbardSystem sys{1.0, 4.0, SiteField(8), s};
  const auto out = build_ilda(sys);
  const auto exact = ground_state(build_hubbard(sys));
  const auto n_exact = density_of_state(exact.state).total;
  DistanceReport rep;
  rep.psi = wavefunction_distance(exact.state, out.ilda.state);
  rep.rho = density_distance(n_exact, out.lda.density_total, 4.0);
  rep.va = potential_distance_a(sys.v, out.ilda.v);
  rep.vb = potential_distance_b(sys.v, out.ilda.v);
  EXPECT_TRUE(rep.in_range());
  EXPECT_GT(rep.rho->scaled, 0.0);
}
