#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "latmetric/experiments.hpp"

using namespace latmetric;

namespace {

ScenarioConfig homogeneous_chains() {
  ScenarioConfig c;
  c.name = "homog";
  c.kind = ScenarioKind::homogeneous;
  c.U = {4.0};
  c.grid = {4, 6, 8, 10};
  return c;
}

std::string csv_without_time(const std::vector<ResultRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += csv_line(r, false) + '\n';
  return s;
}

}  // namespace

TEST(HarmonicPotential, Examples) {
  EXPECT_EQ(harmonic_potential(8, 1.0), (SiteField{12.25, 6.25, 2.25, 0.25, 0.25, 2.25, 6.25, 12.25}));
  EXPECT_EQ(harmonic_potential(5, 0.0), SiteField(5));
  const auto odd = harmonic_potential(5, 2.0);
  EXPECT_EQ(odd[2], 0.0);
  for (int d : {2, 7, 12}) {
    const auto v = harmonic_potential(d, 0.3);
    for (int j = 0; j < d; ++j) EXPECT_EQ(v[static_cast<std::size_t>(j)], v[static_cast<std::size_t>(d - 1 - j)]);
  }
  EXPECT_THROW(harmonic_potential(8, -0.1), InvalidArgument);
}

TEST(ImpurityPotential, Examples) {
  EXPECT_EQ(impurity_potential(10, {4, 5}, 2.0), (SiteField{0, 0, 0, 0, 2, 2, 0, 0, 0, 0}));
  EXPECT_EQ(impurity_potential(4, {1}, 0.0), SiteField(4));
  // four central sites of a 20-site chain sit symmetrically
  const auto v = impurity_potential(20, {8, 9, 10, 11}, 1.0);
  for (std::size_t j = 0; j < 20; ++j) EXPECT_EQ(v[j], v[19 - j]);
  EXPECT_THROW(impurity_potential(10, {4, 4}, 1.0), InvalidArgument);
  EXPECT_THROW(impurity_potential(10, {10}, 1.0), InvalidArgument);
  EXPECT_THROW(impurity_potential(10, {-1}, 1.0), InvalidArgument);
}

TEST(FilledSector, HalfOfHalfFilling) {
  EXPECT_EQ(filled_sector(4, 0.5), (SpinSector{4, 1, 1}));
  EXPECT_EQ(filled_sector(6, 0.5), (SpinSector{6, 2, 1}));
  EXPECT_EQ(filled_sector(10, 0.5), (SpinSector{10, 3, 2}));
  EXPECT_EQ(filled_sector(20, 0.4), (SpinSector{20, 4, 4}));
}

TEST(Validate, RejectsBadConfigs) {
  auto c = homogeneous_chains();
  EXPECT_NO_THROW(validate(c));
  c.grid = {4, 4};
  EXPECT_THROW(validate(c), InvalidArgument);
  c.grid = {};
  EXPECT_THROW(validate(c), InvalidArgument);
  c.grid = {30};
  try {
    validate(c);
    FAIL() << "expected UnsupportedScale";
  } catch (const UnsupportedScale& e) {
    EXPECT_NE(std::string(e.what()).find("DMRG"), std::string::npos);
  }

  ScenarioConfig imp;
  imp.kind = ScenarioKind::impurities;
  imp.d = 20;
  imp.n_up = imp.n_down = 4;
  imp.impurity_sites = {8, 25};
  imp.grid = {0, 1};
  try {
    validate(imp);
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("impurities.sites"), std::string::npos);
  }
}

TEST(Validate, TwentySiteSectorFitsTheCap) {
  ScenarioConfig c;
  c.kind = ScenarioKind::impurities;
  c.d = 20;
  c.n_up = c.n_down = 4;
  c.impurity_sites = {8, 9, 10, 11};
  c.grid = {0.0};
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(SpinSector({20, 4, 4}).dimension(), 23474025u);
}

TEST(ExpandTasks, OrderedByUThenGrid) {
  ScenarioConfig c;
  c.kind = ScenarioKind::impurities;
  c.d = 6;
  c.n_up = 1;
  c.n_down = 1;
  c.impurity_sites = {2, 3};
  c.U = {2.0, 8.0};
  c.grid = {0.0, 1.0, 3.0};
  const auto tasks = expand_tasks(c);
  ASSERT_EQ(tasks.size(), 6u);
  EXPECT_EQ(tasks[0].system.U, 2.0);
  EXPECT_EQ(tasks[2].param_value, 3.0);
  EXPECT_EQ(tasks[3].system.U, 8.0);
  EXPECT_EQ(tasks[4].system.v, impurity_potential(6, {2, 3}, 1.0));
  EXPECT_EQ(tasks[4].param_name, "V");
}

TEST(RunScenario, PipelineConsistency) {
  const auto rows = run_scenario(homogeneous_chains());
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.inversion_converged.value_or(false)) << r.d;
    const double N = r.n_up + r.n_down;
    const double direct = r.report.rho->scaled;
    const double via_ilda = density_distance(r.exact_density, r.ilda_density, N).scaled;
    EXPECT_NEAR(direct, via_ilda, 2e-8) << r.d;
    EXPECT_TRUE(r.report.in_range());
    EXPECT_TRUE(r.notes.empty());
  }
}

TEST(RunScenario, OddParticleChainSitsBelowEvenNeighbours) {
  // d = 6 (N = 3) is the odd row with even rows on both sides
  const auto rows = run_scenario(homogeneous_chains());
  auto all = [](const ResultRow& r) {
    return std::vector<double>{r.report.rho->scaled, r.report.psi->scaled, r.report.va->scaled, r.report.vb->scaled};
  };
  const auto lo = all(rows[0]), odd = all(rows[1]), hi = all(rows[2]);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LT(odd[k], lo[k]) << "distance " << k;
    EXPECT_LT(odd[k], hi[k]) << "distance " << k;
  }
  for (const auto& r : rows)
    for (double x : all(r)) EXPECT_LT(x, 0.1);
}

TEST(RunScenario, DeterministicAcrossThreadCounts) {
  ScenarioConfig c;
  c.name = "imp";
  c.kind = ScenarioKind::impurities;
  c.d = 8;
  c.n_up = 2;
  c.n_down = 1;
  c.impurity_sites = {3, 4};
  c.grid = {0.0, 0.5, 1.0, 4.0};
  c.threads = 1;
  const auto a = csv_without_time(run_scenario(c));
  c.threads = 3;
  const auto b = csv_without_time(run_scenario(c));
  EXPECT_EQ(a, b);
}

TEST(RunScenario, InversionSkippedAboveCutoffAndOnRequest) {
  ScenarioConfig c = homogeneous_chains();
  c.grid = {6};
  c.solver.run_inversion = false;
  const auto rows = run_scenario(c);
  EXPECT_TRUE(rows[0].report.rho.has_value());
  EXPECT_FALSE(rows[0].report.psi.has_value());
  EXPECT_FALSE(rows[0].inversion_converged.has_value());

  c.solver.run_inversion = true;
  c.solver.inversion_max_d = 5;
  EXPECT_FALSE(run_scenario(c)[0].report.va.has_value());
}

TEST(RunScenario, FailedInversionAnnotatesRow) {
  ScenarioConfig c;
  c.name = "trap";
  c.kind = ScenarioKind::harmonic;
  c.d = 8;
  c.n_up = 1;
  c.n_down = 1;
  c.U = {2.0};
  c.grid = {0.5, 10.0};
  const auto rows = run_scenario(c);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].inversion_converged.value_or(false));
  // edge occupation falls below the empty floor
  EXPECT_FALSE(rows[1].inversion_converged.value_or(true));
  EXPECT_TRUE(rows[1].report.rho.has_value());
  EXPECT_FALSE(rows[1].report.psi.has_value());
  ASSERT_FALSE(rows[1].notes.empty());
  EXPECT_NE(rows[1].notes[0].find("empty floor"), std::string::npos);
}

TEST(Csv, HeaderAndEmptyFields) {
  ResultRow r;
  r.scenario = "s";
  r.d = 4;
  r.U = 4;
  r.n_up = 1;
  r.n_down = 1;
  r.param_name = "d";
  r.param_value = 4;
  r.report.rho = Distance{0.5, 0.125};
  r.lda_converged = true;
  r.wall_ms = 1.5;
  std::ostringstream os;
  write_csv(os, {r});
  EXPECT_EQ(os.str(),
            "scenario,d,t,U,n_up,n_down,param_name,param_value,d_rho_scaled,d_psi_scaled,d_va_scaled,d_vb_scaled,"
            "exact_energy,lda_converged,inversion_converged,inversion_iters,wall_ms\n"
            "s,4,1,4,1,1,d,4,0.125,,,,,true,,,1.5\n");
}

TEST(SampleRandom, DeterministicAndThreadIndependent) {
  const SpinSector s{6, 2, 1};
  const auto a = sample_random(s, 4.0, 5000, 11, 1);
  const auto b = sample_random(s, 4.0, 5000, 11, 3);
  EXPECT_EQ(a.mean_psi, b.mean_psi);
  EXPECT_EQ(a.mean_rho, b.mean_rho);
  EXPECT_EQ(a.se_psi, b.se_psi);
  const auto c = sample_random(s, 4.0, 5000, 12, 1);
  EXPECT_NE(a.mean_psi, c.mean_psi);

  const auto one = sample_random(s, 4.0, 1, 99), again = sample_random(s, 4.0, 1, 99);
  EXPECT_EQ(one.mean_psi, again.mean_psi);
  EXPECT_EQ(one.mean_rho, again.mean_rho);
  EXPECT_EQ(one.se_psi, 0.0);
}

TEST(SampleRandom, MatchesDirectStateDistances) {
  // independent recomputation through ManyBodyState and the metric functions
  const SpinSector s{4, 1, 1};
  const std::uint64_t seed = 5;
  const auto r = sample_random(s, 4.0, 3, seed);
  const auto gs = ground_state(build_hubbard({1.0, 4.0, SiteField(4), s}));
  const auto n_exact = density_of_state(gs.state).total;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), 0u, 0u, 0u};
  std::mt19937_64 rng(seq);
  double psi = 0.0, rho = 0.0;
  for (int m = 0; m < 3; ++m) {
    const auto x = random_state(s, rng);
    psi += wavefunction_distance(gs.state, x).scaled;
    rho += density_distance(n_exact, density_of_state(x).total, 2.0).scaled;
  }
  EXPECT_NEAR(r.mean_psi, psi / 3.0, 1e-14);
  EXPECT_NEAR(r.mean_rho, rho / 3.0, 1e-14);
}

TEST(SampleRandom, SmallChainNearPublishedMeans) {
  const auto r = sample_random({4, 1, 1}, 4.0, 100000, 3);
  EXPECT_NEAR(r.mean_psi, 0.889, 0.003);
  EXPECT_NEAR(r.mean_rho, 0.143, 0.003);
  EXPECT_LT(r.se_psi, 1e-3);
  EXPECT_THROW(sample_random({4, 1, 1}, 4.0, 0, 3), InvalidArgument);
}
