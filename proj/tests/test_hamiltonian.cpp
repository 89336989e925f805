#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <random>

#include "latmetric/hamiltonian.hpp"
#include "support/fock_oracle.hpp"

using namespace latmetric;
using namespace latmetric_test;

namespace {

SiteField random_field(std::mt19937_64& rng, int d, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  SiteField v(static_cast<std::size_t>(d));
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(BuildHubbard, SingleParticleDimer) {
  const auto op = build_hubbard({1.0, 7.0, SiteField(2), {2, 1, 0}});
  const auto h = op.to_dense();
  EXPECT_DOUBLE_EQ(h(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(h(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(h(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(h(1, 1), 0.0);
}

TEST(BuildHubbard, DimerHalfFillingGroundEnergy) {
  const auto op = build_hubbard({1.0, 4.0, SiteField(2), {2, 1, 1}});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.to_dense());
  EXPECT_NEAR(es.eigenvalues()(0), 2.0 - std::sqrt(8.0), 1e-12);
}

TEST(BuildHubbard, DiagonalIsInteractionPlusPotential) {
  std::mt19937_64 rng(5);
  const HubbardSystem sys{1.0, 3.3, random_field(rng, 5, -2, 2), {5, 2, 3}};
  const auto op = build_hubbard(sys);
  const auto h = op.to_dense();
  for (std::size_t i = 0; i < op.dimension(); ++i) {
    const auto c = op.basis().at(i);
    double expect = sys.U * std::popcount(c.up_mask & c.down_mask);
    for (int s = 0; s < 5; ++s)
      expect += sys.v[static_cast<std::size_t>(s)] * (((c.up_mask >> s) & 1u) + ((c.down_mask >> s) & 1u));
    EXPECT_NEAR(h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), expect, 1e-13);
  }
}

TEST(BuildHubbard, MatchesSecondQuantizationOracle) {
  std::mt19937_64 rng(17);
  for (int d = 2; d <= 4; ++d)
    for (int nu = 0; nu <= d; ++nu)
      for (int nd = 0; nd <= d; ++nd) {
        const HubbardSystem sys{0.7 + 0.1 * d, 2.5, random_field(rng, d, -1, 1), {d, nu, nd}};
        const auto mine = build_hubbard(sys).to_dense();
        const auto ref = oracle_matrix(sys);
        ASSERT_EQ(mine.rows(), ref.rows());
        for (Eigen::Index i = 0; i < ref.rows(); ++i)
          for (Eigen::Index j = 0; j < ref.cols(); ++j)
            ASSERT_NEAR(mine(i, j), ref(i, j), 1e-14) << "d=" << d << " nu=" << nu << " nd=" << nd;
      }
}

TEST(HopSign, MatchesJordanWignerForLongRangeHops) {
  std::mt19937_64 rng(9);
  const int d = 8;
  for (int trial = 0; trial < 2000; ++trial) {
    const Mask m = rng() & ((Mask{1} << d) - 1);
    const int from = static_cast<int>(rng() % d), to = static_cast<int>(rng() % d);
    if (from == to || !((m >> from) & 1u) || ((m >> to) & 1u)) continue;
    const Fock f = create(annihilate({true, 1.0, m}, from), to);
    ASSERT_TRUE(f.ok);
    EXPECT_EQ(hop_sign(m, from, to), f.sign);
  }
}

TEST(BuildHubbard, HermitianOnRandomPairs) {
  std::mt19937_64 rng(23);
  const HubbardSystem sys{1.0, 4.0, random_field(rng, 8, -2, 2), {8, 3, 4}};
  for (std::size_t budget : {std::size_t{512} << 20, std::size_t{0}}) {
    const auto op = build_hubbard(sys, {30'000'000, budget});
    EXPECT_EQ(op.is_explicit(), budget > 0);
    std::normal_distribution<double> g;
    std::vector<double> x(op.dimension()), y(op.dimension());
    for (int k = 0; k < 100; ++k) {
      for (auto& e : x) e = g(rng);
      for (auto& e : y) e = g(rng);
      const auto hx = latmetric::apply(op, x), hy = latmetric::apply(op, y);
      double a = 0, b = 0, nx = 0, ny = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        a += x[i] * hy[i];
        b += hx[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
      }
      EXPECT_LT(std::abs(a - b) / std::sqrt(nx * ny), 1e-12);
    }
  }
}

TEST(BuildHubbard, ExplicitAndFactorizedAgree) {
  std::mt19937_64 rng(29);
  const HubbardSystem sys{1.0, 2.0, random_field(rng, 7, -1, 1), {7, 3, 2}};
  const auto a = build_hubbard(sys);
  const auto b = build_hubbard(sys, {30'000'000, 0});
  ASSERT_TRUE(a.is_explicit());
  ASSERT_FALSE(b.is_explicit());
  std::vector<double> x(a.dimension());
  std::normal_distribution<double> g;
  for (auto& e : x) e = g(rng);
  const auto ya = latmetric::apply(a, x), yb = latmetric::apply(b, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(ya[i], yb[i], 1e-12);
}

TEST(BuildHubbard, NoFreeParticleOffDiagonalWithoutBond) {
  // particle-number blocks: every nonzero connects configurations with equal
  // per-species counts that differ by exactly one nearest-neighbour hop
  const auto op = build_hubbard({1.0, 1.0, SiteField(4), {4, 2, 1}});
  const auto h = op.to_dense();
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      if (i == j || h(i, j) == 0.0) continue;
      const auto a = op.basis().at(static_cast<std::size_t>(i));
      const auto b = op.basis().at(static_cast<std::size_t>(j));
      const Mask du = a.up_mask ^ b.up_mask, dd = a.down_mask ^ b.down_mask;
      EXPECT_TRUE((du == 0) != (dd == 0));
      const Mask diff = du | dd;
      EXPECT_EQ(std::popcount(diff), 2);
      EXPECT_EQ(diff >> std::countr_zero(diff), Mask{3});
    }
}

TEST(BuildHubbard, NonInteractingGroundEnergyFactorizes) {
  std::mt19937_64 rng(31);
  for (SpinSector s : {SpinSector{6, 2, 3}, SpinSector{7, 3, 3}, SpinSector{5, 1, 4}}) {
    const HubbardSystem sys{1.0, 0.0, random_field(rng, s.d, -1.5, 1.5), s};
    Eigen::MatrixXd h1 = Eigen::MatrixXd::Zero(s.d, s.d);
    for (int i = 0; i < s.d; ++i) {
      h1(i, i) = sys.v[static_cast<std::size_t>(i)];
      if (i + 1 < s.d) h1(i, i + 1) = h1(i + 1, i) = -1.0;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sp(h1);
    double e = 0.0;
    for (int k = 0; k < s.n_up; ++k) e += sp.eigenvalues()(k);
    for (int k = 0; k < s.n_down; ++k) e += sp.eigenvalues()(k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> mb(build_hubbard(sys).to_dense());
    EXPECT_NEAR(mb.eigenvalues()(0), e, 1e-10);
  }
}

TEST(BuildHubbard, CapacityAndValidation) {
  EXPECT_THROW(build_hubbard({1.0, 1.0, SiteField(10), {10, 5, 5}}, {1000, 1 << 20}), CapacityError);
  EXPECT_THROW(build_hubbard({0.0, 1.0, SiteField(2), {2, 1, 1}}), InvalidArgument);
  EXPECT_THROW(build_hubbard({1.0, 1.0, SiteField(3), {2, 1, 1}}), DimensionMismatch);
}

TEST(Apply, ZeroOperatorAndEigenvector) {
  // empty sector: 1x1 zero operator
  const auto zero = build_hubbard({1.0, 0.0, SiteField(3), {3, 0, 0}});
  EXPECT_EQ(latmetric::apply(zero, std::vector<double>{2.5})[0], 0.0);

  const auto op = build_hubbard({1.0, 0.0, SiteField(2), {2, 1, 0}});
  const double r = std::sqrt(0.5);
  const auto y = latmetric::apply(op, std::vector<double>{r, r});
  EXPECT_NEAR(y[0], -r, 1e-15);
  EXPECT_NEAR(y[1], -r, 1e-15);
  EXPECT_THROW(latmetric::apply(op, std::vector<double>{1.0}), DimensionMismatch);
}

TEST(Apply, Linear) {
  std::mt19937_64 rng(37);
  const auto op = build_hubbard({1.0, 4.0, random_field(rng, 6, -1, 1), {6, 3, 2}});
  std::normal_distribution<double> g;
  std::vector<double> x(op.dimension()), y(op.dimension()), z(op.dimension());
  for (auto& e : x) e = g(rng);
  for (auto& e : y) e = g(rng);
  const double a = 0.37, b = -1.9;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * x[i] + b * y[i];
  const auto hx = latmetric::apply(op, x), hy = latmetric::apply(op, y), hz = latmetric::apply(op, z);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(hz[i], a * hx[i] + b * hy[i], 1e-12);
}

TEST(Expectation, DimerEnergyAndDoubleOccupancy) {
  const auto op = build_hubbard({1.0, 4.0, SiteField(2), {2, 1, 1}});
  const auto h = op.to_dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  Eigen::VectorXd g = es.eigenvectors().col(0);
  const ManyBodyState gs({2, 1, 1}, std::vector<double>(g.data(), g.data() + 4));
  EXPECT_NEAR(expectation_energy(gs, op), 2.0 - std::sqrt(8.0), 1e-10);

  // basis state 0 = both particles on site 0
  const auto dbl = ManyBodyState::basis_state({2, 1, 1}, 0);
  EXPECT_DOUBLE_EQ(expectation_energy(dbl, op), 4.0);
  EXPECT_DOUBLE_EQ(expectation_nsq(dbl, 0), 4.0);
  EXPECT_DOUBLE_EQ(expectation_nsq(dbl, 1), 0.0);

  // n_i^2 oracle: dense diagonal operator in the same basis
  for (int site = 0; site < 2; ++site) {
    double ref = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
      const auto c = op.basis().at(k);
      const int occ = static_cast<int>(((c.up_mask >> site) & 1u) + ((c.down_mask >> site) & 1u));
      ref += g(static_cast<Eigen::Index>(k)) * g(static_cast<Eigen::Index>(k)) * occ * occ;
    }
    EXPECT_NEAR(expectation_nsq(gs, site), ref, 1e-12);
  }
  EXPECT_THROW(expectation_nsq(gs, 2), InvalidArgument);
}

TEST(Expectation, ConvexCombinationOfEigenvalues) {
  const auto op = build_hubbard({1.0, 4.0, SiteField{0.3, -0.2}, {2, 1, 1}});
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(op.to_dense());
  const Eigen::Vector4d w(0.1, 0.2, 0.3, 0.4);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  double expect = 0.0;
  for (int k = 0; k < 4; ++k) {
    x += std::sqrt(w(k)) * es.eigenvectors().col(k);
    expect += w(k) * es.eigenvalues()(k);
  }
  const ManyBodyState st({2, 1, 1}, std::vector<double>(x.data(), x.data() + 4));
  EXPECT_NEAR(expectation_energy(st, op), expect, 1e-12);
  EXPECT_GE(expectation_energy(st, op), es.eigenvalues()(0));
  EXPECT_LE(expectation_energy(st, op), es.eigenvalues()(3));
}

TEST(SetPotential, UpdatesDiagonalInBothModes) {
  const HubbardSystem sys{1.0, 2.0, SiteField(4), {4, 2, 2}};
  for (std::size_t budget : {std::size_t{1} << 20, std::size_t{0}}) {
    auto op = build_hubbard(sys, {1000000, budget});
    const SiteField v{0.5, -1.0, 2.0, 0.25};
    op.set_potential(v);
    const auto fresh = build_hubbard({1.0, 2.0, v, {4, 2, 2}});
    EXPECT_TRUE(op.to_dense().isApprox(fresh.to_dense(), 1e-14));
  }
}
