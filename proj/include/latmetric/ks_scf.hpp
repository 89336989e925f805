#pragma once

// Lattice Kohn-Sham solver with the BALDA functional. Both spin channels share
//   v_eff,i = v_i + (U/2) n_i + v_xc(n_i, U)
// and differ only in how many orbitals they fill.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "latmetric/balda.hpp"
#include "latmetric/errors.hpp"
#include "latmetric/hamiltonian.hpp"
#include "latmetric/hilbert.hpp"

namespace latmetric {

struct OrbitalSpectrum {
  std::vector<double> energies;  // ascending
  Eigen::MatrixXd orbitals;      // column k is orbital k
};

/// Full spectrum of the open-chain tridiagonal matrix (off-diagonal -t, diagonal v_eff).
inline OrbitalSpectrum single_particle_solve(const SiteField& v_eff, double t = 1.0) {
  const auto d = static_cast<Eigen::Index>(v_eff.size());
  if (d == 0) throw DimensionMismatch("single_particle_solve: empty potential");
  v_eff.check_finite();
  Eigen::VectorXd diag(d), sub(std::max<Eigen::Index>(d - 1, 0));
  for (Eigen::Index i = 0; i < d; ++i) diag(i) = v_eff[static_cast<std::size_t>(i)];
  sub.setConstant(-t);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  OrbitalSpectrum out;
  out.energies.assign(es.eigenvalues().data(), es.eigenvalues().data() + d);
  out.orbitals = es.eigenvectors();
  // sign convention: first significant component positive
  for (Eigen::Index k = 0; k < d; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(out.orbitals(i, k)) > 1e-10) {
        if (out.orbitals(i, k) < 0) out.orbitals.col(k) *= -1.0;
        break;
      }
    }
  }
  return out;
}

struct KsOptions {
  /// Convergence on max_i |n_out,i - n_in,i|.
  double tol = 1e-10;
  int max_iter = 20000;
  /// Fraction of the output density mixed in per iteration.
  double mixing = 0.2;
  double min_mixing = 0.025;
  double degeneracy_gap = 1e-12;
  /// Half-width of the band around n = 1 in which v_xc is interpolated
  /// linearly between its one-sided limits. Without it no fixed point exists
  /// when a site density wants to sit at n = 1.
  double cusp_width = 1e-6;
  /// Switch from linear mixing to Newton steps on the density residual once
  /// the residual is below this or the mixing has reached min_mixing.
  double newton_threshold = 1e-3;
  /// When false, non-convergence is reported through KsResult::converged.
  bool throw_on_failure = true;
};

struct KsResult {
  SiteField density_total;
  SiteField density_up;
  SiteField density_down;
  SiteField v_eff;
  std::vector<double> orbital_energies;
  int scf_iterations = 0;
  bool converged = false;
  double residual = 0.0;
  int newton_steps = 0;
};

namespace detail {

inline SiteField fill_orbitals(const OrbitalSpectrum& spec, int count) {
  const auto d = static_cast<std::size_t>(spec.orbitals.rows());
  SiteField n(d);
  for (int k = 0; k < count; ++k)
    for (std::size_t i = 0; i < d; ++i) {
      const double c = spec.orbitals(static_cast<Eigen::Index>(i), k);
      n[i] += c * c;
    }
  return n;
}

inline void check_frontier(const OrbitalSpectrum& spec, int count, double gap_tol) {
  const int d = static_cast<int>(spec.energies.size());
  if (count <= 0 || count >= d) return;
  const double gap = spec.energies[static_cast<std::size_t>(count)] - spec.energies[static_cast<std::size_t>(count - 1)];
  if (gap < gap_tol)
    throw DegeneracyError("solve_ks: degenerate frontier orbital (gap " + std::to_string(gap) +
                              "); fractional occupation is not supported",
                          gap);
}

/// Static response d n_i / d v_j of `count` filled orbitals.
inline void add_response(const OrbitalSpectrum& spec, int count, double weight, Eigen::MatrixXd& chi) {
  const auto d = spec.orbitals.rows();
  for (int a = 0; a < count; ++a)
    for (Eigen::Index r = count; r < d; ++r) {
      const Eigen::VectorXd p = spec.orbitals.col(a).cwiseProduct(spec.orbitals.col(r));
      const double de = spec.energies[static_cast<std::size_t>(a)] - spec.energies[static_cast<std::size_t>(r)];
      chi.noalias() += (2.0 * weight / de) * p * p.transpose();
    }
}

/// BALDA v_xc with the n = 1 cusp replaced by a linear ramp of half-width w.
class SmoothedVxc {
 public:
  SmoothedVxc(const BaldaTable& xc, double w)
      : xc_(xc), w_(w), lo_(xc.vxc_left(1.0 - w)), hi_(xc.vxc_right(1.0 + w)) {}

  double operator()(double n) const {
    if (w_ > 0.0 && std::abs(n - 1.0) < w_) return lo_ + (hi_ - lo_) * (n - (1.0 - w_)) / (2.0 * w_);
    return xc_.vxc(n);
  }

  double slope(double n) const {
    if (w_ > 0.0 && std::abs(n - 1.0) < w_) return (hi_ - lo_) / (2.0 * w_);
    const double t = xc_.t(), U = xc_.U(), b = xc_.beta_value(), pi = std::numbers::pi;
    const double common = -t * pi * std::sin(pi * n / 2.0) - 0.5 * U;
    if (n <= 1.0) return 2.0 * t * pi / b * std::sin(pi * n / b) + common;
    return 2.0 * t * pi / b * std::sin(pi * (2.0 - n) / b) + common;
  }

 private:
  const BaldaTable& xc_;
  double w_, lo_, hi_;
};

}  // namespace detail

inline SiteField effective_potential(const HubbardSystem& system, const BaldaTable& xc,
                                     const SiteField& n) {
  SiteField v = system.v;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double ni = std::clamp(n[i], 0.0, 2.0);
    v[i] += 0.5 * system.U * ni + xc.vxc(ni);
  }
  return v;
}

/// Self-consistent KS-BALDA ground state. Linear density mixing (halved on
/// repeated residual increases) followed by damped Newton steps on
/// F(n) = n_out(n) - n with the analytic KS response.
inline KsResult solve_ks(const HubbardSystem& system, const KsOptions& opts = {}) {
  system.validate();
  const auto& sec = system.sector;
  const auto d = static_cast<std::size_t>(sec.d);
  const BaldaTable xc(system.U, system.t);
  const detail::SmoothedVxc vxc(xc, opts.cusp_width);

  struct Eval {
    SiteField v_eff, up, down, out;
    OrbitalSpectrum spec;
    Eigen::VectorXd F;
    double res = 0.0;
  };
  auto evaluate = [&](const SiteField& n_in) {
    Eval e;
    e.v_eff = system.v;
    for (std::size_t i = 0; i < d; ++i) {
      const double ni = std::clamp(n_in[i], 0.0, 2.0);
      e.v_eff[i] += 0.5 * system.U * ni + vxc(ni);
    }
    e.spec = single_particle_solve(e.v_eff, system.t);
    detail::check_frontier(e.spec, sec.n_up, opts.degeneracy_gap);
    detail::check_frontier(e.spec, sec.n_down, opts.degeneracy_gap);
    e.up = detail::fill_orbitals(e.spec, sec.n_up);
    e.down = sec.n_down == sec.n_up ? e.up : detail::fill_orbitals(e.spec, sec.n_down);
    e.out = e.up + e.down;
    e.F.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      e.F(static_cast<Eigen::Index>(i)) = e.out[i] - n_in[i];
      e.res = std::max(e.res, std::abs(e.F(static_cast<Eigen::Index>(i))));
    }
    return e;
  };
  auto newton_direction = [&](const SiteField& n_in, const Eval& e) {
    const auto dd = static_cast<Eigen::Index>(d);
    Eigen::MatrixXd chi = Eigen::MatrixXd::Zero(dd, dd);
    if (sec.n_up == sec.n_down) {
      detail::add_response(e.spec, sec.n_up, 2.0, chi);
    } else {
      detail::add_response(e.spec, sec.n_up, 1.0, chi);
      detail::add_response(e.spec, sec.n_down, 1.0, chi);
    }
    Eigen::MatrixXd J = chi;
    for (Eigen::Index j = 0; j < dd; ++j)
      J.col(j) *= 0.5 * system.U + vxc.slope(std::clamp(n_in[static_cast<std::size_t>(j)], 0.0, 2.0));
    J -= Eigen::MatrixXd::Identity(dd, dd);
    return Eigen::VectorXd(J.colPivHouseholderQr().solve(-e.F));
  };

  SiteField n_in(d, static_cast<double>(sec.particles()) / static_cast<double>(d));
  double alpha = opts.mixing;
  double best = std::numeric_limits<double>::infinity();
  double prev_res = std::numeric_limits<double>::infinity();
  int rises = 0;
  KsResult r;
  Eval e = evaluate(n_in);
  for (int it = 1; it <= opts.max_iter; ++it) {
    best = std::min(best, e.res);
    r.density_total = e.out;
    r.density_up = e.up;
    r.density_down = e.down;
    r.v_eff = e.v_eff;
    r.orbital_energies = e.spec.energies;
    r.scf_iterations = it;
    r.residual = e.res;
    if (e.res < opts.tol) {
      r.converged = true;
      return r;
    }

    if (e.res < opts.newton_threshold || alpha <= opts.min_mixing) {
      const Eigen::VectorXd step = newton_direction(n_in, e);
      const double f0 = e.F.norm();
      bool accepted = false;
      for (double lambda = 1.0; lambda > 1e-6 && step.allFinite(); lambda *= 0.5) {
        SiteField trial = n_in;
        for (std::size_t i = 0; i < d; ++i)
          trial[i] = std::clamp(n_in[i] + lambda * step(static_cast<Eigen::Index>(i)), 0.0, 2.0);
        Eval te = evaluate(trial);
        if (te.F.norm() < (1.0 - 1e-4 * lambda) * f0) {
          n_in = std::move(trial);
          e = std::move(te);
          accepted = true;
          ++r.newton_steps;
          break;
        }
      }
      if (accepted) continue;
    }

    // Residual going up repeatedly signals a limit cycle around the v_xc cusp.
    rises = e.res > prev_res ? rises + 1 : 0;
    if (rises >= 2 && alpha > opts.min_mixing) {
      alpha = std::max(opts.min_mixing, 0.5 * alpha);
      rises = 0;
    }
    prev_res = e.res;
    for (std::size_t i = 0; i < d; ++i) n_in[i] = (1.0 - alpha) * n_in[i] + alpha * e.out[i];
    e = evaluate(n_in);
  }
  if (opts.throw_on_failure)
    throw ConvergenceError("solve_ks: no self-consistency after " + std::to_string(opts.max_iter) +
                               " iterations",
                           best);
  return r;
}

}  // namespace latmetric
