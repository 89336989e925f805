#pragma once

// Density-to-potential inversion for the interacting chain. Each step solves
// the many-body ground state in v^(k) and updates
//   v_raw,i  = v_i^(k) + (n_i^(k) - n_i^target) |E^(k)| / <n_i^2>^(k)
//   v^(k+1)  = keep * v^(k) + (1 - keep) * v_raw          (keep = 0.8)
// until (1/d) sum_i |n_i^(k) - n_i^target| drops below the threshold.

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "latmetric/eigensolver.hpp"
#include "latmetric/errors.hpp"
#include "latmetric/hamiltonian.hpp"
#include "latmetric/hilbert.hpp"
#include "latmetric/ks_scf.hpp"

namespace latmetric {

struct InversionOptions {
  /// Stop when the site-averaged |n - n_target| falls below this.
  double threshold = 1e-8;
  /// Weight of the previous potential in each update.
  double keep_fraction = 0.8;
  int max_iter = 200000;
  /// Target sites at or below this occupation are rejected.
  double empty_floor = 1e-6;
  /// Below this |E| the step uses the energy of a constant-shifted potential
  /// with E = -1 (a pure gauge change).
  double energy_floor = 0.5;
  double particle_tol = 1e-6;
  /// The update weight (1 - keep_fraction) is halved whenever the error
  /// rises, down to this value.
  double min_update_weight = 1e-6;
  /// Start each eigensolve from the previous ground state.
  bool warm_start = true;
  /// Dense diagonalization is costly inside the loop; warm-started Lanczos
  /// takes over above 64 states.
  EigenOptions eigen = [] {
    EigenOptions e;
    e.dense_threshold = 64;
    return e;
  }();
  BuildOptions build{};
  /// Called once per iteration with (iteration, average_error, energy).
  std::function<void(int, double, double)> on_iteration;
};

struct InversionTracePoint {
  int iteration = 0;
  double average_error = 0.0;
  double energy = 0.0;
};

struct InversionResult {
  /// Recovered potential, shifted so that sum_i v_i = 0.
  SiteField v;
  ManyBodyState state;
  /// Ground-state energy in the gauge-fixed potential.
  double energy = 0.0;
  int iterations = 0;
  double final_error = 0.0;
  /// Raw updates that moved opposite to the density error (should stay 0).
  int direction_violations = 0;
  /// Steps redone with a halved update weight after the error rose.
  int step_reductions = 0;
  std::vector<InversionTracePoint> trace;
};

inline void write_trace_csv(std::ostream& os, const std::vector<InversionTracePoint>& trace) {
  os << "iteration,average_error,energy\n";
  os.precision(17);
  for (const auto& p : trace) os << p.iteration << ',' << p.average_error << ',' << p.energy << '\n';
}

inline SiteField gauge_fixed(SiteField v) {
  const double m = v.mean();
  return shifted(std::move(v), -m);
}

inline void validate_target(const SiteField& target, const SpinSector& sector, const InversionOptions& opts) {
  if (target.size() != static_cast<std::size_t>(sector.d))
    throw DimensionMismatch("invert_density: target has " + std::to_string(target.size()) +
                            " sites, sector has " + std::to_string(sector.d));
  target.check_finite();
  if (std::abs(target.sum() - sector.particles()) > opts.particle_tol)
    throw InvalidArgument("invert_density: target integrates to " + std::to_string(target.sum()) +
                          ", sector holds " + std::to_string(sector.particles()) + " particles");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] < 0.0 || target[i] > 2.0)
      throw InvalidArgument("invert_density: target density " + std::to_string(target[i]) +
                            " at site " + std::to_string(i) + " outside [0, 2]");
    if (target[i] <= opts.empty_floor)
      throw IllConditionedTarget("invert_density: target site " + std::to_string(i) + " has occupation " +
                                     std::to_string(target[i]) + " <= empty floor " +
                                     std::to_string(opts.empty_floor),
                                 i, target[i]);
  }
}

inline InversionResult invert_density(const SiteField& target, double U, double t,
                                      const SpinSector& sector, const SiteField& v0,
                                      const InversionOptions& opts = {}) {
  sector.validate();
  validate_target(target, sector, opts);
  if (v0.size() != target.size()) throw DimensionMismatch("invert_density: v0 length mismatch");
  const auto d = target.size();

  // v is kept in the sum(v) = 0 gauge and the step scale is read off in a
  // fixed gauge, so the iterates do not depend on the constant part of v0.
  SiteField v = gauge_fixed(v0);
  SparseOperator op(HubbardSystem{t, U, v, sector}, opts.build);
  InversionResult res;
  std::vector<double> warm;
  double best = std::numeric_limits<double>::infinity();
  double weight = 1.0 - opts.keep_fraction;

  // Last iterate whose error did not rise; steps are taken from here.
  struct Accepted {
    SiteField v;
    std::vector<double> delta;
    double err = std::numeric_limits<double>::infinity();
    std::vector<double> amplitudes;
  } last;
  auto take_step = [&] {
    v = last.v;
    for (std::size_t i = 0; i < d; ++i) v[i] += weight * last.delta[i];
    v = gauge_fixed(std::move(v));
  };

  for (int k = 0; k <= opts.max_iter; ++k) {
    op.set_potential(v);
    const auto gs = ground_state(op, opts.eigen, opts.warm_start ? std::span<const double>(warm) : std::span<const double>{});
    if (gs.degenerate)
      throw DegeneracyError("invert_density: degenerate ground state at iteration " + std::to_string(k) +
                                "; the density-potential map is not one-to-one here",
                            gs.gap.value_or(0.0));
    const auto n = density_of_state(gs.state).total;
    double err = 0.0;
    for (std::size_t i = 0; i < d; ++i) err += std::abs(n[i] - target[i]);
    err /= static_cast<double>(d);
    best = std::min(best, err);
    res.trace.push_back({k, err, gs.energy});
    if (opts.on_iteration) opts.on_iteration(k, err, gs.energy);

    if (err < opts.threshold) {
      res.v = v;
      res.energy = gs.energy;
      res.state = gs.state;
      res.iterations = k;
      res.final_error = err;
      return res;
    }
    if (k == opts.max_iter) break;

    if (err > last.err && weight > opts.min_update_weight) {
      // the error grew: redo the last step with half the update weight
      weight *= 0.5;
      ++res.step_reductions;
      take_step();
      if (opts.warm_start) warm = last.amplitudes;
      continue;
    }

    // |E| is taken in the min(v) = 0 gauge. A constant shift c moves E to
    // E + cN; when |E| is too small use the shift that puts E at -1.
    const double e_step = gs.energy - sector.particles() * *std::min_element(v.begin(), v.end());
    const double step_scale = std::abs(e_step) >= opts.energy_floor ? std::abs(e_step) : 1.0;
    const auto nsq = site_nsq(gs.state);
    last.v = v;
    last.err = err;
    last.delta.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      last.delta[i] = (n[i] - target[i]) * step_scale / nsq[i];
      if ((n[i] - target[i]) * last.delta[i] < 0.0) ++res.direction_violations;
    }
    if (opts.warm_start) last.amplitudes.assign(gs.state.amplitudes().begin(), gs.state.amplitudes().end());
    take_step();
    if (opts.warm_start) warm = last.amplitudes;
  }
  std::vector<double> trace;
  trace.reserve(res.trace.size());
  for (const auto& p : res.trace) trace.push_back(p.average_error);
  throw ConvergenceError("invert_density: average density error still above " +
                             std::to_string(opts.threshold) + " after " + std::to_string(opts.max_iter) +
                             " iterations",
                         best, std::move(trace));
}

struct IldaResult {
  KsResult lda;
  InversionResult ilda;
};

/// KS-LDA density of `system`, then the interacting system (same t, U) that
/// reproduces it, started from the system's own potential.
inline IldaResult build_ilda(const HubbardSystem& system, const KsOptions& ks_opts = {},
                             const InversionOptions& inv_opts = {}) {
  system.validate();
  IldaResult out;
  out.lda = solve_ks(system, ks_opts);
  out.ilda = invert_density(out.lda.density_total, system.U, system.t, system.sector, system.v, inv_opts);
  return out;
}

}  // namespace latmetric
