#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "latmetric/errors.hpp"
#include "latmetric/hamiltonian.hpp"
#include "latmetric/hilbert.hpp"

namespace latmetric {

struct EigenOptions {
  /// Ritz residual target, relative to max(1, |E|).
  double tol = 1e-14;
  /// Total matrix-vector products allowed (all restarts included).
  int max_iter = 20000;
  /// Operators up to this dimension are diagonalized densely.
  std::size_t dense_threshold = 2000;
  /// Krylov vectors kept per cycle before a restart from the current Ritz vector.
  int krylov_size = 250;
  /// Above this footprint the Krylov basis is not stored (two-pass Lanczos).
  std::size_t krylov_budget_bytes = std::size_t{1} << 30;
  /// Seed of the fallback random start vector.
  std::uint64_t fallback_seed = 0x5eed1a2c;
  /// Iteration at which the start-vector overlap is checked.
  int fallback_check_iteration = 50;
  double degeneracy_gap = 1e-10;
};

struct EigenResult {
  double energy = 0.0;
  ManyBodyState state;
  double residual_norm = 0.0;
  int iterations = 0;
  bool dense_path = false;
  /// Warning: a second eigenvalue was found within degeneracy_gap.
  bool degenerate = false;
  /// Upper bound on the gap to the next eigenvalue seen by the solver, if any.
  std::optional<double> gap;
  bool random_start = false;
  /// False when the two-pass mode ran (no stored Krylov basis, no degeneracy probe).
  bool reorthogonalized = true;
  /// Lowest Ritz value after every Lanczos step.
  std::vector<double> ritz_history;
};

struct DenseSpectrum {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

/// All eigenpairs of a small real symmetric matrix, ascending.
inline DenseSpectrum dense_spectrum(const Eigen::MatrixXd& m, std::size_t threshold = 2000) {
  if (m.rows() != m.cols()) throw DimensionMismatch("dense_spectrum: matrix not square");
  if (static_cast<std::size_t>(m.rows()) > threshold)
    throw CapacityError("dense_spectrum: size " + std::to_string(m.rows()) +
                        " exceeds dense threshold " + std::to_string(threshold));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericError("dense_spectrum: eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline void scale(std::span<double> a, double c) {
  for (auto& x : a) x *= c;
}

inline void axpy(double c, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

/// Deterministic sign: positive overlap with the all-ones vector, else first
/// significant component positive.
inline void fix_sign(std::span<double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  if (std::abs(s) < 1e-12) {
    for (double v : x)
      if (std::abs(v) > 1e-8) {
        s = v;
        break;
      }
  }
  if (s < 0.0) scale(x, -1.0);
}

struct TridiagonalRitz {
  double theta = 0.0;
  std::optional<double> second;
  double spread = 0.0;  // max |Ritz value|, a norm estimate
  Eigen::VectorXd s;    // lowest eigenvector of T (empty if not requested)
};

inline TridiagonalRitz tridiagonal_ritz(const std::vector<double>& alpha,
                                        const std::vector<double>& beta, std::size_t m,
                                        bool vectors) {
  Eigen::VectorXd diag(static_cast<Eigen::Index>(m));
  Eigen::VectorXd sub(static_cast<Eigen::Index>(m > 0 ? m - 1 : 0));
  for (std::size_t i = 0; i < m; ++i) diag(static_cast<Eigen::Index>(i)) = alpha[i];
  for (std::size_t i = 0; i + 1 < m; ++i) sub(static_cast<Eigen::Index>(i)) = beta[i];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
  TridiagonalRitz r;
  r.theta = es.eigenvalues()(0);
  if (m > 1) r.second = es.eigenvalues()(1);
  r.spread = std::max(std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(static_cast<Eigen::Index>(m - 1))));
  if (vectors) r.s = es.eigenvectors().col(0);
  return r;
}

struct CycleResult {
  std::vector<double> x;
  double theta = 0.0;
  std::optional<double> second;
  double spread = 0.0;
  bool converged = false;
  bool breakdown = false;
  bool lost_start = false;
  /// The residual estimate stopped improving (two-pass mode only).
  bool stalled = false;
  int steps = 0;
};

inline bool check_now(std::size_t j) { return j < 40 || j % 4 == 3; }

/// Residual target: the requested tolerance, but never below the rounding
/// floor of m Lanczos steps on an operator with the given Ritz spread.
inline double residual_target(double tol, double theta, double spread, std::size_t m) {
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, spread) *
                       std::sqrt(static_cast<double>(std::max<std::size_t>(m, 1)));
  return std::max(tol * std::max(1.0, std::abs(theta)), floor);
}

/// One Lanczos cycle with full reorthogonalization, Krylov basis stored.
template <class MatVec>
CycleResult lanczos_cycle_stored(MatVec& mv, std::span<const double> q0, int max_steps,
                                 double tol, int check_iter, std::vector<double>& history,
                                 int& matvecs) {
  const std::size_t n = q0.size();
  const std::size_t mmax = std::min<std::size_t>(static_cast<std::size_t>(max_steps), n);
  std::vector<double> Q((mmax + 1) * n);
  std::copy(q0.begin(), q0.end(), Q.begin());
  std::vector<double> alpha, beta, w(n);
  auto q = [&](std::size_t k) { return std::span<double>(Q.data() + k * n, n); };
  CycleResult out;
  TridiagonalRitz ritz;
  std::size_t m = 0;
  for (std::size_t j = 0; j < mmax; ++j) {
    mv(std::span<const double>(q(j)), std::span<double>(w));
    ++matvecs;
    const double a = dot(q(j), w);
    alpha.push_back(a);
    axpy(-a, q(j), w);
    if (j > 0) axpy(-beta[j - 1], q(j - 1), w);
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t i = 0; i <= j; ++i) axpy(-dot(q(i), w), q(i), w);
    const double b = norm(w);
    m = j + 1;
    const bool last = (m == mmax);
    const bool want_vec = check_now(j) || last || static_cast<int>(j) + 1 == check_iter;
    ritz = tridiagonal_ritz(alpha, beta, m, want_vec);
    history.push_back(ritz.theta);
    if (b <= 1e-12 * std::max(1.0, ritz.spread)) {
      if (!want_vec) ritz = tridiagonal_ritz(alpha, beta, m, true);
      out.converged = true;
      out.breakdown = m < n;
      break;
    }
    if (want_vec) {
      const double est = b * std::abs(ritz.s(static_cast<Eigen::Index>(j)));
      if (est <= residual_target(tol, ritz.theta, ritz.spread, m)) {
        out.converged = true;
        break;
      }
      if (static_cast<int>(j) + 1 == check_iter && std::abs(ritz.s(0)) < 1e-8) {
        out.lost_start = true;
        break;
      }
    }
    if (last) break;
    beta.push_back(b);
    std::span<double> next = q(j + 1);
    for (std::size_t i = 0; i < n; ++i) next[i] = w[i] / b;
  }
  if (ritz.s.size() != static_cast<Eigen::Index>(m)) ritz = tridiagonal_ritz(alpha, beta, m, true);
  out.x.assign(n, 0.0);
  for (std::size_t k = 0; k < m; ++k) axpy(ritz.s(static_cast<Eigen::Index>(k)), q(k), out.x);
  scale(out.x, 1.0 / norm(out.x));
  out.theta = ritz.theta;
  out.second = ritz.second;
  out.spread = ritz.spread;
  out.steps = static_cast<int>(m);
  return out;
}

/// Lanczos cycle without full reorthogonalization; four vectors live at a
/// time and the Ritz vector is rebuilt in a second pass. Each new Lanczos
/// vector is still orthogonalized against the start vector, which a restart
/// from a nearly converged Ritz vector needs: there the first residual is tiny
/// and its rounding error points straight back along the start.
template <class MatVec>
CycleResult lanczos_cycle_two_pass(MatVec& mv, std::span<const double> q0, int max_steps,
                                   double tol, std::vector<double>& history, int& matvecs) {
  const std::size_t n = q0.size();
  const std::size_t mmax = std::min<std::size_t>(static_cast<std::size_t>(max_steps), n);
  std::vector<double> qprev(n, 0.0), qcur(q0.begin(), q0.end()), w(n);
  std::vector<double> alpha, beta;
  CycleResult out;
  TridiagonalRitz ritz;
  std::size_t m = 0;
  // Without reorthogonalization the residual estimate bottoms out once the
  // lowest Ritz value has converged, then grows as a ghost copy forms; the
  // cycle stops there and keeps the Ritz vector of the best step.
  double best_est = std::numeric_limits<double>::infinity();
  std::size_t best_m = 0;
  const double stall_level = std::sqrt(std::numeric_limits<double>::epsilon());
  auto next_vector = [&](std::size_t k) {
    axpy(-alpha[k], qcur, w);
    if (k > 0) axpy(-beta[k - 1], qprev, w);
    axpy(-dot(q0, w), q0, w);
  };
  for (std::size_t j = 0; j < mmax; ++j) {
    mv(std::span<const double>(qcur), std::span<double>(w));
    ++matvecs;
    alpha.push_back(dot(qcur, w));
    next_vector(j);
    const double b = norm(w);
    m = j + 1;
    const bool last = (m == mmax);
    const bool want_vec = check_now(j) || last;
    ritz = tridiagonal_ritz(alpha, beta, m, want_vec);
    history.push_back(ritz.theta);
    // A restart from a converged vector has b ~ residual, far above this.
    if (b <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, ritz.spread)) {
      if (!want_vec) ritz = tridiagonal_ritz(alpha, beta, m, true);
      out.converged = true;
      out.breakdown = m < n;
      best_m = m;
      break;
    }
    if (want_vec) {
      const double est = b * std::abs(ritz.s(static_cast<Eigen::Index>(j)));
      const double scale_e = std::max(1.0, std::abs(ritz.theta));
      if (est < best_est) {
        best_est = est;
        best_m = m;
      }
      if (est <= residual_target(tol, ritz.theta, ritz.spread, m)) {
        out.converged = true;
        break;
      }
      if (best_est <= stall_level * scale_e && est > 100.0 * best_est) {
        out.stalled = true;
        break;
      }
    }
    if (last) break;
    beta.push_back(b);
    std::swap(qprev, qcur);
    for (std::size_t i = 0; i < n; ++i) qcur[i] = w[i] / b;
  }
  if (best_m == 0) best_m = m;
  if (best_m != m || ritz.s.size() != static_cast<Eigen::Index>(m)) ritz = tridiagonal_ritz(alpha, beta, best_m, true);
  m = best_m;
  // second pass: regenerate q_k and accumulate the Ritz vector
  out.x.assign(n, 0.0);
  std::fill(qprev.begin(), qprev.end(), 0.0);
  std::copy(q0.begin(), q0.end(), qcur.begin());
  for (std::size_t k = 0; k < m; ++k) {
    axpy(ritz.s(static_cast<Eigen::Index>(k)), qcur, out.x);
    if (k + 1 == m) break;
    mv(std::span<const double>(qcur), std::span<double>(w));
    ++matvecs;
    next_vector(k);
    std::swap(qprev, qcur);
    for (std::size_t i = 0; i < n; ++i) qcur[i] = w[i] / beta[k];
  }
  scale(out.x, 1.0 / norm(out.x));
  out.theta = ritz.theta;
  out.spread = ritz.spread;
  out.steps = static_cast<int>(m);
  return out;
}

struct LanczosOutcome {
  std::vector<double> x;
  double energy = 0.0;
  double residual = 0.0;
  int iterations = 0;
  std::optional<double> second;
  bool random_start = false;
  bool reorthogonalized = true;
  std::vector<double> history;
};

template <class MatVec>
LanczosOutcome lanczos_from(MatVec& mv, std::vector<double> start, const EigenOptions& opts,
                            bool allow_fallback, bool& breakdown_out) {
  const std::size_t n = start.size();
  const bool stored =
      static_cast<double>(opts.krylov_size + 1) * static_cast<double>(n) * sizeof(double) <=
      static_cast<double>(opts.krylov_budget_bytes);
  LanczosOutcome out;
  out.reorthogonalized = stored;
  int matvecs = 0;
  std::vector<double> q = std::move(start);
  scale(q, 1.0 / norm(q));
  std::vector<double> hx(n);
  double best_residual = std::numeric_limits<double>::infinity();
  double previous_best = best_residual;
  double norm_est = 0.0;
  int steps_ref = 0;
  breakdown_out = false;
  bool first = true;
  while (true) {
    const int steps = std::min(opts.krylov_size, std::max(1, opts.max_iter - matvecs));
    CycleResult c = stored ? lanczos_cycle_stored(mv, q, steps, opts.tol,
                                                  first && allow_fallback ? opts.fallback_check_iteration : -1,
                                                  out.history, matvecs)
                           : lanczos_cycle_two_pass(mv, q, steps, opts.tol, out.history, matvecs);
    if (c.lost_start) {
      out.random_start = true;
      std::mt19937_64 rng(opts.fallback_seed);
      q.assign(n, 0.0);
      random_amplitudes_into(std::span<double>(q), rng);
      scale(q, 1.0 / norm(q));
      first = false;
      continue;
    }
    if (first) breakdown_out = c.breakdown;
    first = false;
    // Ritz vectors drift off unit norm by ~1e-13, which biases dot(x, Hx) by |E| times that.
    scale(c.x, 1.0 / norm(c.x));
    mv(std::span<const double>(c.x), std::span<double>(hx));
    ++matvecs;
    const double rq = dot(c.x, hx);
    axpy(-rq, c.x, hx);
    const double res = norm(hx);
    best_residual = std::min(best_residual, res);
    // restart cycles see a narrower spectrum, so the floor uses the widest seen
    norm_est = std::max(norm_est, c.spread);
    steps_ref = std::max(steps_ref, c.steps);
    const double target = residual_target(opts.tol, rq, norm_est, static_cast<std::size_t>(std::max(steps_ref, 1)));
    const bool progressed = res < 0.5 * previous_best;
    previous_best = std::min(previous_best, res);
    if (out.x.empty() || res <= out.residual) {
      out.x = std::move(c.x);
      out.energy = rq;
      out.residual = res;
      out.second = c.second;
    }
    if (res <= target || c.breakdown) break;
    // Without reorthogonalization the attainable residual sits somewhat above
    // the rounding floor; stop once restarts no longer improve a residual that
    // is already at the sqrt(eps) level.
    if (!stored && !progressed &&
        out.residual <= std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(out.energy)))
      break;
    if (matvecs >= opts.max_iter)
      throw ConvergenceError("lanczos: no convergence after " + std::to_string(matvecs) +
                                 " matrix-vector products",
                             best_residual, out.history);
    q = out.x;
  }
  out.iterations = matvecs;
  return out;
}

}  // namespace detail

/// Lowest eigenpair of a symmetric operator given only its action.
/// Start vector: `start` if given, else the normalized all-ones vector, with a
/// seeded random fallback when that start is (numerically) orthogonal to the
/// ground state.
template <class MatVec>
detail::LanczosOutcome lanczos_lowest(MatVec&& mv, std::size_t n, const EigenOptions& opts = {},
                                      std::span<const double> start = {}) {
  if (n == 0) throw DimensionMismatch("lanczos: empty operator");
  if (!(opts.tol > 0.0)) throw InvalidArgument("lanczos: tolerance must be > 0");
  const bool custom = !start.empty();
  if (custom && start.size() != n) throw DimensionMismatch("lanczos: start vector length mismatch");
  std::vector<double> q0 = custom ? std::vector<double>(start.begin(), start.end()) : std::vector<double>(n, 1.0);
  bool breakdown = false;
  auto primary = detail::lanczos_from(mv, q0, opts, !custom, breakdown);
  if (breakdown && !custom) {
    // Krylov space closed early: the start may live in an invariant subspace
    // that misses the ground state. Compare against a random start.
    std::mt19937_64 rng(opts.fallback_seed);
    std::vector<double> r(n);
    random_amplitudes_into(std::span<double>(r), rng);
    bool ignored = false;
    auto alt = detail::lanczos_from(mv, std::move(r), opts, false, ignored);
    if (alt.energy < primary.energy - 1e-10 * std::max(1.0, std::abs(primary.energy))) {
      alt.random_start = true;
      alt.iterations += primary.iterations;
      alt.history.insert(alt.history.begin(), primary.history.begin(), primary.history.end());
      return alt;
    }
    primary.iterations += alt.iterations;
  }
  return primary;
}

inline EigenResult ground_state(const SparseOperator& op, const EigenOptions& opts = {},
                                std::span<const double> start = {}) {
  if (!(opts.tol > 0.0)) throw InvalidArgument("ground_state: tolerance must be > 0");
  const std::size_t n = op.dimension();
  EigenResult r;
  if (n <= opts.dense_threshold) {
    const auto spec = dense_spectrum(op.to_dense(), opts.dense_threshold);
    std::vector<double> x(spec.vectors.col(0).data(), spec.vectors.col(0).data() + n);
    detail::scale(x, 1.0 / detail::norm(x));
    detail::fix_sign(x);
    r.dense_path = true;
    if (n > 1) r.gap = spec.values(1) - spec.values(0);
    auto hx = latmetric::apply(op, x);
    r.energy = detail::dot(x, hx);
    detail::axpy(-r.energy, x, hx);
    r.residual_norm = detail::norm(hx);
    r.state = ManyBodyState(op.sector(), std::move(x));
  } else {
    auto mv = [&op](std::span<const double> x, std::span<double> y) { op.apply(x, y); };
    auto out = lanczos_lowest(mv, n, opts, start);
    detail::fix_sign(out.x);
    r.energy = out.energy;
    r.residual_norm = out.residual;
    r.iterations = out.iterations;
    r.random_start = out.random_start;
    r.reorthogonalized = out.reorthogonalized;
    r.ritz_history = std::move(out.history);
    if (out.reorthogonalized && out.second) r.gap = *out.second - out.energy;
    r.state = ManyBodyState(op.sector(), std::move(out.x));
  }
  r.degenerate = r.gap && *r.gap < opts.degeneracy_gap;
  return r;
}

}  // namespace latmetric
