#pragma once

// Scenario runners: exact solve, KS-LDA solve, inversion to the i-LDA system
// and the four distances, swept over a parameter grid.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "latmetric/eigensolver.hpp"
#include "latmetric/errors.hpp"
#include "latmetric/hamiltonian.hpp"
#include "latmetric/hilbert.hpp"
#include "latmetric/inversion.hpp"
#include "latmetric/ks_scf.hpp"
#include "latmetric/metrics.hpp"

namespace latmetric {

/// Sector too large for exact diagonalization.
class UnsupportedScale : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// v_j = k (j - (d-1)/2)^2, j = 0..d-1.
inline SiteField harmonic_potential(int d, double k) {
  if (d < 1) throw InvalidArgument("harmonic_potential: d must be >= 1");
  if (!(k >= 0.0) || !std::isfinite(k)) throw InvalidArgument("harmonic_potential: k must be finite and >= 0");
  SiteField v(static_cast<std::size_t>(d));
  const double c = 0.5 * (d - 1);
  for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] = k * (j - c) * (j - c);
  return v;
}

/// V on the listed (0-based, distinct) sites, 0 elsewhere.
inline SiteField impurity_potential(int d, const std::vector<int>& sites, double V) {
  if (d < 1) throw InvalidArgument("impurity_potential: d must be >= 1");
  if (!std::isfinite(V)) throw InvalidArgument("impurity_potential: V must be finite");
  SiteField v(static_cast<std::size_t>(d));
  std::set<int> seen;
  for (int s : sites) {
    if (s < 0 || s >= d)
      throw InvalidArgument("impurity_potential: site " + std::to_string(s) + " outside [0, " + std::to_string(d) + ")");
    if (!seen.insert(s).second) throw InvalidArgument("impurity_potential: duplicate site " + std::to_string(s));
    v[static_cast<std::size_t>(s)] = V;
  }
  return v;
}

/// N = round(filling d) split as n_up = ceil(N/2), n_down = floor(N/2).
inline SpinSector filled_sector(int d, double filling) {
  const int N = static_cast<int>(std::lround(filling * d));
  return {d, (N + 1) / 2, N / 2};
}

enum class ScenarioKind { homogeneous, impurities, harmonic, random_sample };

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::homogeneous: return "homogeneous";
    case ScenarioKind::impurities: return "impurities";
    case ScenarioKind::harmonic: return "harmonic";
    case ScenarioKind::random_sample: return "random-sample";
  }
  return "?";
}

/// Grid parameter swept by each scenario kind.
inline std::string grid_parameter(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::homogeneous:
    case ScenarioKind::random_sample: return "d";
    case ScenarioKind::impurities: return "V";
    case ScenarioKind::harmonic: return "k";
  }
  return "?";
}

struct SolverSettings {
  EigenOptions eigen{};
  BuildOptions build{};
  KsOptions ks{};
  InversionOptions inversion{};
  bool run_inversion = true;
  /// Inversion is skipped for chains longer than this.
  int inversion_max_d = 14;
  std::string trace_dir;
};

struct ScenarioConfig {
  std::string name = "scenario";
  ScenarioKind kind = ScenarioKind::homogeneous;
  double t = 1.0;
  std::vector<double> U{4.0};
  /// Chain and sector for impurities / harmonic.
  int d = 0;
  int n_up = 0;
  int n_down = 0;
  /// Particles per site for homogeneous / random-sample rows.
  double filling = 0.5;
  std::vector<int> impurity_sites;
  std::vector<double> grid;
  std::size_t samples = 1;
  std::uint64_t seed = 1;
  SolverSettings solver{};
  std::string output;
  unsigned threads = 1;
};

namespace detail {

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace detail

/// Checks everything that can be checked without numerical work. Errors name
/// the offending key.
inline void validate(const ScenarioConfig& c) {
  auto fail = [](const std::string& key, const std::string& why) { throw InvalidArgument(key + ": " + why); };
  if (c.grid.empty()) fail("grid", "grid is empty");
  for (std::size_t i = 1; i < c.grid.size(); ++i)
    if (!(c.grid[i] > c.grid[i - 1])) fail("grid", "values must be strictly increasing");
  for (double g : c.grid)
    if (!std::isfinite(g)) fail("grid", "non-finite value");
  if (c.U.empty()) fail("system.U", "no interaction strength given");
  for (double u : c.U)
    if (!(u >= 0.0) || !std::isfinite(u)) fail("system.U", "must be finite and >= 0");
  if (!(c.t > 0.0) || !std::isfinite(c.t)) fail("system.t", "must be > 0");
  if (c.threads < 1) fail("threads", "must be >= 1");

  std::vector<SpinSector> sectors;
  if (c.kind == ScenarioKind::homogeneous || c.kind == ScenarioKind::random_sample) {
    if (!(c.filling > 0.0 && c.filling <= 2.0)) fail("system.filling", "must lie in (0, 2]");
    for (double g : c.grid) {
      if (g != std::floor(g) || g < 1) fail("grid", "chain sizes must be positive integers");
      sectors.push_back(filled_sector(static_cast<int>(g), c.filling));
    }
    if (c.kind == ScenarioKind::random_sample && c.samples < 1) fail("sampling.samples", "must be >= 1");
  } else {
    if (c.d < 1) fail("system.d", "must be >= 1");
    const SpinSector s{c.d, c.n_up, c.n_down};
    try {
      s.validate();
    } catch (const InvalidArgument& e) {
      fail("system.n_up/n_down", e.what());
    }
    sectors.push_back(s);
    if (c.kind == ScenarioKind::impurities) {
      if (c.impurity_sites.empty()) fail("impurities.sites", "no impurity sites");
      std::set<int> seen;
      for (int site : c.impurity_sites) {
        if (site < 0 || site >= c.d)
          fail("impurities.sites", "site " + std::to_string(site) + " outside [0, " + std::to_string(c.d) + ")");
        if (!seen.insert(site).second) fail("impurities.sites", "duplicate site " + std::to_string(site));
      }
    } else {
      for (double k : c.grid)
        if (k < 0.0) fail("grid", "trap strength k must be >= 0");
    }
  }
  for (const auto& s : sectors) {
    if (s.d > kMaxSites) fail("system.d", "at most " + std::to_string(kMaxSites) + " sites are supported");
    if (s.particles() == 0) fail("system", "sector " + to_string(s) + " holds no particles");
    const double dim = static_cast<double>(binomial(s.d, s.n_up)) * static_cast<double>(binomial(s.d, s.n_down));
    if (dim > static_cast<double>(c.solver.build.max_dimension))
      throw UnsupportedScale("solver.max_dim: sector " + to_string(s) + " has dimension " +
                             detail::fmt(dim) + ", above the exact-diagonalization cap " +
                             std::to_string(c.solver.build.max_dimension) +
                             "; chains of this size need a DMRG-type solver, which is not provided");
  }
}

struct ResultRow {
  std::string scenario;
  int d = 0;
  double t = 1.0;
  double U = 0.0;
  int n_up = 0;
  int n_down = 0;
  std::string param_name;
  double param_value = 0.0;
  DistanceReport report;
  std::optional<double> exact_energy;
  std::optional<bool> lda_converged;
  std::optional<bool> inversion_converged;
  std::optional<int> inversion_iters;
  /// Standard errors of the sample means (random-sample rows).
  std::optional<double> se_psi;
  std::optional<double> se_rho;
  double wall_ms = 0.0;
  /// Per-row failures and warnings; the run itself continues.
  std::vector<std::string> notes;
  /// Densities kept for pipeline checks.
  SiteField exact_density;
  SiteField lda_density;
  SiteField ilda_density;
};

struct RowTask {
  HubbardSystem system;
  std::string param_name;
  double param_value = 0.0;
};

/// Exact vs KS-LDA vs i-LDA comparison for one system.
inline ResultRow run_point(const RowTask& task, const SolverSettings& s, const std::string& scenario = "point") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& sys = task.system;
  ResultRow row;
  row.scenario = scenario;
  row.d = sys.d();
  row.t = sys.t;
  row.U = sys.U;
  row.n_up = sys.sector.n_up;
  row.n_down = sys.sector.n_down;
  row.param_name = task.param_name;
  row.param_value = task.param_value;
  const double N = sys.sector.particles();
  auto finish = [&] {
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return row;
  };

  EigenResult exact;
  try {
    exact = ground_state(build_hubbard(sys, s.build), s.eigen);
  } catch (const Error& e) {
    row.notes.push_back(std::string("exact: ") + e.what());
    return finish();
  }
  row.exact_energy = exact.energy;
  if (exact.degenerate) row.notes.push_back("exact: ground state degenerate within tolerance");
  row.exact_density = density_of_state(exact.state).total;

  KsResult lda;
  try {
    auto ks_opts = s.ks;
    ks_opts.throw_on_failure = false;
    lda = solve_ks(sys, ks_opts);
  } catch (const Error& e) {
    row.lda_converged = false;
    row.notes.push_back(std::string("lda: ") + e.what());
    return finish();
  }
  row.lda_converged = lda.converged;
  if (!lda.converged) row.notes.push_back("lda: no self-consistency, residual " + std::to_string(lda.residual));
  row.lda_density = lda.density_total;
  row.report.rho = density_distance(row.exact_density, lda.density_total, N);

  if (!s.run_inversion || sys.d() > s.inversion_max_d) return finish();
  try {
    auto inv_opts = s.inversion;
    InversionResult inv = invert_density(lda.density_total, sys.U, sys.t, sys.sector, sys.v, inv_opts);
    row.inversion_converged = true;
    row.inversion_iters = inv.iterations;
    row.ilda_density = density_of_state(inv.state).total;
    row.report.psi = wavefunction_distance(exact.state, inv.state);
    row.report.va = potential_distance_a(sys.v, inv.v);
    row.report.vb = potential_distance_b(sys.v, inv.v);
    if (!s.trace_dir.empty()) {
      std::filesystem::create_directories(s.trace_dir);
      char buf[64];
      std::snprintf(buf, sizeof buf, "_%s%.6g_U%.6g.csv", task.param_name.c_str(), task.param_value, sys.U);
      std::ofstream os(std::filesystem::path(s.trace_dir) / (scenario + buf));
      write_trace_csv(os, inv.trace);
    }
  } catch (const ConvergenceError& e) {
    row.inversion_converged = false;
    row.inversion_iters = static_cast<int>(e.trace().size()) - 1;
    row.notes.push_back(std::string("inversion: ") + e.what());
  } catch (const Error& e) {
    row.inversion_converged = false;
    row.notes.push_back(std::string("inversion: ") + e.what());
  }
  return finish();
}

struct SampleSummary {
  double mean_psi = 0.0;
  double se_psi = 0.0;
  double mean_rho = 0.0;
  double se_rho = 0.0;
  std::size_t samples = 0;
  double exact_energy = 0.0;
};

/// Mean scaled distances of M random states (uniform [-1, 1) amplitudes) to
/// the exact ground state of the homogeneous chain. Samples are drawn in
/// fixed chunks with per-chunk seeds, so the result does not depend on the
/// thread count.
inline SampleSummary sample_random(const SpinSector& sector, double U, std::size_t M, std::uint64_t seed,
                                   unsigned threads = 1, double t = 1.0, const EigenOptions& eigen = {}) {
  sector.validate();
  if (M < 1) throw InvalidArgument("sample_random: M must be >= 1");
  const HubbardSystem sys{t, U, SiteField(static_cast<std::size_t>(sector.d)), sector};
  const auto exact = ground_state(build_hubbard(sys), eigen);
  const auto n_exact = density_of_state(exact.state).total;
  const Basis basis(sector);
  const double N = sector.particles();
  const std::size_t dim = sector.dimension();

  constexpr std::size_t chunk = 1024;
  const std::size_t chunks = (M + chunk - 1) / chunk;
  struct Partial {
    double psi = 0, psi2 = 0, rho = 0, rho2 = 0;
  };
  std::vector<Partial> parts(chunks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    std::vector<double> x(dim);
    for (std::size_t c; (c = next.fetch_add(1)) < chunks;) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
      std::mt19937_64 rng(seq);
      Partial p;
      const std::size_t end = std::min(M, (c + 1) * chunk);
      for (std::size_t m = c * chunk; m < end; ++m) {
        random_amplitudes_into(std::span<double>(x), rng);
        double nn = 0.0, ov = 0.0;
        const auto g = exact.state.amplitudes();
        for (std::size_t i = 0; i < dim; ++i) {
          nn += x[i] * x[i];
          ov += x[i] * g[i];
        }
        const double dpsi = std::sqrt(std::max(0.0, 1.0 - std::min(1.0, std::abs(ov) / std::sqrt(nn))));
        const auto dens = density_of_amplitudes(basis, x);
        double l1 = 0.0;
        for (std::size_t i = 0; i < n_exact.size(); ++i) l1 += std::abs(dens.total[i] / nn - n_exact[i]);
        const double drho = l1 / (2.0 * N);
        p.psi += dpsi;
        p.psi2 += dpsi * dpsi;
        p.rho += drho;
        p.rho2 += drho * drho;
      }
      parts[c] = p;
    }
  };
  const unsigned nt = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < nt; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  Partial total;
  for (const auto& p : parts) {
    total.psi += p.psi;
    total.psi2 += p.psi2;
    total.rho += p.rho;
    total.rho2 += p.rho2;
  }
  const double m = static_cast<double>(M);
  auto se = [m](double s, double s2) {
    if (m < 2) return 0.0;
    const double var = std::max(0.0, (s2 - s * s / m) / (m - 1.0));
    return std::sqrt(var / m);
  };
  return {total.psi / m, se(total.psi, total.psi2), total.rho / m, se(total.rho, total.rho2), M, exact.energy};
}

/// Bytes one grid point may hold at peak, used to bound the worker count.
inline double estimated_task_bytes(const SpinSector& s, const SolverSettings& opts) {
  const double n = static_cast<double>(s.dimension());
  const double krylov = std::min(n * 8.0 * (opts.eigen.krylov_size + 1),
                                 static_cast<double>(opts.eigen.krylov_budget_bytes) + n * 8.0 * 4);
  const double csr = std::min(n * 12.0 * 2.0 * s.d, static_cast<double>(opts.build.explicit_budget_bytes));
  return krylov + csr + n * 8.0 * 6;
}

/// Expands the config into one task per (U, grid point), in output order.
inline std::vector<RowTask> expand_tasks(const ScenarioConfig& c) {
  std::vector<RowTask> tasks;
  const std::string p = grid_parameter(c.kind);
  for (double U : c.U)
    for (double g : c.grid) {
      RowTask task;
      task.param_name = p;
      task.param_value = g;
      switch (c.kind) {
        case ScenarioKind::homogeneous:
        case ScenarioKind::random_sample: {
          const int d = static_cast<int>(g);
          task.system = {c.t, U, SiteField(static_cast<std::size_t>(d)), filled_sector(d, c.filling)};
          break;
        }
        case ScenarioKind::impurities:
          task.system = {c.t, U, impurity_potential(c.d, c.impurity_sites, g), {c.d, c.n_up, c.n_down}};
          break;
        case ScenarioKind::harmonic:
          task.system = {c.t, U, harmonic_potential(c.d, g), {c.d, c.n_up, c.n_down}};
          break;
      }
      tasks.push_back(std::move(task));
    }
  return tasks;
}

/// Runs every grid point on a bounded worker pool; rows come back in grid
/// order. `progress` (optional) is called after each finished row.
inline std::vector<ResultRow> run_scenario(const ScenarioConfig& c,
                                           const std::function<void(const ResultRow&)>& progress = {}) {
  validate(c);
  const auto tasks = expand_tasks(c);
  std::vector<ResultRow> rows(tasks.size());

  double peak = 0.0;
  for (const auto& t : tasks) peak = std::max(peak, estimated_task_bytes(t.system.sector, c.solver));
  constexpr double memory_budget = 3.0 * (1ull << 30);
  const unsigned by_memory = static_cast<unsigned>(std::max(1.0, std::floor(memory_budget / peak)));
  const unsigned nt = std::max(1u, std::min({c.threads, by_memory, static_cast<unsigned>(tasks.size())}));

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
      ResultRow row;
      if (c.kind == ScenarioKind::random_sample) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto& sys = tasks[i].system;
        row.scenario = c.name;
        row.d = sys.d();
        row.t = sys.t;
        row.U = sys.U;
        row.n_up = sys.sector.n_up;
        row.n_down = sys.sector.n_down;
        row.param_name = tasks[i].param_name;
        row.param_value = tasks[i].param_value;
        try {
          // one sampling job at a time gets the whole pool
          const auto r = sample_random(sys.sector, sys.U, c.samples, c.seed + i, 1, sys.t, c.solver.eigen);
          row.report.psi = Distance{std::sqrt(2.0 * sys.sector.particles()) * r.mean_psi, r.mean_psi};
          row.report.rho = Distance{2.0 * sys.sector.particles() * r.mean_rho, r.mean_rho};
          row.se_psi = r.se_psi;
          row.se_rho = r.se_rho;
          row.exact_energy = r.exact_energy;
        } catch (const Error& e) {
          row.notes.push_back(std::string("sampling: ") + e.what());
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      } else {
        row = run_point(tasks[i], c.solver, c.name);
      }
      std::lock_guard lock(mu);
      rows[i] = std::move(row);
      if (progress) progress(rows[i]);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < nt; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return rows;
}

inline constexpr const char* kCsvHeader =
    "scenario,d,t,U,n_up,n_down,param_name,param_value,d_rho_scaled,d_psi_scaled,d_va_scaled,d_vb_scaled,"
    "exact_energy,lda_converged,inversion_converged,inversion_iters,wall_ms";

namespace detail {

template <class T>
std::string fmt_opt(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_same_v<T, bool>)
    return *v ? "true" : "false";
  else if constexpr (std::is_integral_v<T>)
    return std::to_string(*v);
  else
    return fmt(*v);
}

template <class D>
std::optional<double> scaled(const std::optional<D>& d) {
  return d ? std::optional<double>(d->scaled) : std::nullopt;
}

}  // namespace detail

inline std::string csv_line(const ResultRow& r, bool with_time = true) {
  using detail::fmt, detail::fmt_opt, detail::scaled;
  std::string s = r.scenario + ',' + std::to_string(r.d) + ',' + fmt(r.t) + ',' + fmt(r.U) + ',' +
                  std::to_string(r.n_up) + ',' + std::to_string(r.n_down) + ',' + r.param_name + ',' +
                  fmt(r.param_value) + ',' + fmt_opt(scaled(r.report.rho)) + ',' + fmt_opt(scaled(r.report.psi)) +
                  ',' + fmt_opt(scaled(r.report.va)) + ',' + fmt_opt(scaled(r.report.vb)) + ',' +
                  fmt_opt(r.exact_energy) + ',' + fmt_opt(r.lda_converged) + ',' + fmt_opt(r.inversion_converged) +
                  ',' + fmt_opt(r.inversion_iters) + ',';
  if (with_time) s += fmt(std::round(r.wall_ms * 1000.0) / 1000.0);
  return s;
}

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kCsvHeader << '\n';
  for (const auto& r : rows) os << csv_line(r) << '\n';
}

}  // namespace latmetric
