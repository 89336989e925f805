#pragma once

// Command-line front end. Results go to --out or standard output,
// diagnostics to the error stream.
//
// Exit status: 0 success, 1 invalid input or config, 2 numerical failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "latmetric/config.hpp"
#include "latmetric/experiments.hpp"
#include "latmetric/inversion.hpp"
#include "latmetric/metrics.hpp"

namespace latmetric {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumeric = 2;

/// Whitespace- or comma-separated numbers; '#' starts a comment.
inline SiteField read_site_field(std::istream& is, const std::string& what) {
  std::vector<double> vals;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    for (char& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const double x = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0')
        throw InvalidArgument(what + ": line " + std::to_string(lineno) + ": not a number: '" + tok + "'");
      vals.push_back(x);
    }
  }
  if (vals.empty()) throw InvalidArgument(what + ": no values");
  return SiteField(std::move(vals));
}

inline SiteField load_site_field(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return read_site_field(in, path);
}

inline ManyBodyState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path);
  return read_state(in);
}

inline void write_site_field(std::ostream& os, const SiteField& f) {
  for (double x : f) os << detail::fmt(x) << '\n';
}

namespace detail {

/// Thread count: flag, then LATMETRIC_THREADS, then the fallback.
inline unsigned resolve_threads(std::optional<unsigned> flag, unsigned fallback) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("LATMETRIC_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw InvalidArgument("LATMETRIC_THREADS: expected a positive integer");
    return static_cast<unsigned>(n);
  }
  return std::max(1u, fallback);
}

/// Writes to the named file, or to `fallback` when the name is empty or "-".
template <class F>
void emit(const std::string& path, std::ostream& fallback, F&& body) {
  if (path.empty() || path == "-") {
    body(fallback);
    return;
  }
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot write " + path);
  body(os);
}

}  // namespace detail

inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
  CLI::App app{"Distances between exact and LDA many-body systems on Hubbard chains", "latmetric"};
  app.require_subcommand(1, 1);

  std::string config_path, out_path, trace_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::size_t> max_dim;
  bool no_inversion = false, quiet = false;

  auto* validate_cmd = app.add_subcommand("validate", "check a scenario file without running it");
  validate_cmd->add_option("--config", config_path, "scenario file")->required();

  auto* run_cmd = app.add_subcommand("run", "run a scenario file and write its CSV");
  run_cmd->add_option("--config", config_path, "scenario file")->required();
  run_cmd->add_option("--out", out_path, "CSV path (default: output.csv from the file, else stdout)");
  run_cmd->add_option("--seed", seed, "sampling seed override");
  run_cmd->add_option("--threads", threads, "worker threads (default: LATMETRIC_THREADS, then solver.threads)");
  run_cmd->add_option("--max-dim", max_dim, "largest sector dimension accepted");
  run_cmd->add_flag("--no-inversion", no_inversion, "skip the i-LDA inversion");
  run_cmd->add_option("--trace-dir", trace_dir, "directory for per-row inversion traces");
  run_cmd->add_flag("--quiet", quiet, "no progress lines");

  std::string density_path, v0_path, state_out;
  double inv_U = 0.0, inv_t = 1.0, inv_threshold = 1e-8;
  int inv_up = 0, inv_down = 0, inv_max_iter = InversionOptions{}.max_iter;
  auto* invert_cmd = app.add_subcommand("invert", "find the potential that reproduces a density");
  invert_cmd->add_option("--density", density_path, "target density file")->required();
  invert_cmd->add_option("--U", inv_U, "on-site interaction")->required();
  invert_cmd->add_option("--n-up", inv_up, "spin-up particles")->required();
  invert_cmd->add_option("--n-down", inv_down, "spin-down particles")->required();
  invert_cmd->add_option("--t", inv_t, "hopping");
  invert_cmd->add_option("--v0", v0_path, "starting potential file (default: zero)");
  invert_cmd->add_option("--threshold", inv_threshold, "average site density error to reach");
  invert_cmd->add_option("--max-iter", inv_max_iter, "iteration cap");
  invert_cmd->add_option("--out", out_path, "potential output (default: stdout)");
  invert_cmd->add_option("--state-out", state_out, "binary dump of the final ground state");
  invert_cmd->add_option("--trace-dir", trace_dir, "directory for the iteration trace");
  invert_cmd->add_flag("--quiet", quiet, "no summary line");

  std::string kind, p1, p2;
  std::optional<double> particles;
  auto* distance_cmd = app.add_subcommand("distance", "distance between two states, densities or potentials");
  distance_cmd->add_option("--kind", kind, "psi, rho, va or vb")
      ->required()
      ->check(CLI::IsMember({"psi", "rho", "va", "vb"}));
  distance_cmd->add_option("--v1", p1, "first file (binary state for psi, site values otherwise)")->required();
  distance_cmd->add_option("--v2", p2, "second file")->required();
  distance_cmd->add_option("--particles", particles, "N for rho (default: sum of the first density)");
  distance_cmd->add_option("--out", out_path, "output (default: stdout)");

  int s_d = 0, s_up = 0, s_down = 0;
  double s_U = 4.0;
  std::size_t samples = 1000;
  auto* sample_cmd = app.add_subcommand("sample-random", "mean distances of random states to the ground state");
  sample_cmd->add_option("--d", s_d, "sites")->required();
  sample_cmd->add_option("--n-up", s_up, "spin-up particles")->required();
  sample_cmd->add_option("--n-down", s_down, "spin-down particles")->required();
  sample_cmd->add_option("--U", s_U, "on-site interaction");
  sample_cmd->add_option("--samples", samples, "number of random states");
  sample_cmd->add_option("--seed", seed, "seed (default 1)");
  sample_cmd->add_option("--threads", threads, "worker threads");
  sample_cmd->add_option("--out", out_path, "output (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "latmetric: " << e.what() << '\n';
    return kExitInvalid;
  }

  try {
    if (validate_cmd->parsed()) {
      const auto c = load_config(config_path);
      out << "ok: " << c.name << " (" << to_string(c.kind) << ", " << expand_tasks(c).size() << " rows)\n";
      return kExitOk;
    }

    if (run_cmd->parsed()) {
      auto c = load_config(config_path);
      if (seed) c.seed = *seed;
      if (max_dim) c.solver.build.max_dimension = *max_dim;
      if (no_inversion) c.solver.run_inversion = false;
      if (!trace_dir.empty()) c.solver.trace_dir = trace_dir;
      c.threads = detail::resolve_threads(threads, c.threads);
      validate(c);
      const auto total = expand_tasks(c).size();
      std::size_t done = 0;
      auto progress = [&](const ResultRow& r) {
        ++done;
        if (!quiet)
          err << "[" << done << "/" << total << "] " << r.param_name << "=" << detail::fmt(r.param_value)
              << " U=" << detail::fmt(r.U) << " (" << detail::fmt(std::round(r.wall_ms)) << " ms)\n";
      };
      const auto rows = run_scenario(c, progress);
      bool failed = false;
      for (const auto& r : rows)
        for (const auto& note : r.notes) {
          err << "latmetric: " << r.param_name << "=" << detail::fmt(r.param_value) << " U=" << detail::fmt(r.U)
              << ": " << note << '\n';
          failed = failed || note.find("degenerate") == std::string::npos;
        }
      const std::string path = out_path.empty() ? c.output : out_path;
      detail::emit(path, out, [&](std::ostream& os) { write_csv(os, rows); });
      return failed ? kExitNumeric : kExitOk;
    }

    if (invert_cmd->parsed()) {
      const auto target = load_site_field(density_path);
      const SpinSector sector{static_cast<int>(target.size()), inv_up, inv_down};
      sector.validate();
      const SiteField v0 = v0_path.empty() ? SiteField(target.size()) : load_site_field(v0_path);
      InversionOptions opts;
      opts.threshold = inv_threshold;
      opts.max_iter = inv_max_iter;
      const auto r = invert_density(target, inv_U, inv_t, sector, v0, opts);
      detail::emit(out_path, out, [&](std::ostream& os) { write_site_field(os, r.v); });
      if (!state_out.empty()) {
        std::ofstream os(state_out, std::ios::binary);
        if (!os) throw InvalidArgument("cannot write " + state_out);
        write_state(os, r.state);
      }
      if (!trace_dir.empty()) {
        std::filesystem::create_directories(trace_dir);
        std::ofstream os(std::filesystem::path(trace_dir) / "inversion_trace.csv");
        write_trace_csv(os, r.trace);
      }
      if (!quiet)
        err << "converged in " << r.iterations << " iterations, average error " << detail::fmt(r.final_error)
            << ", energy " << detail::fmt(r.energy) << '\n';
      return kExitOk;
    }

    if (distance_cmd->parsed()) {
      std::string line;
      if (kind == "psi") {
        const auto d = wavefunction_distance(load_state(p1), load_state(p2));
        line = detail::fmt(d.raw) + ',' + detail::fmt(d.scaled) + ',';
      } else {
        const auto a = load_site_field(p1), b = load_site_field(p2);
        if (kind == "rho") {
          const auto d = density_distance(a, b, particles ? *particles : a.sum());
          line = detail::fmt(d.raw) + ',' + detail::fmt(d.scaled) + ',';
        } else {
          const auto d = kind == "va" ? potential_distance_a(a, b) : potential_distance_b(a, b);
          line = detail::fmt(d.raw) + ',' + detail::fmt(d.scaled) + ',' + detail::fmt(d.c_min);
        }
      }
      detail::emit(out_path, out, [&](std::ostream& os) { os << "raw,scaled,c_min\n" << line << '\n'; });
      return kExitOk;
    }

    if (sample_cmd->parsed()) {
      const SpinSector sector{s_d, s_up, s_down};
      const auto r = sample_random(sector, s_U, samples, seed.value_or(1), detail::resolve_threads(threads, 1));
      detail::emit(out_path, out, [&](std::ostream& os) {
        os << "d,n_up,n_down,U,samples,mean_psi_scaled,se_psi,mean_rho_scaled,se_rho\n"
           << s_d << ',' << s_up << ',' << s_down << ',' << detail::fmt(s_U) << ',' << r.samples << ','
           << detail::fmt(r.mean_psi) << ',' << detail::fmt(r.se_psi) << ',' << detail::fmt(r.mean_rho) << ','
           << detail::fmt(r.se_rho) << '\n';
      });
      return kExitOk;
    }
  } catch (const InvalidArgument& e) {
    err << "latmetric: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const Error& e) {
    err << "latmetric: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "latmetric: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitInvalid;
}

}  // namespace latmetric
