#pragma once

// Distances between exact and approximate ground-state quantities, each with
// a [0, 1] scaled variant:
//   wave functions  D_psi = sqrt(2N - 2N |<a|b>|)     (states normalized to N)
//   densities       D_rho = sum_j |r1_j - r2_j|
//   potentials A    D_v^A = min_c (1/d) sum_j |dv_j + c|
//   potentials B    D_v^B = min_c sqrt((1/d) sum_j (dv_j + c)^2) = sigma(dv)
// with dv = v1 - v2. Potential distances scale as D / (D + 1).

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "latmetric/errors.hpp"
#include "latmetric/hilbert.hpp"

namespace latmetric {

struct Distance {
  double raw = 0.0;
  double scaled = 0.0;
};

struct PotentialDistance {
  double raw = 0.0;
  double scaled = 0.0;
  /// Minimizing gauge constant, added to v1 - v2.
  double c_min = 0.0;
  /// For metric A with even d every c in [c_low, c_high] is optimal.
  double c_low = 0.0;
  double c_high = 0.0;
};

inline double scale_potential(double raw) { return raw / (raw + 1.0); }

inline Distance wavefunction_distance(const ManyBodyState& a, const ManyBodyState& b) {
  const double ov = std::min(1.0, std::abs(overlap(a, b)));
  const double N = a.sector().particles();
  Distance out;
  out.scaled = std::sqrt(std::max(0.0, 1.0 - ov));
  out.raw = std::sqrt(2.0 * N) * out.scaled;
  return out;
}

/// Same as above with an explicit particle count, which must match the sector.
inline Distance wavefunction_distance(const ManyBodyState& a, const ManyBodyState& b, int N) {
  if (N != a.sector().particles())
    throw InvalidArgument("wavefunction_distance: N=" + std::to_string(N) +
                          " does not match the sector particle count");
  return wavefunction_distance(a, b);
}

inline Distance density_distance(const SiteField& r1, const SiteField& r2, double N) {
  if (r1.size() != r2.size())
    throw DimensionMismatch("density_distance: lengths " + std::to_string(r1.size()) + " and " +
                            std::to_string(r2.size()));
  if (!(N > 0.0)) throw InvalidArgument("density_distance: N must be > 0");
  if (std::abs(r1.sum() - N) > 1e-6 || std::abs(r2.sum() - N) > 1e-6)
    throw InvalidArgument("density_distance: densities do not both integrate to N=" + std::to_string(N));
  Distance out;
  for (std::size_t j = 0; j < r1.size(); ++j) out.raw += std::abs(r1[j] - r2[j]);
  out.scaled = out.raw / (2.0 * N);
  return out;
}

inline std::vector<double> potential_difference(const SiteField& v1, const SiteField& v2) {
  if (v1.size() != v2.size())
    throw DimensionMismatch("potential distance: lengths " + std::to_string(v1.size()) + " and " +
                            std::to_string(v2.size()));
  if (v1.size() == 0) throw InvalidArgument("potential distance: empty potentials");
  std::vector<double> dv(v1.size());
  for (std::size_t j = 0; j < dv.size(); ++j) dv[j] = v1[j] - v2[j];
  return dv;
}

/// L1 metric; the optimal constant is minus the median of v1 - v2 (lower
/// median for even d, the whole [lower, upper] median interval being optimal).
inline PotentialDistance potential_distance_a(const SiteField& v1, const SiteField& v2) {
  const auto dv = potential_difference(v1, v2);
  auto sorted = dv;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t d = sorted.size();
  const double lower = sorted[(d - 1) / 2];
  const double upper = sorted[d / 2];
  PotentialDistance out;
  out.c_min = -lower;
  out.c_low = -upper;
  out.c_high = -lower;
  // Evaluated at the interval midpoint with sorted terms, so that swapping
  // v1 and v2 gives a bit-identical value.
  const double mid = 0.5 * (lower + upper);
  std::vector<double> dev(d);
  for (std::size_t j = 0; j < d; ++j) dev[j] = std::abs(dv[j] - mid);
  std::sort(dev.begin(), dev.end());
  for (double x : dev) out.raw += x;
  out.raw /= static_cast<double>(d);
  out.scaled = scale_potential(out.raw);
  return out;
}

/// L2 metric; the optimal constant is minus the mean of v1 - v2 and the
/// distance is the population standard deviation of v1 - v2.
inline PotentialDistance potential_distance_b(const SiteField& v1, const SiteField& v2) {
  const auto dv = potential_difference(v1, v2);
  const double d = static_cast<double>(dv.size());
  double mu = 0.0;
  for (double x : dv) mu += x;
  mu /= d;
  double var = 0.0;
  for (double x : dv) var += (x - mu) * (x - mu);
  PotentialDistance out;
  out.raw = std::sqrt(var / d);
  out.scaled = scale_potential(out.raw);
  out.c_min = -mu;
  out.c_low = out.c_high = -mu;
  return out;
}

struct DistanceReport {
  std::optional<Distance> psi;
  std::optional<Distance> rho;
  std::optional<PotentialDistance> va;
  std::optional<PotentialDistance> vb;

  /// True when every present scaled value lies in [0, 1 + 1e-12].
  bool in_range() const {
    auto ok = [](double s) { return s >= 0.0 && s <= 1.0 + 1e-12; };
    return (!psi || ok(psi->scaled)) && (!rho || ok(rho->scaled)) && (!va || ok(va->scaled)) &&
           (!vb || ok(vb->scaled));
  }
};

}  // namespace latmetric
