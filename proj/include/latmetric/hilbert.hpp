#pragma once

// Occupation-number basis for a fixed (N_up, N_down) sector of a d-site chain,
// plus the value types that live on it: site fields and many-body states.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "latmetric/errors.hpp"

namespace latmetric {

using Mask = std::uint64_t;

inline constexpr int kMaxSites = 62;

/// Binomial coefficient; exact for the n <= 64 range used here.
inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

struct SpinSector {
  int d = 0;
  int n_up = 0;
  int n_down = 0;

  int particles() const { return n_up + n_down; }

  std::size_t dimension() const {
    return static_cast<std::size_t>(binomial(d, n_up) * binomial(d, n_down));
  }

  void validate() const {
    if (d < 1 || d > kMaxSites)
      throw InvalidSector("sector: site count d=" + std::to_string(d) + " outside [1, " +
                          std::to_string(kMaxSites) + "]");
    if (n_up < 0 || n_up > d || n_down < 0 || n_down > d)
      throw InvalidSector("sector: particle counts (n_up=" + std::to_string(n_up) +
                          ", n_down=" + std::to_string(n_down) + ") out of range for d=" +
                          std::to_string(d));
  }

  friend bool operator==(const SpinSector&, const SpinSector&) = default;
};

inline std::string to_string(const SpinSector& s) {
  return "(d=" + std::to_string(s.d) + ", n_up=" + std::to_string(s.n_up) +
         ", n_down=" + std::to_string(s.n_down) + ")";
}

/// One basis determinant. Bit i of a mask is site i.
struct Configuration {
  Mask up_mask = 0;
  Mask down_mask = 0;

  friend auto operator<=>(const Configuration&, const Configuration&) = default;
};

/// All d-bit masks with a fixed popcount, in increasing numeric order.
/// For fixed popcount numeric order coincides with colex order, so the rank of
/// a mask is sum_k C(p_k, k+1) over its set bits p_0 < p_1 < ...
class SpeciesBasis {
 public:
  SpeciesBasis() = default;
  SpeciesBasis(int d, int n) : d_(d), n_(n) {
    const auto count = binomial(d, n);
    masks_.reserve(count);
    if (n == 0) {
      masks_.push_back(0);
      return;
    }
    Mask m = (Mask{1} << n) - 1;
    const Mask limit = Mask{1} << d;
    while (m < limit) {
      masks_.push_back(m);
      // Gosper's hack: next integer with the same popcount.
      const Mask c = m & (~m + 1);
      const Mask r = m + c;
      m = (((r ^ m) >> 2) / c) | r;
    }
    for (int p = 0; p <= d; ++p)
      for (int k = 0; k <= n; ++k) rank_table_[p][k] = binomial(p, k);
  }

  int sites() const { return d_; }
  int particles() const { return n_; }
  std::size_t size() const { return masks_.size(); }
  Mask operator[](std::size_t i) const { return masks_[i]; }
  const std::vector<Mask>& masks() const { return masks_; }

  std::size_t rank(Mask m) const {
    std::size_t r = 0;
    int k = 1;
    while (m) {
      const int p = std::countr_zero(m);
      r += rank_table_[p][k];
      ++k;
      m &= m - 1;
    }
    return r;
  }

 private:
  int d_ = 0;
  int n_ = 0;
  std::vector<Mask> masks_;
  std::array<std::array<std::size_t, kMaxSites + 2>, kMaxSites + 2> rank_table_{};
};

/// Product basis ordered lexicographically on (up_mask, down_mask):
/// index = rank_up * n_down_configs + rank_down.
class Basis {
 public:
  Basis() = default;
  explicit Basis(const SpinSector& sector) : sector_(sector) {
    sector.validate();
    up_ = SpeciesBasis(sector.d, sector.n_up);
    down_ = SpeciesBasis(sector.d, sector.n_down);
  }

  const SpinSector& sector() const { return sector_; }
  std::size_t size() const { return up_.size() * down_.size(); }
  const SpeciesBasis& up() const { return up_; }
  const SpeciesBasis& down() const { return down_; }

  Configuration at(std::size_t index) const {
    const auto nd = down_.size();
    return {up_[index / nd], down_[index % nd]};
  }

  std::size_t index_of(const Configuration& c) const {
    return up_.rank(c.up_mask) * down_.size() + down_.rank(c.down_mask);
  }

 private:
  SpinSector sector_;
  SpeciesBasis up_;
  SpeciesBasis down_;
};

/// Materialized, ordered configuration list. Use Basis directly for large sectors.
inline std::vector<Configuration> enumerate_basis(const SpinSector& sector) {
  const Basis basis(sector);
  std::vector<Configuration> out;
  out.reserve(basis.size());
  for (Mask u : basis.up().masks())
    for (Mask dn : basis.down().masks()) out.push_back({u, dn});
  return out;
}

/// Real per-site quantity: potentials, densities.
class SiteField {
 public:
  SiteField() = default;
  explicit SiteField(std::size_t d, double fill = 0.0) : values_(d, fill) {}
  explicit SiteField(std::vector<double> values) : values_(std::move(values)) { check_finite(); }
  SiteField(std::initializer_list<double> values) : values_(values) { check_finite(); }

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  const std::vector<double>& values() const { return values_; }
  std::span<const double> span() const { return values_; }

  double sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }
  double mean() const { return values_.empty() ? 0.0 : sum() / static_cast<double>(size()); }

  void check_finite() const {
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i]))
        throw InvalidArgument("site field: non-finite entry at site " + std::to_string(i));
  }

  friend bool operator==(const SiteField&, const SiteField&) = default;

 private:
  std::vector<double> values_;
};

inline SiteField operator+(SiteField a, const SiteField& b) {
  if (a.size() != b.size()) throw DimensionMismatch("site field: length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline SiteField operator-(SiteField a, const SiteField& b) {
  if (a.size() != b.size()) throw DimensionMismatch("site field: length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline SiteField shifted(SiteField a, double c) {
  for (auto& x : a) x += c;
  return a;
}

/// Unit-norm real amplitude vector over a sector's basis.
class ManyBodyState {
 public:
  ManyBodyState() = default;

  /// Normalizes `amplitudes`; throws on length mismatch or a zero vector.
  ManyBodyState(const SpinSector& sector, std::vector<double> amplitudes)
      : sector_(sector), amplitudes_(std::move(amplitudes)) {
    if (amplitudes_.size() != sector_.dimension())
      throw DimensionMismatch("state: " + std::to_string(amplitudes_.size()) +
                              " amplitudes for sector of dimension " +
                              std::to_string(sector_.dimension()));
    double norm2 = 0.0;
    for (double a : amplitudes_) norm2 += a * a;
    if (!(norm2 > 0.0) || !std::isfinite(norm2)) throw InvalidArgument("state: zero or non-finite norm");
    if (std::abs(norm2 - 1.0) > 1e-15) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (auto& a : amplitudes_) a *= inv;
    }
  }

  static ManyBodyState basis_state(const SpinSector& sector, std::size_t index) {
    std::vector<double> a(sector.dimension(), 0.0);
    a.at(index) = 1.0;
    return ManyBodyState(sector, std::move(a));
  }

  const SpinSector& sector() const { return sector_; }
  std::size_t size() const { return amplitudes_.size(); }
  std::span<const double> amplitudes() const { return amplitudes_; }
  double operator[](std::size_t i) const { return amplitudes_[i]; }

 private:
  SpinSector sector_;
  std::vector<double> amplitudes_;
};

struct SpinDensity {
  SiteField total;
  SiteField up;
  SiteField down;
};

/// Per-species weights w_up[iu] = sum_id a^2 and w_down[id] = sum_iu a^2,
/// then spread onto sites through the occupation masks.
inline SpinDensity density_of_amplitudes(const Basis& basis, std::span<const double> amps) {
  const std::size_t nu = basis.up().size();
  const std::size_t nd = basis.down().size();
  const int d = basis.sector().d;
  std::vector<double> w_up(nu, 0.0), w_down(nd, 0.0);
  for (std::size_t iu = 0; iu < nu; ++iu) {
    const double* row = amps.data() + iu * nd;
    double s = 0.0;
    for (std::size_t id = 0; id < nd; ++id) {
      const double p = row[id] * row[id];
      s += p;
      w_down[id] += p;
    }
    w_up[iu] = s;
  }
  SpinDensity out{SiteField(d), SiteField(d), SiteField(d)};
  auto spread = [](const SpeciesBasis& sb, const std::vector<double>& w, SiteField& f) {
    for (std::size_t k = 0; k < sb.size(); ++k) {
      Mask m = sb[k];
      while (m) {
        f[std::countr_zero(m)] += w[k];
        m &= m - 1;
      }
    }
  };
  spread(basis.up(), w_up, out.up);
  spread(basis.down(), w_down, out.down);
  for (int i = 0; i < d; ++i) out.total[i] = out.up[i] + out.down[i];
  return out;
}

inline SpinDensity density_of_state(const ManyBodyState& state) {
  return density_of_amplitudes(Basis(state.sector()), state.amplitudes());
}

inline double overlap(const ManyBodyState& a, const ManyBodyState& b) {
  if (!(a.sector() == b.sector()))
    throw IncompatibleSector("overlap: sectors " + to_string(a.sector()) + " and " +
                             to_string(b.sector()) + " differ");
  const auto x = a.amplitudes();
  const auto y = b.amplitudes();
  return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
}

/// I.i.d. uniform [-1, 1) draws, one per determinant, before normalization.
template <class Rng>
void random_amplitudes_into(std::span<double> out, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& a : out) a = dist(rng);
}

template <class Rng>
std::vector<double> random_amplitudes(const SpinSector& sector, Rng& rng) {
  std::vector<double> a(sector.dimension());
  random_amplitudes_into(std::span<double>(a), rng);
  return a;
}

template <class Rng>
ManyBodyState random_state(const SpinSector& sector, Rng& rng) {
  sector.validate();
  return ManyBodyState(sector, random_amplitudes(sector, rng));
}

// Binary state dump: four little-endian uint64 (d, n_up, n_down, dimension)
// followed by little-endian IEEE-754 doubles in basis order.

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw InvalidArgument("state file: truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace detail

inline void write_state(std::ostream& os, const ManyBodyState& s) {
  const auto& sec = s.sector();
  detail::put_u64(os, static_cast<std::uint64_t>(sec.d));
  detail::put_u64(os, static_cast<std::uint64_t>(sec.n_up));
  detail::put_u64(os, static_cast<std::uint64_t>(sec.n_down));
  detail::put_u64(os, s.size());
  for (double a : s.amplitudes()) detail::put_u64(os, std::bit_cast<std::uint64_t>(a));
}

inline ManyBodyState read_state(std::istream& is) {
  SpinSector sec;
  sec.d = static_cast<int>(detail::get_u64(is));
  sec.n_up = static_cast<int>(detail::get_u64(is));
  sec.n_down = static_cast<int>(detail::get_u64(is));
  const auto dim = detail::get_u64(is);
  sec.validate();
  if (dim != sec.dimension()) throw InvalidArgument("state file: dimension does not match header sector");
  std::vector<double> a(dim);
  for (auto& x : a) x = std::bit_cast<double>(detail::get_u64(is));
  return ManyBodyState(sec, std::move(a));
}

}  // namespace latmetric
