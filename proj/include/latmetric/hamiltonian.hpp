#pragma once

// Open-chain Hubbard Hamiltonian on a fixed spin sector:
//   H = -t sum_{i,s} (c+_{i,s} c_{i+1,s} + h.c.) + U sum_i n_{i,up} n_{i,dn}
//       + sum_{i,s} v_i n_{i,s}
// Fermionic operators are ordered all-up before all-down, each species by site.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latmetric/errors.hpp"
#include "latmetric/hilbert.hpp"

namespace latmetric {

struct HubbardSystem {
  double t = 1.0;
  double U = 0.0;
  SiteField v;
  SpinSector sector;

  int d() const { return sector.d; }

  void validate() const {
    sector.validate();
    if (!(t > 0.0)) throw InvalidArgument("system: hopping t must be > 0");
    if (!std::isfinite(U)) throw InvalidArgument("system: U must be finite");
    if (v.size() != static_cast<std::size_t>(sector.d))
      throw DimensionMismatch("system: potential has " + std::to_string(v.size()) +
                              " sites, sector has " + std::to_string(sector.d));
    v.check_finite();
  }
};

struct BuildOptions {
  /// Sectors above this dimension are rejected outright.
  std::size_t max_dimension = 30'000'000;
  /// Explicit row-compressed storage is used while its estimated footprint
  /// stays below this; otherwise matvecs are generated from the basis.
  std::size_t explicit_budget_bytes = std::size_t{512} << 20;
};

/// Sign picked up by c+_to c_from acting on a single-species mask: (-1) to the
/// number of occupied sites strictly between the two endpoints.
inline double hop_sign(Mask mask, int from, int to) {
  const int lo = std::min(from, to), hi = std::max(from, to);
  if (hi - lo <= 1) return 1.0;
  const Mask between = ((Mask{1} << hi) - 1) & ~((Mask{1} << (lo + 1)) - 1);
  return (std::popcount(mask & between) & 1) ? -1.0 : 1.0;
}

struct CsrMatrix {
  std::size_t rows = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> cols;
  std::vector<double> vals;

  std::size_t nonzeros() const { return vals.size(); }
};

/// Real symmetric sector Hamiltonian. Always carries the factorized form
/// (per-species hopping matrices + diagonal ingredients); optionally also an
/// explicit CSR copy when it fits the budget.
class SparseOperator {
 public:
  SparseOperator() = default;

  SparseOperator(const HubbardSystem& system, const BuildOptions& opts = {}) {
    system.validate();
    const auto dim = system.sector.dimension();
    if (dim > opts.max_dimension)
      throw CapacityError("hamiltonian: sector " + to_string(system.sector) + " has dimension " +
                          std::to_string(dim) + " above the cap of " +
                          std::to_string(opts.max_dimension));
    basis_ = Basis(system.sector);
    U_ = system.U;
    hop_up_ = species_hopping(basis_.up(), system.t);
    hop_down_ = species_hopping(basis_.down(), system.t);
    set_potential(system.v);

    const std::size_t per_row = 1 + 2 * static_cast<std::size_t>(std::max(0, system.d() - 1));
    const std::size_t bytes = dim * per_row * (sizeof(double) + sizeof(std::uint32_t)) +
                              dim * sizeof(std::size_t);
    if (bytes <= opts.explicit_budget_bytes && dim < (std::size_t{1} << 32)) build_explicit();
  }

  std::size_t dimension() const { return basis_.size(); }
  const Basis& basis() const { return basis_; }
  const SpinSector& sector() const { return basis_.sector(); }
  bool is_explicit() const { return explicit_.has_value(); }
  double interaction() const { return U_; }

  /// Replaces the external potential; hopping structure is untouched.
  void set_potential(const SiteField& v) {
    if (v.size() != static_cast<std::size_t>(basis_.sector().d))
      throw DimensionMismatch("hamiltonian: potential length mismatch");
    v.check_finite();
    potential_ = v;
    vsum_up_ = species_potential(basis_.up(), v);
    vsum_down_ = species_potential(basis_.down(), v);
    if (explicit_) refresh_explicit_diagonal();
  }

  const SiteField& potential() const { return potential_; }

  double diagonal(std::size_t index) const {
    const std::size_t nd = basis_.down().size();
    const std::size_t iu = index / nd, id = index % nd;
    const Mask doubles = basis_.up()[iu] & basis_.down()[id];
    return U_ * std::popcount(doubles) + vsum_up_[iu] + vsum_down_[id];
  }

  /// y = H x.
  void apply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != dimension() || y.size() != dimension())
      throw DimensionMismatch("hamiltonian apply: vector length " + std::to_string(x.size()) +
                              " vs dimension " + std::to_string(dimension()));
    if (explicit_) {
      const auto& m = *explicit_;
      for (std::size_t r = 0; r < m.rows; ++r) {
        double s = 0.0;
        for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) s += m.vals[k] * x[m.cols[k]];
        y[r] = s;
      }
      return;
    }
    apply_factorized(x, y);
  }

  /// Dense copy; only sensible for small sectors.
  Eigen::MatrixXd to_dense() const {
    const auto n = static_cast<Eigen::Index>(dimension());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    std::vector<double> e(dimension(), 0.0), col(dimension());
    for (std::size_t j = 0; j < dimension(); ++j) {
      e[j] = 1.0;
      apply(e, col);
      e[j] = 0.0;
      for (std::size_t i = 0; i < dimension(); ++i) h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
    return h;
  }

 private:
  static CsrMatrix species_hopping(const SpeciesBasis& sb, double t) {
    CsrMatrix m;
    m.rows = sb.size();
    m.row_ptr.assign(1, 0);
    const int d = sb.sites();
    std::vector<std::pair<std::uint32_t, double>> row;
    for (std::size_t k = 0; k < sb.size(); ++k) {
      const Mask mask = sb[k];
      row.clear();
      for (int i = 0; i + 1 < d; ++i) {
        const bool oi = (mask >> i) & 1u, oj = (mask >> (i + 1)) & 1u;
        if (oi == oj) continue;
        const int from = oi ? i : i + 1;
        const int to = oi ? i + 1 : i;
        const Mask target = mask ^ (Mask{1} << from) ^ (Mask{1} << to);
        row.emplace_back(static_cast<std::uint32_t>(sb.rank(target)), -t * hop_sign(mask, from, to));
      }
      std::sort(row.begin(), row.end());
      for (auto [c, v] : row) {
        m.cols.push_back(c);
        m.vals.push_back(v);
      }
      m.row_ptr.push_back(m.cols.size());
    }
    return m;
  }

  static std::vector<double> species_potential(const SpeciesBasis& sb, const SiteField& v) {
    std::vector<double> out(sb.size(), 0.0);
    for (std::size_t k = 0; k < sb.size(); ++k) {
      Mask m = sb[k];
      double s = 0.0;
      while (m) {
        s += v[static_cast<std::size_t>(std::countr_zero(m))];
        m &= m - 1;
      }
      out[k] = s;
    }
    return out;
  }

  void apply_factorized(std::span<const double> x, std::span<double> y) const {
    const std::size_t nu = basis_.up().size(), nd = basis_.down().size();
    const auto& dmask = basis_.down().masks();
    for (std::size_t iu = 0; iu < nu; ++iu) {
      const Mask um = basis_.up()[iu];
      const double vu = vsum_up_[iu];
      const double* xr = x.data() + iu * nd;
      double* yr = y.data() + iu * nd;
      // diagonal + down-spin hops within the row block
      for (std::size_t id = 0; id < nd; ++id) {
        double s = (U_ * std::popcount(um & dmask[id]) + vu + vsum_down_[id]) * xr[id];
        for (std::size_t k = hop_down_.row_ptr[id]; k < hop_down_.row_ptr[id + 1]; ++k)
          s += hop_down_.vals[k] * xr[hop_down_.cols[k]];
        yr[id] = s;
      }
      // up-spin hops couple whole row blocks
      for (std::size_t k = hop_up_.row_ptr[iu]; k < hop_up_.row_ptr[iu + 1]; ++k) {
        const double h = hop_up_.vals[k];
        const double* xs = x.data() + static_cast<std::size_t>(hop_up_.cols[k]) * nd;
        for (std::size_t id = 0; id < nd; ++id) yr[id] += h * xs[id];
      }
    }
  }

  void build_explicit() {
    const std::size_t nu = basis_.up().size(), nd = basis_.down().size();
    CsrMatrix m;
    m.rows = nu * nd;
    m.row_ptr.reserve(m.rows + 1);
    diag_slot_.resize(m.rows);
    std::vector<std::pair<std::uint32_t, double>> row;
    for (std::size_t iu = 0; iu < nu; ++iu) {
      for (std::size_t id = 0; id < nd; ++id) {
        const std::size_t r = iu * nd + id;
        row.clear();
        row.emplace_back(static_cast<std::uint32_t>(r), 0.0);
        for (std::size_t k = hop_up_.row_ptr[iu]; k < hop_up_.row_ptr[iu + 1]; ++k)
          row.emplace_back(static_cast<std::uint32_t>(hop_up_.cols[k] * nd + id), hop_up_.vals[k]);
        for (std::size_t k = hop_down_.row_ptr[id]; k < hop_down_.row_ptr[id + 1]; ++k)
          row.emplace_back(static_cast<std::uint32_t>(iu * nd + hop_down_.cols[k]), hop_down_.vals[k]);
        std::sort(row.begin(), row.end(), [](auto& a, auto& b) { return a.first < b.first; });
        for (auto [c, v] : row) {
          if (c == r) diag_slot_[r] = m.cols.size();
          m.cols.push_back(c);
          m.vals.push_back(v);
        }
        m.row_ptr.push_back(m.cols.size());
      }
    }
    explicit_ = std::move(m);
    refresh_explicit_diagonal();
  }

  void refresh_explicit_diagonal() {
    for (std::size_t r = 0; r < explicit_->rows; ++r) explicit_->vals[diag_slot_[r]] = diagonal(r);
  }

  Basis basis_;
  double U_ = 0.0;
  SiteField potential_;
  CsrMatrix hop_up_, hop_down_;
  std::vector<double> vsum_up_, vsum_down_;
  std::optional<CsrMatrix> explicit_;
  std::vector<std::size_t> diag_slot_;
};

inline SparseOperator build_hubbard(const HubbardSystem& system, const BuildOptions& opts = {}) {
  return SparseOperator(system, opts);
}

inline std::vector<double> apply(const SparseOperator& op, std::span<const double> x) {
  std::vector<double> y(x.size());
  op.apply(x, y);
  return y;
}

inline double expectation_energy(std::span<const double> x, const SparseOperator& op) {
  const auto hx = latmetric::apply(op, x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * hx[i];
  return s;
}

inline double expectation_energy(const ManyBodyState& state, const SparseOperator& op) {
  if (!(state.sector() == op.sector()))
    throw IncompatibleSector("expectation_energy: state sector differs from operator sector");
  return expectation_energy(state.amplitudes(), op);
}

/// <(n_up,i + n_dn,i)^2> for every site at once.
inline SiteField site_nsq(const ManyBodyState& state) {
  const Basis basis(state.sector());
  const std::size_t nu = basis.up().size(), nd = basis.down().size();
  const int d = state.sector().d;
  SiteField out(static_cast<std::size_t>(d));
  const auto a = state.amplitudes();
  for (std::size_t iu = 0; iu < nu; ++iu) {
    const Mask um = basis.up()[iu];
    for (std::size_t id = 0; id < nd; ++id) {
      const double p = a[iu * nd + id] * a[iu * nd + id];
      if (p == 0.0) continue;
      const Mask dm = basis.down()[id];
      Mask occ = um | dm;
      while (occ) {
        const int i = std::countr_zero(occ);
        const int n = static_cast<int>((um >> i) & 1u) + static_cast<int>((dm >> i) & 1u);
        out[static_cast<std::size_t>(i)] += p * n * n;
        occ &= occ - 1;
      }
    }
  }
  return out;
}

inline double expectation_nsq(const ManyBodyState& state, int site) {
  if (site < 0 || site >= state.sector().d)
    throw InvalidArgument("expectation_nsq: site " + std::to_string(site) + " out of range");
  return site_nsq(state)[static_cast<std::size_t>(site)];
}

}  // namespace latmetric
