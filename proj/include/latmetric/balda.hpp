#pragma once

// Bethe-ansatz local density approximation for the 1D Hubbard chain.
//
// Homogeneous energy per site (hopping t, filling n):
//   e(n, U) = -(2 t beta / pi) sin(pi n / beta)        n <= 1
//   e(n, U) = e(2 - n, U) + U (n - 1)                   n > 1
// with beta(U/t) in [1, 2] fixed by
//   -(2 beta / pi) sin(pi / beta) = -4 Int_0^inf J0(x) J1(x) / (x (1 + exp(U x / (2t)))) dx.
// Exchange-correlation part against the Hartree term (U/4) n^2:
//   e_xc(n, U) = e(n, U) - e(n, 0) - (U / 4) n^2.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <array>
#include <complex>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "latmetric/errors.hpp"

namespace latmetric {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

namespace detail {

/// Large-x form of J0(x) J1(x) / x from the Hankel expansions, in y = 1/x:
///   J0 J1 / x = sum_k n_k y^(k+2) + Re[e^(2ix) sum_k o_k y^(k+2)]
struct BesselProductTail {
  static constexpr int terms = 12;
  std::array<double, terms> n{};
  std::array<std::complex<double>, terms> o{};

  BesselProductTail() {
    using C = std::complex<double>;
    // J_nu = sqrt(2/(pi x)) Re[A_nu e^(i chi_nu)], A_nu = sum_k i^k a_k(nu) y^k
    auto hankel = [](double nu) {
      std::array<C, terms> a{};
      double ak = 1.0;
      C ik(1.0, 0.0);
      for (int k = 0; k < terms; ++k) {
        if (k > 0) {
          ak *= (4.0 * nu * nu - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (8.0 * k);
          ik *= C(0.0, 1.0);
        }
        a[static_cast<std::size_t>(k)] = ik * ak;
      }
      return a;
    };
    const auto a0 = hankel(0.0), a1 = hankel(1.0);
    // chi_0 + chi_1 = 2x - pi, chi_0 - chi_1 = pi / 2
    for (std::size_t i = 0; i < terms; ++i)
      for (std::size_t j = 0; i + j < terms; ++j) {
        n[i + j] += (C(0.0, 1.0) * a0[i] * std::conj(a1[j])).real() / std::numbers::pi;
        o[i + j] += -a0[i] * a1[j] / std::numbers::pi;
      }
  }
};

/// d^j/dx^j of the Fermi factor 1 / (1 + exp(u x)), j <= 3.
inline std::array<double, 4> fermi_derivatives(double u, double x) {
  const double f = 1.0 / (1.0 + std::exp(u * x));
  const double g = f * (1.0 - f);
  return {f, -u * g, u * u * g * (1.0 - 2.0 * f), -u * u * u * g * (1.0 - 6.0 * f + 6.0 * f * f)};
}

/// Int_X^inf J0 J1 / (x (1 + exp(u x))) dx from the asymptotic form. The
/// oscillating part is integrated by parts four times,
///   Int_X^inf c e^(2ix) = -e^(2iX) sum_j (-1)^j c^(j)(X) / (2i)^(j+1).
inline QuadratureResult bessel_product_tail(double u, double X) {
  static const BesselProductTail series;
  using C = std::complex<double>;
  constexpr int K = BesselProductTail::terms;

  // smooth part: closed form when the Fermi factor is the constant 1/2
  double smooth = 0.0;
  if (u == 0.0) {
    for (int k = 0; k < K; ++k)
      smooth += 0.5 * series.n[static_cast<std::size_t>(k)] * std::pow(X, -(k + 1)) / (k + 1);
  } else {
    auto h = [&](double x) {
      double s = 0.0;
      for (int k = 0; k < K; ++k) s += series.n[static_cast<std::size_t>(k)] * std::pow(x, -(k + 2));
      return s / (1.0 + std::exp(u * x));
    };
    boost::math::quadrature::exp_sinh<double> es;
    smooth = es.integrate([&](double s) { return h(X + s); });
  }

  // S^(j)(X) for S = sum_k o_k x^-(k+2)
  std::array<C, 5> S{};
  for (int k = 0; k < K; ++k) {
    const int m = k + 2;
    double fall = 1.0;
    for (int j = 0; j < 5; ++j) {
      S[static_cast<std::size_t>(j)] += series.o[static_cast<std::size_t>(k)] * fall * std::pow(X, -(m + j));
      fall *= -(m + j);
    }
  }
  const auto f = fermi_derivatives(u, X);
  auto c_deriv = [&](int j) {
    static constexpr int binom[5][5] = {{1}, {1, 1}, {1, 2, 1}, {1, 3, 3, 1}, {1, 4, 6, 4, 1}};
    C out{};
    for (int l = 0; l <= j && l <= 3; ++l)
      out += static_cast<double>(binom[j][l]) * f[static_cast<std::size_t>(l)] * S[static_cast<std::size_t>(j - l)];
    return out;
  };
  C osc{};
  C step = C(0.0, 2.0);
  C last{};
  for (int j = 0; j <= 4; ++j) {
    last = (j % 2 ? -1.0 : 1.0) * c_deriv(j) / step;
    if (j < 4) osc += last;
    step *= C(0.0, 2.0);
  }
  osc *= -std::exp(C(0.0, 2.0 * X));
  // truncation: first omitted integration-by-parts term and last Hankel term
  const double hankel_err = std::abs(series.o[K - 1]) * std::pow(X, -(K + 1)) +
                            std::abs(series.n[K - 1]) * std::pow(X, -(K + 1));
  return {smooth + osc.real(), std::abs(last) + hankel_err};
}

}  // namespace detail

/// I(U) = -4 Int_0^inf J0(x) J1(x) / (x (1 + exp(U x / 2))) dx, absolute error < 1e-10.
///
/// Gauss-Kronrod between consecutive zeros of J0 J1 up to x_max, then the
/// tail beyond x_max from the Hankel asymptotic series unless the Fermi factor
/// already makes it negligible.
inline QuadratureResult bethe_integral_with_error(double U, double x_max = 200.0, double tol = 1e-10) {
  if (!(U >= 0.0) || !std::isfinite(U)) throw InvalidArgument("bethe_integral: U must be finite and >= 0");
  if (!(x_max >= 50.0)) throw InvalidArgument("bethe_integral: x_max must be >= 50");
  auto integrand = [U](double x) {
    const double fermi = 1.0 / (1.0 + std::exp(U * x / 2.0));
    if (x < 1e-8) return 0.5 * fermi;  // J0 J1 / x -> 1/2
    return std::cyl_bessel_j(0.0, x) * std::cyl_bessel_j(1.0, x) / x * fermi;
  };
  // |J0 J1 / x| <= 1/x^2 for x >= 1, so the tail is below this bound.
  auto tail_bound = [U](double x) { return 1.0 / (x * (1.0 + std::exp(U * x / 2.0))); };

  std::vector<double> nodes{0.0};
  if (U > 0.0)
    for (double s : {1.0 / U, 4.0 / U, 16.0 / U})
      if (s < 2.0) nodes.push_back(s);
  for (int k = 1;; ++k) {
    for (double z : {boost::math::cyl_bessel_j_zero(0.0, k), boost::math::cyl_bessel_j_zero(1.0, k)})
      if (z > nodes.back()) nodes.push_back(std::min(z, x_max));
    if (nodes.back() >= x_max) break;
  }

  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  double sum = 0.0, err = 0.0, reached = 0.0;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    double e = 0.0;
    sum += GK::integrate(integrand, nodes[i], nodes[i + 1], 6, 1e-13, &e);
    err += e;
    reached = nodes[i + 1];
    if (reached >= 1.0 && tail_bound(reached) < 1e-15) break;
  }
  if (tail_bound(reached) >= 1e-15) {
    const auto tail = detail::bessel_product_tail(U / 2.0, reached);
    sum += tail.value;
    err += tail.error;
  }
  const QuadratureResult out{-4.0 * sum, 4.0 * err};
  if (!(out.error < tol))
    throw NumericError("bethe_integral: quadrature error estimate " + std::to_string(out.error) +
                           " above tolerance at U=" + std::to_string(U),
                       out.value);
  return out;
}

inline double bethe_integral(double U) { return bethe_integral_with_error(U).value; }

namespace detail {

inline double beta_lhs(double beta) {
  return -(2.0 * beta / std::numbers::pi) * std::sin(std::numbers::pi / beta);
}

inline double solve_beta(double U) {
  const double I = bethe_integral(U);
  // lhs decreases monotonically from 0 (beta=1) to -4/pi (beta=2).
  double lo = 1.0, hi = 2.0;
  if (beta_lhs(hi) - I >= 0.0) return 2.0;
  if (beta_lhs(lo) - I <= 0.0) return 1.0;
  for (int it = 0; it < 200 && hi - lo > 4 * std::numeric_limits<double>::epsilon(); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (beta_lhs(mid) - I > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double b = 0.5 * (lo + hi);
  const double residual = std::abs(beta_lhs(b) - I);
  if (!(residual < 1e-10))
    throw NumericError("beta: bracketing failed at U=" + std::to_string(U), residual);
  return b;
}

}  // namespace detail

/// beta(U) for t = 1 (pass U/t otherwise). Cached; repeated calls are bit-identical.
inline double beta(double U) {
  if (!(U >= 0.0) || !std::isfinite(U)) throw InvalidArgument("beta: U must be finite and >= 0");
  if (U == 0.0) return 2.0;
  static std::mutex mu;
  static std::map<double, double> cache;
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(U); it != cache.end()) return it->second;
  }
  const double b = detail::solve_beta(U);
  std::lock_guard lock(mu);
  return cache.emplace(U, b).first->second;
}

/// Parameters of the functional for one (U, t); immutable after construction.
class BaldaTable {
 public:
  explicit BaldaTable(double U, double t = 1.0) : U_(U), t_(t) {
    if (!(t > 0.0)) throw InvalidArgument("balda: t must be > 0");
    beta_ = beta(U / t);
    residual_ = U == 0.0 ? 0.0 : std::abs(detail::beta_lhs(beta_) - bethe_integral(U / t));
  }

  double U() const { return U_; }
  double t() const { return t_; }
  double beta_value() const { return beta_; }
  double beta_residual() const { return residual_; }
  static constexpr double x_max = 200.0;
  static constexpr double tolerance = 1e-10;

  /// Homogeneous energy per site e(n, U).
  double energy(double n) const {
    check(n, "energy_per_site");
    if (n <= 1.0) return lower(n, beta_);
    return lower(2.0 - n, beta_) + U_ * (n - 1.0);
  }

  double exchange_correlation(double n) const {
    check(n, "exc");
    const double e0 = n <= 1.0 ? lower(n, 2.0) : lower(2.0 - n, 2.0);
    return energy(n) - e0 - 0.25 * U_ * n * n;
  }

  /// d e_xc / dn; at n = 1 the mean of the one-sided limits.
  double vxc(double n) const {
    check(n, "vxc");
    if (n == 1.0) return 0.5 * (vxc_left(1.0) + vxc_right(1.0));
    return n < 1.0 ? vxc_left(n) : vxc_right(n);
  }

  double vxc_left(double n) const {
    // d/dn [-(2t b/pi) sin(pi n/b)] = -2t cos(pi n/b); the U=0 part has b = 2.
    return -2.0 * t_ * std::cos(std::numbers::pi * n / beta_) +
           2.0 * t_ * std::cos(std::numbers::pi * n / 2.0) - 0.5 * U_ * n;
  }

  double vxc_right(double n) const {
    return 2.0 * t_ * std::cos(std::numbers::pi * (2.0 - n) / beta_) + U_ +
           2.0 * t_ * std::cos(std::numbers::pi * n / 2.0) - 0.5 * U_ * n;
  }

 private:
  double lower(double n, double b) const {
    return -(2.0 * t_ * b / std::numbers::pi) * std::sin(std::numbers::pi * n / b);
  }

  static void check(double n, const char* what) {
    if (!(n >= 0.0 && n <= 2.0))
      throw InvalidArgument(std::string(what) + ": density " + std::to_string(n) + " outside [0, 2]");
  }

  double U_;
  double t_;
  double beta_ = 2.0;
  double residual_ = 0.0;
};

inline double energy_per_site(double n, double U, double t = 1.0) { return BaldaTable(U, t).energy(n); }
inline double exc(double n, double U, double t = 1.0) { return BaldaTable(U, t).exchange_correlation(n); }
inline double vxc(double n, double U, double t = 1.0) { return BaldaTable(U, t).vxc(n); }

}  // namespace latmetric
