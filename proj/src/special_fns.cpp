#include "fpt/special_fns.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace fpt {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_bessel_args(double nu, double x) {
  if (!(nu >= 0.0) || !(x >= 0.0) || !std::isfinite(nu) || !std::isfinite(x))
    throw std::invalid_argument("bessel_i: nu and x must be finite and non-negative");
}

// Coefficients of the Debye polynomials u_k(p), generated once by
//   u_{k+1}(p) = p^2 (1 - p^2) u_k'(p) / 2 + (1/8) int_0^p (1 - 5 t^2) u_k(t) dt.
// u_k has terms p^k ... p^{3k}; we store v_k(p) = u_k(p) / p^k.
constexpr int kDebyeTerms = 13;

struct DebyeTable {
  std::vector<std::vector<double>> v;  // v[k][j] multiplies p^j

  DebyeTable() {
    std::vector<std::vector<double>> u(kDebyeTerms);
    u[0] = {1.0};
    for (int k = 0; k + 1 < kDebyeTerms; ++k) {
      const auto& a = u[k];
      std::vector<double> next(a.size() + 3, 0.0);
      for (std::size_t j = 1; j < a.size(); ++j) {
        const double d = a[j] * static_cast<double>(j);  // coefficient of p^{j-1} in u'
        next[j + 1] += 0.5 * d;
        next[j + 3] -= 0.5 * d;
      }
      for (std::size_t j = 0; j < a.size(); ++j) {
        next[j + 1] += a[j] / (8.0 * static_cast<double>(j + 1));
        next[j + 3] -= 5.0 * a[j] / (8.0 * static_cast<double>(j + 3));
      }
      u[k + 1] = std::move(next);
    }
    v.resize(kDebyeTerms);
    for (int k = 0; k < kDebyeTerms; ++k) {
      v[k].assign(u[k].begin() + k, u[k].end());
      while (v[k].size() > 1 && v[k].back() == 0.0) v[k].pop_back();
    }
  }
};

const DebyeTable& debye() {
  static const DebyeTable t;
  return t;
}

}  // namespace

void SeriesControl::validate() const {
  if (!(rel_tol > 0.0)) throw std::invalid_argument("series control: rel_tol must be positive");
  if (max_terms < 10) throw std::invalid_argument("series control: max_terms must be at least 10");
}

namespace detail {

double log_bessel_i_scaled_series(double nu, double x, const SeriesControl& ctl) {
  // term_k = (x/2)^{nu+2k} / (k! Gamma(nu+k+1)); summed relative to term_0.
  const double log_t0 = nu * std::log(0.5 * x) - std::lgamma(nu + 1.0) - x;
  const double q = 0.25 * x * x;
  double term = 1.0, sum = 1.0;
  for (int k = 0; k < ctl.max_terms; ++k) {
    term *= q / ((k + 1.0) * (nu + k + 1.0));
    sum += term;
    // Terms decrease once (k+1)(nu+k+1) > q; from there the tail is bounded geometrically.
    if (term < ctl.rel_tol * 1e-4 * sum && (k + 2.0) * (nu + k + 2.0) > q) return log_t0 + std::log(sum);
  }
  throw NumericalError("bessel_i: power series did not converge within max_terms");
}

double log_bessel_i_scaled_uniform(double nu, double x) {
  // Debye expansion in terms of s = sqrt(nu^2 + x^2) and p = nu / s:
  //   e^{-x} I_nu(x) ~ exp(s - x + nu log(x / (nu + s))) / sqrt(2 pi s) * sum_k u_k(p) / nu^k,
  // with u_k(p) / nu^k = v_k(p) / s^k, finite as nu -> 0.
  const double s = std::hypot(nu, x);
  const double p = nu / s;
  const auto& tab = debye();
  // Every term is summed: a term can be accidentally small near a root of v_k, so neither a
  // small nor a growing term is a safe stopping signal. For s >= 30 the last term is below
  // double precision.
  double sum = 0.0, sk = 1.0;
  for (int k = 0; k < kDebyeTerms; ++k) {
    const auto& c = tab.v[k];
    double poly = 0.0;
    for (std::size_t j = c.size(); j-- > 0;) poly = poly * p + c[j];
    sum += poly * sk;
    sk /= s;
  }
  const double expo = (s - x) + (nu > 0.0 ? nu * std::log(x / (nu + s)) : 0.0);
  return expo - 0.5 * std::log(2.0 * kPi * s) + std::log(sum);
}

}  // namespace detail

double log_bessel_i_scaled(double nu, double x, const SeriesControl& ctl) {
  check_bessel_args(nu, x);
  if (x == 0.0) return nu == 0.0 ? 0.0 : -kInf;
  if (x <= detail::kBesselSwitch) return detail::log_bessel_i_scaled_series(nu, x, ctl);
  return detail::log_bessel_i_scaled_uniform(nu, x);
}

double bessel_i_scaled(double nu, double x, const SeriesControl& ctl) {
  return std::exp(log_bessel_i_scaled(nu, x, ctl));
}

double bessel_i(double nu, double x, const SeriesControl& ctl) {
  return std::exp(log_bessel_i_scaled(nu, x, ctl) + x);
}

double normal_pdf(double x, double mean, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("normal_pdf: sd must be positive");
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * kPi));
}

double log_normal_pdf(double x, double mean, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("log_normal_pdf: sd must be positive");
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * kPi);
}

double normal_cdf(double x, double mean, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("normal_cdf: sd must be positive");
  return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

double normal_sf(double x, double mean, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("normal_sf: sd must be positive");
  return 0.5 * std::erfc((x - mean) / (sd * std::numbers::sqrt2));
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  std::vector<double> x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0, p1 = z;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

double bvn_upper(double dh, double dk, double r) {
  // Genz's algorithm for the bivariate normal upper orthant (Drezner-Wesolowsky style
  // single-integral representation for |r| < 0.925, series correction above).
  if (!(std::abs(r) < 1.0)) throw NumericalError("bvn: |correlation| must be below 1");
  static const auto gl = gauss_legendre(20);
  const auto& X = gl.first;
  const auto& W = gl.second;
  const int lg = 10;  // lower half of the symmetric rule
  const double twopi = 2.0 * kPi;
  double h = dh, k = dk, hk = h * k, bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = std::asin(r);
    for (int i = 0; i < lg; ++i) {
      double sn = std::sin(asr * (X[i] + 1.0) / 2.0);
      bvn += W[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (-X[i] + 1.0) / 2.0);
      bvn += W[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * twopi) + normal_sf(h) * normal_sf(k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  const double as = (1.0 - r) * (1.0 + r);
  double a = std::sqrt(as);
  const double bs = (h - k) * (h - k);
  const double c = (4.0 - hk) / 8.0;
  const double d = (12.0 - hk) / 16.0;
  bvn = a * std::exp(-(bs / as + hk) / 2.0) *
        (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
  if (hk > -160.0) {
    const double b = std::sqrt(bs);
    bvn -= std::exp(-hk / 2.0) * std::sqrt(twopi) * normal_sf(b / a) * b *
           (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
  }
  a /= 2.0;
  for (int i = 0; i < lg; ++i) {
    double xs = (a * (X[i] + 1.0)) * (a * (X[i] + 1.0));
    double rs = std::sqrt(1.0 - xs);
    bvn += a * W[i] *
           (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs -
            std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
    xs = as * (-X[i] + 1.0) * (-X[i] + 1.0) / 4.0;
    rs = std::sqrt(1.0 - xs);
    bvn += a * W[i] * std::exp(-(bs / xs + hk) / 2.0) *
           (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
  }
  bvn = -bvn / twopi;
  if (r > 0.0) return bvn + normal_sf(std::max(h, k));
  bvn = -bvn;
  if (k > h) {
    if (h < 0.0)
      bvn += normal_cdf(k) - normal_cdf(h);
    else
      bvn += normal_sf(h) - normal_sf(k);
  }
  return bvn;
}

namespace {

struct Standardized {
  double s1, s2, r;
};

Standardized standardize(const GaussianTransition& tr) {
  const Mat2& c = tr.cov;
  if (!(c.a11 > 0.0) || !(c.a22 > 0.0) || !(c.det() > 0.0))
    throw NumericalError("bivariate normal: covariance is singular");
  const double s1 = std::sqrt(c.a11), s2 = std::sqrt(c.a22);
  return {s1, s2, c.a12 / (s1 * s2)};
}

}  // namespace

double bvn_survival(Vec2 x, const GaussianTransition& tr) {
  const auto s = standardize(tr);
  const double v = bvn_upper((x[0] - tr.mean[0]) / s.s1, (x[1] - tr.mean[1]) / s.s2, s.r);
  return std::clamp(v, 0.0, 1.0);
}

double bvn_cdf(Vec2 x, const GaussianTransition& tr) {
  const auto s = standardize(tr);
  const double v = bvn_upper(-(x[0] - tr.mean[0]) / s.s1, -(x[1] - tr.mean[1]) / s.s2, s.r);
  return std::clamp(v, 0.0, 1.0);
}

double bvn_survival_dx(int axis, Vec2 x, const GaussianTransition& tr) {
  if (axis != 1 && axis != 2) throw std::invalid_argument("bvn_survival_dx: axis must be 1 or 2");
  standardize(tr);
  const int a = axis - 1, o = 1 - a;
  const double vaa = tr.cov(a, a), voo = tr.cov(o, o), vao = tr.cov(a, o);
  const double da = x[a] - tr.mean[a];
  const double cond_mean = tr.mean[o] + vao / vaa * da;
  const double cond_sd = std::sqrt(voo - vao * vao / vaa);
  return -normal_pdf(x[a], tr.mean[a], std::sqrt(vaa)) * normal_sf(x[o], cond_mean, cond_sd);
}

double log_bvn_pdf(Vec2 x, const GaussianTransition& tr) {
  const Mat2& c = tr.cov;
  const double det = c.det();
  if (!(det > 0.0) || !(c.a11 > 0.0)) throw NumericalError("bivariate normal: covariance is singular");
  const double d1 = x[0] - tr.mean[0], d2 = x[1] - tr.mean[1];
  const double quad = (c.a22 * d1 * d1 - (c.a12 + c.a21) * d1 * d2 + c.a11 * d2 * d2) / det;
  return -0.5 * quad - std::log(2.0 * kPi) - 0.5 * std::log(det);
}

double bvn_pdf(Vec2 x, const GaussianTransition& tr) { return std::exp(log_bvn_pdf(x, tr)); }

}  // namespace fpt
