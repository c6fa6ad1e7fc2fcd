#include <doctest.h>

#include <cmath>
#include <random>
#include <tuple>

#include <boost/math/distributions/inverse_gaussian.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fpt/wiener_analytic.hpp"

using namespace fpt;
using boost::math::quadrature::gauss_kronrod;

namespace {

const Boundary kB{1.0, 1.0, BoundaryKind::Absorbing};

double ig_pdf(double t, double d, double mu, double sigma) {
  if (mu == 0) return d / (sigma * std::sqrt(2 * M_PI * t * t * t)) * std::exp(-d * d / (2 * sigma * sigma * t));
  boost::math::inverse_gaussian_distribution<double> ig(d / mu, d * d / (sigma * sigma));
  return boost::math::pdf(ig, t);
}

double ig_survival(double t, double d, double mu, double sigma) {
  boost::math::inverse_gaussian_distribution<double> ig(d / mu, d * d / (sigma * sigma));
  return boost::math::cdf(boost::math::complement(ig, t));
}

// Killed one-dimensional density by the method of images.
double images(double x, double t, double x0, double B, double mu, double sigma) {
  const double s = sigma * std::sqrt(t);
  auto phi = [&](double m) { return std::exp(-0.5 * (x - m) * (x - m) / (s * s)) / (s * std::sqrt(2 * M_PI)); };
  return phi(x0 + mu * t) - std::exp(2 * mu * (B - x0) / (sigma * sigma)) * phi(2 * B - x0 + mu * t);
}

}  // namespace

TEST_SUITE("wiener_analytic") {

TEST_CASE("polar transform maps the faces to the wedge edges") {
  const auto p = WienerParams::make(0, 0, 1.3, 0.7, -0.35, 0.1, -0.4);
  const auto f2 = polar_transform({0.2, kB.B2}, p, kB);
  CHECK(f2.phi == doctest::Approx(0.0));
  CHECK(f2.on_face2);
  const auto f1 = polar_transform({kB.B1, -0.5}, p, kB);
  CHECK(f1.phi == doctest::Approx(p.alpha));
  CHECK(f1.on_face1);
  const auto in = polar_transform({0.1, -0.4}, p, kB);
  CHECK(in.phi > 0);
  CHECK(in.phi < p.alpha);
  CHECK(in.rbar > 0);
}

TEST_CASE("h series exchange symmetry is exact") {
  const auto p = WienerParams::make(0.3, -0.2, 1, 1.4, 0.6, 0, 0);
  for (double t : {0.05, 0.7, 4.0}) {
    const double a = h_series(0.8, 1.9, 0.4, 1.7, t, p);
    const double b = h_series(1.9, 0.8, 1.7, 0.4, t, p);
    CHECK(a == b);
  }
}

TEST_CASE("absorbed density vanishes on both faces and stays below the free density") {
  const auto p = WienerParams::make(0.5, 1.2, 1, 1.5, 0.5, 0, 0);
  for (double t : {0.1, 1.0, 3.0}) {
    CHECK(std::abs(f_abs({0.3, kB.B2}, t, p, kB)) <= 1e-300);
    CHECK(std::abs(f_abs({kB.B1, -0.8}, t, p, kB)) <= 1e-300);
  }
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> ux(-3.0, 1.0), ut(0.05, 4.0);
  for (int i = 0; i < 200; ++i) {
    const Vec2 x{ux(gen), ux(gen)};
    const double t = ut(gen);
    const double a = f_abs(x, t, p, kB), f = f_free(x, t, p);
    CHECK(a >= 0);
    CHECK(a <= f * (1 + 1e-12));
  }
}

TEST_CASE("independent components factor into killed one-dimensional densities") {
  const auto p = WienerParams::make(0.4, -0.3, 1.2, 0.8, 0.0, -0.2, 0.1);
  for (double t : {0.2, 1.5}) {
    for (Vec2 x : {Vec2{0.5, 0.5}, Vec2{-1.0, 0.9}, Vec2{0.95, -2.0}}) {
      const double want = images(x[0], t, p.x01, kB.B1, p.mu1, p.sigma1) * images(x[1], t, p.x02, kB.B2, p.mu2, p.sigma2);
      CHECK(f_abs(x, t, p, kB) == doctest::Approx(want).epsilon(1e-10));
      CHECK(f_univ_abs(Component::One, x[0], t, p, kB) ==
            doctest::Approx(images(x[0], t, p.x01, kB.B1, p.mu1, p.sigma1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("absorbed density solves the forward equation") {
  const auto p = WienerParams::make(0.7, -0.4, 1.1, 0.9, 0.45, 0, 0);
  const double e = 2e-3, et = 1e-4;
  for (Vec2 x : {Vec2{0.2, -0.3}, Vec2{-0.8, 0.6}, Vec2{0.7, 0.1}}) {
    const double t = 0.8;
    auto f = [&](double a, double b, double s) { return f_abs({a, b}, s, p, kB); };
    const double ft = (f(x[0], x[1], t + et) - f(x[0], x[1], t - et)) / (2 * et);
    const double fx = (f(x[0] + e, x[1], t) - f(x[0] - e, x[1], t)) / (2 * e);
    const double fy = (f(x[0], x[1] + e, t) - f(x[0], x[1] - e, t)) / (2 * e);
    const double c = f(x[0], x[1], t);
    const double fxx = (f(x[0] + e, x[1], t) - 2 * c + f(x[0] - e, x[1], t)) / (e * e);
    const double fyy = (f(x[0], x[1] + e, t) - 2 * c + f(x[0], x[1] - e, t)) / (e * e);
    const double fxy = (f(x[0] + e, x[1] + e, t) - f(x[0] + e, x[1] - e, t) - f(x[0] - e, x[1] + e, t) +
                        f(x[0] - e, x[1] - e, t)) / (4 * e * e);
    const double rhs = 0.5 * p.sigma1 * p.sigma1 * fxx + p.rho * p.sigma1 * p.sigma2 * fxy +
                       0.5 * p.sigma2 * p.sigma2 * fyy - p.mu1 * fx - p.mu2 * fy;
    CHECK(std::abs(ft - rhs) <= 1e-4 * (std::abs(ft) + std::abs(rhs) + c));
  }
}

TEST_CASE("univariate passage density is the inverse gaussian") {
  const auto p = WienerParams::make(1.0, 1.5, 1.0, 2.0, 0.5, 0, 0);
  const Boundary b{10, 10, BoundaryKind::Absorbing};
  for (double t : {0.5, 3.0, 10.0, 25.0}) {
    CHECK(f_fpt_univ(Component::One, t, p, b) == doctest::Approx(ig_pdf(t, 10, 1.0, 1.0)).epsilon(1e-12));
    CHECK(f_fpt_univ(Component::Two, t, p, b) == doctest::Approx(ig_pdf(t, 10, 1.5, 2.0)).epsilon(1e-12));
    CHECK(f_fpt_univ(Component::Two, t + 2, p, b, StartOverride{7.0, 2.0}) ==
          doctest::Approx(ig_pdf(t, 3, 1.5, 2.0)).epsilon(1e-12));
  }
  CHECK(f_fpt_univ(Component::One, 1.0, p, b, StartOverride{3.0, 2.0}) == 0.0);
}

TEST_CASE("univariate passage density values, mass and mode") {
  const auto p0 = WienerParams::make(0, 0, 1, 1, 0.5, 0, 0);
  CHECK(f_fpt_univ(Component::One, 1.0, p0, kB) == doctest::Approx(std::exp(-0.5) / std::sqrt(2 * M_PI)).epsilon(1e-14));
  CHECK_THROWS(f_fpt_univ(Component::One, 0.0, p0, kB));

  // Unit mass for a nonnegative drift; the tail beyond 400 is below 1e-7 here.
  const auto p = WienerParams::make(0.8, 0.0, 1.2, 1.0, 0.5, 0, 0);
  const Boundary b{2, 1, BoundaryKind::Absorbing};
  const double m = gauss_kronrod<double, 61>::integrate([&](double t) { return f_fpt_univ(Component::One, t, p, b); },
                                                        0.0, 400.0, 20, 1e-14);
  CHECK(m == doctest::Approx(1.0).epsilon(1e-6));

  // Golden-section maximization against the closed-form inverse gaussian mode.
  for (auto [mu, d, sigma] : {std::tuple{0.0, 1.0, 1.0}, std::tuple{1.0, 10.0, 1.0}, std::tuple{0.8, 2.0, 1.2}}) {
    const auto q = WienerParams::make(mu, 0, sigma, 1, 0.5, 0, 0);
    const Boundary bd{d, 1, BoundaryKind::Absorbing};
    auto f = [&](double t) { return f_fpt_univ(Component::One, t, q, bd); };
    double lo = 1e-3, hi = 50.0;
    const double g = (std::sqrt(5.0) - 1) / 2;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo), f1 = f(x1), f2 = f(x2);
    while (hi - lo > 1e-12) {
      if (f1 < f2) {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + g * (hi - lo);
        f2 = f(x2);
      } else {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - g * (hi - lo);
        f1 = f(x1);
      }
    }
    const double lambda = d * d / (sigma * sigma);
    double mode = lambda / 3;
    if (mu > 0) {
      const double mean = d / mu, k = 1.5 * mean / lambda;
      mode = mean * (std::sqrt(1 + k * k) - k);
    }
    CAPTURE(mode);
    CHECK(std::abs(0.5 * (lo + hi) - mode) <= 1e-8 * std::max(1.0, mode));
  }
}

TEST_CASE("crossing-instant density factors through the conditional density") {
  for (double rho : {-0.6, 0.0, 0.5}) {
    const auto p = WienerParams::make(0.4, 0.9, 1.0, 1.3, rho, 0, -0.2);
    for (Component i : {Component::One, Component::Two}) {
      for (double t : {0.3, 1.2, 4.0}) {
        for (double xi : {0.9, 0.2, -1.5}) {
          const double joint = f_joint(i, xi, t, p, kB);
          const double prod = f_cond_xt(i, xi, t, p, kB) * f_fpt_univ(other(i), t, p, kB);
          CHECK(joint == doctest::Approx(prod).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("conditional densities integrate to the conditional survival") {
  // With independent components the conditioning is void: the integral is P(T_i > t).
  const auto p = WienerParams::make(0.6, 0.8, 1.0, 1.2, 0.0, 0, 0);
  for (double t : {0.5, 2.0}) {
    for (Component i : {Component::One, Component::Two}) {
      const Component j = other(i);
      const double surv = ig_survival(t, kB.B(i) - p.x0(i), p.mu(i), p.sigma(i));
      const double xx = gauss_kronrod<double, 61>::integrate(
          [&](double xi) { return f_cond_xx(i, xi, -0.3, t, p, kB); }, -30.0, kB.B(i), 15, 1e-13);
      CHECK(xx == doctest::Approx(surv).epsilon(1e-8));
      const double xt = gauss_kronrod<double, 61>::integrate(
          [&](double xi) { return f_cond_xt(i, xi, t, p, kB); }, -30.0, kB.B(i), 15, 1e-13);
      CHECK(xt == doctest::Approx(surv).epsilon(1e-8));
      (void)j;
    }
  }
  // Correlated: the conditional density times the killed marginal restores the absorbed density,
  // and its integral is a probability strictly inside (0, 1).
  const auto q = WienerParams::make(0.6, 0.8, 1.0, 1.2, 0.55, 0, 0);
  const double t = 1.1;
  for (double x2 : {0.5, -1.0}) {
    for (double x1 : {0.7, -0.4}) {
      CHECK(f_cond_xx(Component::One, x1, x2, t, q, kB) * f_univ_abs(Component::Two, x2, t, q, kB) ==
            doctest::Approx(f_abs({x1, x2}, t, q, kB)).epsilon(1e-10));
    }
    const double m = gauss_kronrod<double, 61>::integrate(
        [&](double xi) { return f_cond_xx(Component::One, xi, x2, t, q, kB); }, -30.0, kB.B1, 15, 1e-13);
    CHECK(m > 0);
    CHECK(m < 1);
  }
}

TEST_CASE("exchangeable levels split the first passage evenly") {
  const auto p = WienerParams::make(1.0, 1.0, 1.0, 1.0, 0.4, 0, 0);
  auto mass = [&](Component i) {
    return gauss_kronrod<double, 31>::integrate(
        [&](double t) {
          return gauss_kronrod<double, 31>::integrate([&](double x) { return f_joint(i, x, t, p, kB); },
                                                      -25.0, kB.B(i), 12, 1e-12);
        },
        0.0, 25.0, 12, 1e-10);
  };
  const double m1 = mass(Component::One), m2 = mass(Component::Two);
  CHECK(m1 == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(m2 == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("driftless series and drift quadrature agree") {
  for (double rho : {0.5, -0.4}) {
    const auto p = WienerParams::make(0, 0, 1, 1, rho, 0, 0);
    JointFptDrift quad(p, kB, 3.0, QuadSpec{10, 2000});
    for (auto tt : {std::pair{0.7, 1.3}, std::pair{2.0, 1.1}, std::pair{0.5, 0.65}, std::pair{2.9, 0.4}}) {
      CAPTURE(rho);
      CAPTURE(tt.first);
      CAPTURE(tt.second);
      const double s = joint_fpt_driftless(tt.first, tt.second, p, kB);
      CHECK(quad(tt.first, tt.second) == doctest::Approx(s).epsilon(1e-4));
    }
  }
}

TEST_CASE("independent components give a product of inverse gaussians") {
  const auto d = WienerParams::make(0, 0, 1, 1.5, 0, 0, 0);
  const auto m = WienerParams::make(0.8, 1.4, 1, 1.5, 0, 0, 0);
  JointFptDrift quad(m, kB, 3.0, QuadSpec{10, 2000});
  for (auto tt : {std::pair{0.4, 1.3}, std::pair{2.0, 0.6}}) {
    const double prod0 = ig_pdf(tt.first, 1, 0, 1) * ig_pdf(tt.second, 1, 0, 1.5);
    CHECK(joint_fpt_driftless(tt.first, tt.second, d, kB) == doctest::Approx(prod0).epsilon(1e-10));
    const double prod = ig_pdf(tt.first, 1, 0.8, 1) * ig_pdf(tt.second, 1, 1.4, 1.5);
    CHECK(quad(tt.first, tt.second) == doctest::Approx(prod).epsilon(1e-4));
  }
  const auto diag = joint_fpt_diag(0.9, d, kB);
  CHECK_FALSE(diag.infinite);
  CHECK(diag.value == doctest::Approx(ig_pdf(0.9, 1, 0, 1) * ig_pdf(0.9, 1, 0, 1.5)).epsilon(1e-12));
}

TEST_CASE("diagonal handling") {
  const auto pos = WienerParams::make(0, 0, 1, 1, 0.5, 0, 0);
  const auto neg = WienerParams::make(0, 0, 1, 1, -0.5, 0, 0);
  CHECK(joint_fpt_diag(1.0, pos, kB).infinite);
  CHECK(joint_fpt_diag(1.0, neg, kB).value == 0.0);
  WienerJointReference rp(pos, kB, 2.0);
  CHECK(std::isinf(rp(1.0, 1.0)));
  const auto drift = WienerParams::make(1, 1.5, 1, 1, 0.5, 0, 0);
  WienerJointReference rd(drift, kB, 2.0);
  CHECK(std::isnan(rd(1.0, 1.0)));
  CHECK(rd(1.0, 1.5) > 0);
  JointFptDrift q(drift, kB, 2.0);
  CHECK_THROWS(q(1.0, 1.0));
}

TEST_CASE("series evaluation survives extreme arguments") {
  const auto p = WienerParams::make(0, 0, 1, 1, 0.9, 0, 0);
  const Boundary far{40, 40, BoundaryKind::Absorbing};
  const double v = f_joint(Component::One, 39.0, 0.5, p, far);
  CHECK(std::isfinite(v));
  CHECK(v >= 0);
  const double w = joint_fpt_driftless(1e-3, 2e-3, p, kB);
  CHECK(std::isfinite(w));
  CHECK(joint_fpt_driftless(400.0, 401.0, p, kB) > 0);
}

}
