#pragma once

#include <utility>
#include <vector>

#include "fpt/core_models.hpp"

namespace fpt {

// Truncation policy for every infinite series in the library.
struct SeriesControl {
  double rel_tol = 1e-12;
  int max_terms = 500;

  void validate() const;
};

// Modified Bessel function of the first kind, real order nu >= 0, argument x >= 0.
double bessel_i(double nu, double x, const SeriesControl& ctl = {});
// exp(-x) I_nu(x)
double bessel_i_scaled(double nu, double x, const SeriesControl& ctl = {});
// log(exp(-x) I_nu(x)); -infinity when the value is exactly zero.
double log_bessel_i_scaled(double nu, double x, const SeriesControl& ctl = {});

namespace detail {
// Below this argument the ascending series is used; above it the uniform expansion.
inline constexpr double kBesselSwitch = 30.0;
double log_bessel_i_scaled_series(double nu, double x, const SeriesControl& ctl);
double log_bessel_i_scaled_uniform(double nu, double x);
}  // namespace detail

double normal_pdf(double x, double mean = 0.0, double sd = 1.0);
double normal_cdf(double x, double mean = 0.0, double sd = 1.0);
double normal_sf(double x, double mean = 0.0, double sd = 1.0);  // 1 - cdf, accurate in the tail
double log_normal_pdf(double x, double mean, double sd);

// Standardized orthant probability P(Z1 >= h, Z2 >= k) with correlation r.
double bvn_upper(double h, double k, double r);

// P(Z1 >= x1, Z2 >= x2) for Z ~ tr.
double bvn_survival(Vec2 x, const GaussianTransition& tr);
// P(Z1 <= x1, Z2 <= x2) for Z ~ tr.
double bvn_cdf(Vec2 x, const GaussianTransition& tr);
// Partial derivative of bvn_survival with respect to x_axis (axis 1 or 2).
double bvn_survival_dx(int axis, Vec2 x, const GaussianTransition& tr);
double bvn_pdf(Vec2 x, const GaussianTransition& tr);
double log_bvn_pdf(Vec2 x, const GaussianTransition& tr);

// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n);

}  // namespace fpt
