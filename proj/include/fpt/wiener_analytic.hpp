#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "fpt/core_models.hpp"
#include "fpt/special_fns.hpp"

// Closed forms for the correlated Wiener process absorbed at the corner of two levels.
namespace fpt {

// Polar coordinates of the wedge image of the strip below (B1, B2):
//   rbar cos(phi) = sigma2 (B1 - x1) - sigma1 rho (B2 - x2)
//   rbar sin(phi) = sigma1 sqrt(1 - rho^2) (B2 - x2)
struct PolarPoint {
  double rbar = 0;
  double phi = 0;
  bool on_face1 = false;  // x1 == B1, phi == alpha
  bool on_face2 = false;  // x2 == B2, phi == 0
};

PolarPoint polar_transform(Vec2 x, const WienerParams& p, const Boundary& b);

// A series value kept as sum * exp(log_scale) so that large Bessel growth never overflows.
struct ScaledValue {
  double sum = 0;
  double log_scale = 0;
  double value() const { return sum * std::exp(log_scale); }
  double log_value() const;  // -inf for non-positive sums
};

ScaledValue h_series_scaled(double rbar, double rbar0, double phi, double phi0, double t,
                            const WienerParams& p, const SeriesControl& ctl = {});
double h_series(double rbar, double rbar0, double phi, double phi0, double t, const WienerParams& p,
                const SeriesControl& ctl = {});

ScaledValue g_series_scaled(Component i, double rbar0, double phi0, double xi, double t,
                            const WienerParams& p, const Boundary& b, const SeriesControl& ctl = {});
double g_series(Component i, double rbar0, double phi0, double xi, double t, const WienerParams& p,
                const Boundary& b, const SeriesControl& ctl = {});

// Density of X(t) on the event that neither level has been reached by t.
double f_abs(Vec2 x, double t, const WienerParams& p, const Boundary& b, const SeriesControl& ctl = {});
double log_f_abs(Vec2 x, double t, const WienerParams& p, const Boundary& b,
                 const SeriesControl& ctl = {});
// Unconstrained Gaussian density of X(t).
double f_free(Vec2 x, double t, const WienerParams& p);

// Marginal density of X_i(t) on {T_i > t} (method of images).
double f_univ_abs(Component i, double xi, double t, const WienerParams& p, const Boundary& b);

// Where a univariate passage starts: position and time.
struct StartOverride {
  double x;
  double s;
};

// Inverse Gaussian first-passage density of component i through B_i; zero before a given start.
double f_fpt_univ(Component i, double t, const WienerParams& p, const Boundary& b,
                  std::optional<StartOverride> from = std::nullopt);
double log_inverse_gaussian(double tau, double distance, double mu, double sigma);

double f_cond_xx(Component i, double xi, double xj, double t, const WienerParams& p,
                 const Boundary& b, const SeriesControl& ctl = {});
double f_cond_xt(Component i, double xi, double t, const WienerParams& p, const Boundary& b,
                 const SeriesControl& ctl = {});
// Joint density of (X_i at the instant T_j, T_j) on {T_j < T_i}.
double f_joint(Component i, double xi, double t, const WienerParams& p, const Boundary& b,
               const SeriesControl& ctl = {});
double log_f_joint(Component i, double xi, double t, const WienerParams& p, const Boundary& b,
                   const SeriesControl& ctl = {});

// Joint density of (T1, T2) with drift, absorbing levels. Off-diagonal only.
double joint_fpt_drift(double t1, double t2, const WienerParams& p, const Boundary& b,
                       const QuadSpec& quad = {}, const SeriesControl& ctl = {});

// Evaluates joint_fpt_drift on many points, caching the inner tables per earlier time.
class JointFptDrift {
 public:
  JointFptDrift(const WienerParams& p, const Boundary& b, double t_max, const QuadSpec& quad = {},
                const SeriesControl& ctl = {});
  double operator()(double t1, double t2);

 private:
  struct Table {
    double ds = 0;
    std::vector<double> log_f;  // log(f_joint(j, B_j - s^2, t_i) * 2s) on s = 0, ds, 2ds, ...
  };
  const Table& table(Component first, double t_first);

  WienerParams p_;
  Boundary b_;
  QuadSpec quad_;
  SeriesControl ctl_;
  double t_max_;
  std::array<std::map<double, Table>, 2> cache_;
};

double joint_fpt_driftless(double t1, double t2, const WienerParams& p, const Boundary& b,
                           const SeriesControl& ctl = {});

struct DiagValue {
  double value = 0;
  bool infinite = false;
};
DiagValue joint_fpt_diag(double t, const WienerParams& p, const Boundary& b);

// Reference joint density for (t1, t2): series closed form when driftless, else the
// quadrature form. Diagonal points give +inf (rho > 0), the exact value (rho <= 0, driftless)
// or NaN (drifted, unsupported).
class WienerJointReference {
 public:
  WienerJointReference(const WienerParams& p, const Boundary& b, double t_max, const QuadSpec& quad = {});
  double operator()(double t1, double t2);

 private:
  WienerParams p_;
  Boundary b_;
  std::unique_ptr<JointFptDrift> drift_;
};

}  // namespace fpt
