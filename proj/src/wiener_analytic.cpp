#include "fpt/wiener_analytic.hpp"

#include <limits>
#include <numbers>

namespace fpt {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// exp() of anything below this is zero in double precision.
constexpr double kLogUnderflow = -760.0;

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// sin(pi x), exactly zero at integers.
double sin_pi(double x) {
  double r = std::fmod(x, 2.0);
  if (r < 0) r += 2.0;
  if (r == 0.0 || r == 1.0) return 0.0;
  return std::sin(kPi * r);
}

// sum_{n>=1} coef(n) e^{-z} I_{n nu0}(z), returned with log_scale = z.
template <class Coef>
ScaledValue sine_bessel_series(double nu0, double z, Coef coef, const SeriesControl& ctl) {
  ctl.validate();
  if (z == 0.0) return {0.0, 0.0};
  double sum = 0.0, abs_sum = 0.0;
  int quiet = 0;
  for (int n = 1; n <= ctl.max_terms; ++n) {
    const double c = coef(n);
    double term = 0.0;
    if (c != 0.0) term = c * std::exp(log_bessel_i_scaled(n * nu0, z, ctl));
    sum += term;
    abs_sum += std::abs(term);
    quiet = std::abs(term) <= ctl.rel_tol * abs_sum ? quiet + 1 : 0;
    if (quiet >= 3 && n >= 10) return {sum, z};
  }
  throw NumericalError("sine-Bessel series did not converge within max_terms");
}

double delta(Component c, int n) {
  if (c == Component::One) return 1.0;
  return (n % 2 == 1) ? 1.0 : -1.0;
}

void check_time(double t) { require(t > 0 && std::isfinite(t), "time must be positive and finite"); }

}  // namespace

double ScaledValue::log_value() const {
  if (!(sum > 0.0)) return kNegInf;
  return std::log(sum) + log_scale;
}

PolarPoint polar_transform(Vec2 x, const WienerParams& p, const Boundary& b) {
  const double a = b.B1 - x[0];
  const double c = b.B2 - x[1];
  require(a >= 0 && c >= 0, "polar_transform: point must satisfy x1 <= B1 and x2 <= B2");
  const double rc = p.sigma2 * a - p.sigma1 * p.rho * c;
  const double rs = p.sigma1 * std::sqrt(1.0 - p.rho * p.rho) * c;
  PolarPoint out;
  out.rbar = std::hypot(rc, rs);
  out.on_face1 = a == 0.0;
  out.on_face2 = c == 0.0;
  if (out.on_face2)
    out.phi = 0.0;
  else if (out.on_face1)
    out.phi = p.alpha;
  else
    out.phi = std::clamp(std::atan2(rs, rc), 0.0, p.alpha);
  return out;
}

ScaledValue h_series_scaled(double rbar, double rbar0, double phi, double phi0, double t,
                            const WienerParams& p, const SeriesControl& ctl) {
  check_time(t);
  const double z = rbar * rbar0 / (p.K3 * p.K3 * t);
  const double nu0 = kPi / p.alpha;
  const double a = phi0 / p.alpha, c = phi / p.alpha;
  return sine_bessel_series(
      nu0, z, [&](int n) { return sin_pi(n * a) * sin_pi(n * c); }, ctl);
}

double h_series(double rbar, double rbar0, double phi, double phi0, double t, const WienerParams& p,
                const SeriesControl& ctl) {
  return h_series_scaled(rbar, rbar0, phi, phi0, t, p, ctl).value();
}

ScaledValue g_series_scaled(Component i, double rbar0, double phi0, double xi, double t,
                            const WienerParams& p, const Boundary& b, const SeriesControl& ctl) {
  check_time(t);
  require(xi <= b.B(i), "g_series: xi must not exceed B_i");
  const Component j = other(i);
  const double z = p.sigma(j) * (b.B(i) - xi) * rbar0 / (p.K3 * p.K3 * t);
  const double a = phi0 / p.alpha;
  return sine_bessel_series(
      kPi / p.alpha, z, [&](int n) { return delta(i, n) * n * sin_pi(n * a); }, ctl);
}

double g_series(Component i, double rbar0, double phi0, double xi, double t, const WienerParams& p,
                const Boundary& b, const SeriesControl& ctl) {
  return g_series_scaled(i, rbar0, phi0, xi, t, p, b, ctl).value();
}

double log_f_abs(Vec2 x, double t, const WienerParams& p, const Boundary& b, const SeriesControl& ctl) {
  check_time(t);
  const PolarPoint pt = polar_transform(x, p, b);
  if (pt.on_face1 || pt.on_face2) return kNegInf;
  const PolarPoint p0 = polar_transform({p.x01, p.x02}, p, b);
  const double k3sq = p.K3 * p.K3;
  const double dr = pt.rbar - p0.rbar;
  // Girsanov factor exp(mu' S^-1 (x - x0) - mu' S^-1 mu t / 2) times the driftless wedge density.
  const double base = std::log(2.0 / (p.alpha * p.K3 * t)) + p.K1 * (x[0] - p.x01) +
                      p.K2 * (x[1] - p.x02) - p.q() * t / (2.0 * k3sq) - dr * dr / (2.0 * k3sq * t);
  if (base + std::log(static_cast<double>(ctl.max_terms)) < kLogUnderflow) return kNegInf;
  const ScaledValue hs = h_series_scaled(pt.rbar, p0.rbar, pt.phi, p0.phi, t, p, ctl);
  if (!(hs.sum > 0.0)) return kNegInf;
  return base + std::log(hs.sum);
}

double f_abs(Vec2 x, double t, const WienerParams& p, const Boundary& b, const SeriesControl& ctl) {
  return std::exp(log_f_abs(x, t, p, b, ctl));
}

double f_free(Vec2 x, double t, const WienerParams& p) {
  return bvn_pdf(x, wiener_transition(p, {p.x01, p.x02}, t));
}

double f_univ_abs(Component i, double xi, double t, const WienerParams& p, const Boundary& b) {
  check_time(t);
  const double B = b.B(i), x0 = p.x0(i), mu = p.mu(i), s = p.sigma(i);
  require(xi <= B, "f_univ_abs: xi must not exceed B_i");
  if (xi == B) return 0.0;
  const double sd = s * std::sqrt(t);
  const double direct = normal_pdf(xi, x0 + mu * t, sd);
  const double image =
      std::exp(2.0 * mu * (B - x0) / (s * s) + log_normal_pdf(xi, 2.0 * B - x0 + mu * t, sd));
  return std::max(0.0, direct - image);
}

double log_inverse_gaussian(double tau, double distance, double mu, double sigma) {
  require(tau > 0, "inverse Gaussian: elapsed time must be positive");
  require(distance >= 0, "inverse Gaussian: start must not be above the level");
  if (distance == 0.0) return kNegInf;
  const double d = distance - mu * tau;
  return std::log(distance / sigma) - 0.5 * std::log(2.0 * kPi) - 1.5 * std::log(tau) -
         d * d / (2.0 * sigma * sigma * tau);
}

double f_fpt_univ(Component i, double t, const WienerParams& p, const Boundary& b,
                  std::optional<StartOverride> from) {
  const double x = from ? from->x : p.x0(i);
  const double s = from ? from->s : 0.0;
  if (from && t <= s && std::isfinite(t)) return 0.0;
  check_time(t - s);
  require(b.B(i) >= x, "f_fpt_univ: start must not be above the level");
  return std::exp(log_inverse_gaussian(t - s, b.B(i) - x, p.mu(i), p.sigma(i)));
}

double f_cond_xx(Component i, double xi, double xj, double t, const WienerParams& p,
                 const Boundary& b, const SeriesControl& ctl) {
  check_time(t);
  const Component j = other(i);
  require(xi < b.B(i), "f_cond_xx: xi must be below B_i");
  require(xj < b.B(j), "f_cond_xx: xj must be strictly below B_j");
  const double si = p.sigma(i), sj = p.sigma(j);
  const double dxj = xj - p.x0(j);
  Vec2 x{};
  x[idx(i)] = xi;
  x[idx(j)] = xj;
  const PolarPoint pt = polar_transform(x, p, b);
  const PolarPoint p0 = polar_transform({p.x01, p.x02}, p, b);
  const double k3sq = p.K3 * p.K3;
  const ScaledValue hs = h_series_scaled(pt.rbar, p0.rbar, pt.phi, p0.phi, t, p, ctl);
  if (!(hs.sum > 0.0)) return 0.0;
  const double drift = -p.K(i) * (si / sj * dxj * p.rho - (xi - p.x0(i)) + p.N(j) * t);
  const double dr = pt.rbar - p0.rbar;
  // -(rbar^2 + rbar0^2)/(2 K3^2 t) + z, with z = rbar rbar0 / (K3^2 t), folded together.
  const double gauss = -dr * dr / (2.0 * k3sq * t) + dxj * dxj * si * si * (1 - p.rho * p.rho) / (2.0 * k3sq * t);
  const double denom = -std::expm1(2.0 * (b.B(j) - p.x0(j)) * (xj - b.B(j)) / (sj * sj * t));
  const double logv = std::log(2.0 * sj * std::sqrt(2.0 * kPi * t) / (p.alpha * p.K3 * t)) + drift +
                      gauss - std::log(denom) + std::log(hs.sum);
  return std::exp(logv);
}

double f_cond_xt(Component i, double xi, double t, const WienerParams& p, const Boundary& b,
                 const SeriesControl& ctl) {
  check_time(t);
  const Component j = other(i);
  require(xi < b.B(i), "f_cond_xt: xi must be below B_i");
  const double si = p.sigma(i), sj = p.sigma(j);
  const double ai = b.B(i) - xi, ai0 = b.B(i) - p.x0(i), aj0 = b.B(j) - p.x0(j);
  const PolarPoint p0 = polar_transform({p.x01, p.x02}, p, b);
  const double k3sq = p.K3 * p.K3;
  const double z = sj * ai * p0.rbar / (k3sq * t);
  const double lin = p.rho * si * aj0 - sj * ai0;
  const double base = std::log(sj * kPi * std::sqrt(2.0 * kPi * t)) - 2.0 * std::log(p.alpha) -
                      std::log(ai) - std::log(aj0) -
                      p.K(i) * (si / sj * aj0 * p.rho - (xi - p.x0(i)) + p.N(j) * t) -
                      (lin * lin + sj * sj * ai * ai) / (2.0 * k3sq * t);
  if (base + z + std::log(static_cast<double>(ctl.max_terms) * ctl.max_terms) < kLogUnderflow) return 0.0;
  const ScaledValue g = g_series_scaled(i, p0.rbar, p0.phi, xi, t, p, b, ctl);
  if (!(g.sum > 0.0)) return 0.0;
  return std::exp(base + g.log_value());
}

double log_f_joint(Component i, double xi, double t, const WienerParams& p, const Boundary& b,
                   const SeriesControl& ctl) {
  check_time(t);
  const Component j = other(i);
  require(xi <= b.B(i), "f_joint: xi must not exceed B_i");
  if (xi == b.B(i)) return kNegInf;
  const double sj = p.sigma(j), ai = b.B(i) - xi;
  const PolarPoint p0 = polar_transform({p.x01, p.x02}, p, b);
  const double k3sq = p.K3 * p.K3;
  // Flux of the absorbed density through the face x_j = B_j. On that face rbar = sigma_j (B_i - x_i).
  const double dr = sj * ai - p0.rbar;
  const double base = std::log(kPi / (p.alpha * p.alpha * ai * t)) + p.K(i) * (xi - p.x0(i)) +
                      p.K(j) * (b.B(j) - p.x0(j)) - p.q() * t / (2.0 * k3sq) -
                      dr * dr / (2.0 * k3sq * t);
  if (base + std::log(static_cast<double>(ctl.max_terms) * ctl.max_terms) < kLogUnderflow) return kNegInf;
  // Without killing in component i the density is the passage density of T_j times the
  // regression law of X_i(t) given X_j(t) = B_j; killing only lowers it.
  const double si = p.sigma(i);
  const double cond_mean = p.x0(i) + p.mu(i) * t + p.rho * si / sj * (b.B(j) - p.x0(j) - p.mu(j) * t);
  const double bound = log_inverse_gaussian(t, b.B(j) - p.x0(j), p.mu(j), sj) +
                       log_normal_pdf(xi, cond_mean, si * std::sqrt((1.0 - p.rho * p.rho) * t));
  if (bound < kLogUnderflow) return kNegInf;
  const ScaledValue g = g_series_scaled(i, p0.rbar, p0.phi, xi, t, p, b, ctl);
  if (!(g.sum > 0.0)) return kNegInf;
  return base + std::log(g.sum);
}

double f_joint(Component i, double xi, double t, const WienerParams& p, const Boundary& b,
               const SeriesControl& ctl) {
  return std::exp(log_f_joint(i, xi, t, p, b, ctl));
}

JointFptDrift::JointFptDrift(const WienerParams& p, const Boundary& b, double t_max,
                             const QuadSpec& quad, const SeriesControl& ctl)
    : p_(p), b_(b), quad_(quad), ctl_(ctl), t_max_(t_max) {
  quad.validate();
  ctl.validate();
  check_time(t_max);
}

const JointFptDrift::Table& JointFptDrift::table(Component first, double t_first) {
  auto& cache = cache_[idx(first)];
  auto it = cache.find(t_first);
  if (it != cache.end()) return it->second;
  const Component j = other(first);
  // Integrate over the free coordinate as s = sqrt(B_j - x_j); the integrand is smooth in s at
  // the level and the small-gap peak of the passage density is resolved.
  const double reach = std::max(0.0, b_.B(j) - p_.x0(j) - p_.mu(j) * t_first);
  const double extent = reach + quad_.c * p_.sigma(j) * std::sqrt(t_max_);
  Table tab;
  tab.ds = std::sqrt(extent) / quad_.n;
  tab.log_f.assign(quad_.n + 1, kNegInf);
  for (int k = 1; k <= quad_.n; ++k) {
    const double s = k * tab.ds;
    tab.log_f[k] = log_f_joint(j, b_.B(j) - s * s, t_first, p_, b_, ctl_) + std::log(2.0 * s);
  }
  return cache.emplace(t_first, std::move(tab)).first->second;
}

double JointFptDrift::operator()(double t1, double t2) {
  check_time(t1);
  check_time(t2);
  require(t1 != t2, "joint_fpt_drift: the diagonal t1 == t2 is not supported with drift");
  require(std::max(t1, t2) <= t_max_ * (1 + 1e-12), "joint_fpt_drift: time beyond evaluator horizon");
  const Component first = t1 < t2 ? Component::One : Component::Two;
  const Component j = other(first);
  const double ti = std::min(t1, t2), gap = std::abs(t2 - t1);
  const Table& tab = table(first, ti);
  double sum = 0.0;
  for (int k = 1; k <= quad_.n; ++k) {
    if (tab.log_f[k] == kNegInf) continue;
    const double s = k * tab.ds;
    const double w = (k == quad_.n) ? 0.5 : 1.0;
    const double lv = tab.log_f[k] + log_inverse_gaussian(gap, s * s, p_.mu(j), p_.sigma(j));
    if (lv > kLogUnderflow) sum += w * std::exp(lv);
  }
  return sum * tab.ds;
}

double joint_fpt_drift(double t1, double t2, const WienerParams& p, const Boundary& b,
                       const QuadSpec& quad, const SeriesControl& ctl) {
  JointFptDrift eval(p, b, std::max(t1, t2), quad, ctl);
  return eval(t1, t2);
}

double joint_fpt_driftless(double t1, double t2, const WienerParams& p, const Boundary& b,
                           const SeriesControl& ctl) {
  require(p.driftless(), "joint_fpt_driftless: drift must be zero");
  check_time(t1);
  check_time(t2);
  require(t1 != t2, "joint_fpt_driftless: use joint_fpt_diag on the diagonal");
  const Component later = t1 < t2 ? Component::Two : Component::One;
  const double ti = std::min(t1, t2), tj = std::max(t1, t2);
  const PolarPoint p0 = polar_transform({p.x01, p.x02}, p, b);
  const double k3sq = p.K3 * p.K3, rho2 = p.rho * p.rho;
  const double r02 = p0.rbar * p0.rbar;
  const double w = r02 * (tj - ti) / (4.0 * k3sq * ti * (tj - ti * rho2));
  const double base = std::log(kPi * std::sqrt(1.0 - rho2) / (2.0 * p.alpha * p.alpha)) -
                      0.5 * std::log(ti * (tj - ti * rho2)) - std::log(tj - ti) -
                      r02 * (1.0 - rho2) / (2.0 * k3sq * (tj - ti * rho2));
  if (base + std::log(static_cast<double>(ctl.max_terms) * ctl.max_terms) < kLogUnderflow) return 0.0;
  const double a = p0.phi / p.alpha;
  const ScaledValue s = sine_bessel_series(
      kPi / (2.0 * p.alpha), w, [&](int n) { return delta(later, n) * n * sin_pi(n * a); }, ctl);
  if (!(s.sum > 0.0)) return 0.0;
  return std::exp(base + std::log(s.sum));
}

DiagValue joint_fpt_diag(double t, const WienerParams& p, const Boundary& b) {
  require(p.driftless(), "joint_fpt_diag: drift must be zero");
  check_time(t);
  if (p.rho < 0) return {0.0, false};
  if (p.rho > 0) return {std::numeric_limits<double>::infinity(), true};
  const double a = b.B1 - p.x01, c = b.B2 - p.x02;
  const double s1 = p.sigma1, s2 = p.sigma2;
  const double v = a * c / (2.0 * kPi * s1 * s2 * t * t * t) *
                   std::exp(-(s2 * s2 * a * a + s1 * s1 * c * c) / (2.0 * s1 * s1 * s2 * s2 * t));
  return {v, false};
}

WienerJointReference::WienerJointReference(const WienerParams& p, const Boundary& b, double t_max,
                                           const QuadSpec& quad)
    : p_(p), b_(b) {
  if (!p.driftless()) drift_ = std::make_unique<JointFptDrift>(p, b, t_max, quad);
}

double WienerJointReference::operator()(double t1, double t2) {
  if (drift_) {
    if (t1 == t2) return std::numeric_limits<double>::quiet_NaN();
    return (*drift_)(t1, t2);
  }
  if (t1 == t2) {
    const DiagValue d = joint_fpt_diag(t1, p_, b_);
    return d.infinite ? std::numeric_limits<double>::infinity() : d.value;
  }
  return joint_fpt_driftless(t1, t2, p_, b_);
}

}  // namespace fpt
