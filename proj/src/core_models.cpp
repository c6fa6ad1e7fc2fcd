#include "fpt/core_models.hpp"

#include <cmath>
#include <sstream>

namespace fpt {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

bool finite(double x) { return std::isfinite(x); }

}  // namespace

Component component_from_int(int i) {
  if (i == 1) return Component::One;
  if (i == 2) return Component::Two;
  throw std::invalid_argument("component index must be 1 or 2");
}

double Mat2::operator()(int i, int j) const {
  if (i == 0 && j == 0) return a11;
  if (i == 0 && j == 1) return a12;
  if (i == 1 && j == 0) return a21;
  if (i == 1 && j == 1) return a22;
  throw std::out_of_range("Mat2 index");
}

Mat2 cholesky(const Mat2& m) {
  if (!(m.a11 > 0.0) || std::abs(m.a12 - m.a21) > 1e-12 * (std::abs(m.a12) + 1.0))
    throw NumericalError("cholesky: matrix is not symmetric positive-definite");
  const double l11 = std::sqrt(m.a11);
  const double l21 = m.a21 / l11;
  const double d = m.a22 - l21 * l21;
  if (!(d > 0.0)) throw NumericalError("cholesky: matrix is not positive-definite");
  return {l11, 0.0, l21, std::sqrt(d)};
}

WienerParams WienerParams::make(double mu1, double mu2, double sigma1, double sigma2, double rho,
                                double x01, double x02) {
  WienerParams p;
  p.mu1 = mu1;
  p.mu2 = mu2;
  p.sigma1 = sigma1;
  p.sigma2 = sigma2;
  p.rho = rho;
  p.x01 = x01;
  p.x02 = x02;
  require(finite(mu1) && finite(mu2) && finite(x01) && finite(x02), "wiener: non-finite parameter");
  require(sigma1 > 0 && sigma2 > 0, "wiener: sigma1 and sigma2 must be positive");
  require(std::abs(rho) < 1, "wiener: |rho| must be below 1");
  const double s = 1.0 - rho * rho;
  p.K1 = (sigma2 * mu1 - sigma1 * mu2 * rho) / (sigma1 * sigma1 * sigma2 * s);
  p.K2 = (sigma1 * mu2 - sigma2 * mu1 * rho) / (sigma1 * sigma2 * sigma2 * s);
  p.K3 = sigma1 * sigma2 * std::sqrt(s);
  p.N1 = (sigma1 * mu2 - sigma2 * mu1 * rho) / (2.0 * sigma1);
  p.N2 = (sigma2 * mu1 - sigma1 * mu2 * rho) / (2.0 * sigma2);
  p.alpha = std::acos(-rho);
  if (!(std::isfinite(p.K1) && std::isfinite(p.K2) && std::isfinite(p.N1) && std::isfinite(p.N2) && p.K3 > 0))
    throw NumericalError("wiener: derived constants overflow or underflow for these volatilities");
  return p;
}

void WienerParams::validate() const {
  WienerParams fresh = make(mu1, mu2, sigma1, sigma2, rho, x01, x02);
  require(fresh.K3 == K3 && fresh.alpha == alpha && fresh.K1 == K1 && fresh.K2 == K2,
          "wiener: derived constants are stale; build parameters with WienerParams::make");
}

double WienerParams::q() const {
  return sigma1 * sigma1 * mu2 * mu2 - 2.0 * mu1 * mu2 * sigma1 * sigma2 * rho +
         sigma2 * sigma2 * mu1 * mu1;
}

void OUParams::validate() const {
  require(finite(mu1) && finite(mu2) && finite(x01) && finite(x02), "ou: non-finite parameter");
  require(theta > 0 && finite(theta), "ou: theta must be positive");
  require(finite(sigma11) && finite(sigma12) && finite(sigma22), "ou: non-finite Sigma");
  // Symmetric 2x2 is positive-definite iff the leading minors are positive.
  require(sigma11 > 0 && sigma11 * sigma22 - sigma12 * sigma12 > 0,
          "ou: Sigma must be symmetric positive-definite");
}

Mat2 OUParams::noise_rate() const {
  const Mat2 s = Sigma();
  return s * s.transpose();
}

void validate_boundary(const Model& model, const Boundary& b) {
  require(finite(b.B1) && finite(b.B2), "boundary: non-finite level");
  const Vec2 x0 = start_point(model);
  require(b.B1 > x0[0], "boundary: B1 must exceed x01");
  require(b.B2 > x0[1], "boundary: B2 must exceed x02");
}

void GridSpec::validate() const {
  require(h > 0 && finite(h), "grid: h must be positive");
  require(Theta > 0 && finite(Theta), "grid: Theta must be positive");
  require(r1 > 0 && r2 > 0 && finite(r1) && finite(r2), "grid: r1 and r2 must be positive");
  require(m1 >= 0 && m2 >= 0, "grid: m1 and m2 must be non-negative (0 selects the default)");
  const double n = Theta / h;
  const double nr = std::round(n);
  require(nr >= 1, "grid: Theta/h must be at least 1");
  require(std::abs(n - nr) <= 1e-9 * nr, "grid: Theta/h must be an integer");
}

int GridSpec::N() const { return static_cast<int>(std::round(Theta / h)); }

void QuadSpec::validate() const {
  require(c > 0 && finite(c), "quad: c must be positive");
  require(n >= 16, "quad: n must be at least 16");
}

DensityField::DensityField(std::vector<double> a1, std::vector<double> a2)
    : axis1(std::move(a1)), axis2(std::move(a2)), values(axis1.size() * axis2.size(), 0.0) {}

void DensityField::validate() const {
  require(values.size() == axis1.size() * axis2.size(), "density field: shape mismatch");
  auto monotone = [](const std::vector<double>& a) {
    if (a.size() < 2) return true;
    const bool up = a[1] > a[0];
    for (std::size_t i = 1; i < a.size(); ++i)
      if (up ? !(a[i] > a[i - 1]) : !(a[i] < a[i - 1])) return false;
    return true;
  };
  require(monotone(axis1) && monotone(axis2), "density field: axes must be strictly monotone");
}

GaussianTransition wiener_transition(const WienerParams& p, Vec2 y, double dt) {
  require(dt > 0, "wiener_transition: dt must be positive");
  GaussianTransition tr;
  tr.mean = {y[0] + p.mu1 * dt, y[1] + p.mu2 * dt};
  const double c = p.rho * p.sigma1 * p.sigma2 * dt;
  tr.cov = {p.sigma1 * p.sigma1 * dt, c, c, p.sigma2 * p.sigma2 * dt};
  return tr;
}

GaussianTransition ou_transition(const OUParams& p, Vec2 y, double dt) {
  require(dt > 0, "ou_transition: dt must be positive");
  const double e = std::exp(-dt / p.theta);
  GaussianTransition tr;
  tr.mean = {p.mu1 * p.theta + (y[0] - p.mu1 * p.theta) * e,
             p.mu2 * p.theta + (y[1] - p.mu2 * p.theta) * e};
  tr.cov = p.noise_rate() * (0.5 * p.theta * -std::expm1(-2.0 * dt / p.theta));
  return tr;
}

GaussianTransition transition(const Model& m, Vec2 y, double dt) {
  if (const auto* w = std::get_if<WienerParams>(&m)) return wiener_transition(*w, y, dt);
  return ou_transition(std::get<OUParams>(m), y, dt);
}

Vec2 drift(const Model& m, Vec2 y) {
  if (const auto* w = std::get_if<WienerParams>(&m)) return {w->mu1, w->mu2};
  const auto& o = std::get<OUParams>(m);
  return {o.mu1 - y[0] / o.theta, o.mu2 - y[1] / o.theta};
}

Mat2 noise_rate(const Model& m) {
  if (const auto* w = std::get_if<WienerParams>(&m)) {
    const double c = w->rho * w->sigma1 * w->sigma2;
    return {w->sigma1 * w->sigma1, c, c, w->sigma2 * w->sigma2};
  }
  return std::get<OUParams>(m).noise_rate();
}

Vec2 start_point(const Model& m) {
  if (const auto* w = std::get_if<WienerParams>(&m)) return {w->x01, w->x02};
  const auto& o = std::get<OUParams>(m);
  return {o.x01, o.x02};
}

GaussianTransition em_step_distribution(const Model& m, Vec2 y, double h) {
  require(h > 0, "em_step_distribution: h must be positive");
  const Vec2 d = drift(m, y);
  return {{y[0] + d[0] * h, y[1] + d[1] * h}, noise_rate(m) * h};
}

double Marginal::mean(double y, double dt) const {
  if (const auto* w = std::get_if<WienerParams>(&model)) return y + w->mu(c) * dt;
  const auto& o = std::get<OUParams>(model);
  const double a = o.mu(c) * o.theta;
  return a + (y - a) * std::exp(-dt / o.theta);
}

double Marginal::var(double dt) const {
  const Mat2 q = noise_rate(model);
  const double rate = c == Component::One ? q.a11 : q.a22;
  if (std::holds_alternative<WienerParams>(model)) return rate * dt;
  const double theta = std::get<OUParams>(model).theta;
  return rate * 0.5 * theta * -std::expm1(-2.0 * dt / theta);
}

std::array<int, 2> default_truncation(const Model& m, const GridSpec& g) {
  std::array<int, 2> out{};
  const Vec2 x0 = start_point(m);
  for (Component c : {Component::One, Component::Two}) {
    const Marginal mg{m, c};
    const double x = x0[idx(c)];
    // Marginal means are monotone in time for both models, so the extreme is at an end.
    const double lowest = std::min(x, mg.mean(x, g.Theta));
    const double extent = 8.0 * std::sqrt(mg.var(g.Theta)) + (x - lowest);
    out[idx(c)] = std::max(1, static_cast<int>(std::ceil(extent / g.r(c) - 1e-9)));
  }
  return out;
}

GridSpec resolve_truncation(const Model& m, const GridSpec& g) {
  GridSpec out = g;
  const auto d = default_truncation(m, g);
  if (out.m1 == 0) out.m1 = d[0];
  if (out.m2 == 0) out.m2 = d[1];
  return out;
}

std::string describe(const Model& m) {
  std::ostringstream os;
  os.precision(17);
  if (const auto* w = std::get_if<WienerParams>(&m)) {
    os << "wiener mu=(" << w->mu1 << "," << w->mu2 << ") sigma=(" << w->sigma1 << "," << w->sigma2
       << ") rho=" << w->rho << " x0=(" << w->x01 << "," << w->x02 << ")";
  } else {
    const auto& o = std::get<OUParams>(m);
    os << "ou mu=(" << o.mu1 << "," << o.mu2 << ") theta=" << o.theta << " Sigma=(" << o.sigma11
       << "," << o.sigma12 << "," << o.sigma22 << ") x0=(" << o.x01 << "," << o.x02 << ")";
  }
  return os.str();
}

}  // namespace fpt
