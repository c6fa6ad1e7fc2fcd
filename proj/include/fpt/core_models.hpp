#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace fpt {

using Vec2 = std::array<double, 2>;

// Raised when a computation cannot proceed for numerical reasons
// (non-positive-definite covariance, series that will not converge, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Component : int { One = 1, Two = 2 };

inline Component other(Component c) { return c == Component::One ? Component::Two : Component::One; }
inline int idx(Component c) { return c == Component::One ? 0 : 1; }
Component component_from_int(int i);

struct Mat2 {
  double a11 = 0, a12 = 0, a21 = 0, a22 = 0;

  double det() const { return a11 * a22 - a12 * a21; }
  Mat2 operator*(double s) const { return {a11 * s, a12 * s, a21 * s, a22 * s}; }
  Mat2 operator+(const Mat2& o) const { return {a11 + o.a11, a12 + o.a12, a21 + o.a21, a22 + o.a22}; }
  Mat2 operator*(const Mat2& o) const {
    return {a11 * o.a11 + a12 * o.a21, a11 * o.a12 + a12 * o.a22,
            a21 * o.a11 + a22 * o.a21, a21 * o.a12 + a22 * o.a22};
  }
  Mat2 transpose() const { return {a11, a21, a12, a22}; }
  double operator()(int i, int j) const;
};

// Lower Cholesky factor; throws NumericalError unless m is symmetric positive-definite.
Mat2 cholesky(const Mat2& m);

struct WienerParams {
  double mu1 = 0, mu2 = 0;
  double sigma1 = 1, sigma2 = 1;
  double rho = 0;
  double x01 = 0, x02 = 0;

  // Derived by make(); never set by hand.
  double K1 = 0, K2 = 0, K3 = 0, N1 = 0, N2 = 0, alpha = 0;

  static WienerParams make(double mu1, double mu2, double sigma1, double sigma2, double rho,
                           double x01, double x02);
  void validate() const;

  double mu(Component c) const { return c == Component::One ? mu1 : mu2; }
  double sigma(Component c) const { return c == Component::One ? sigma1 : sigma2; }
  double x0(Component c) const { return c == Component::One ? x01 : x02; }
  double K(Component c) const { return c == Component::One ? K1 : K2; }
  double N(Component c) const { return c == Component::One ? N1 : N2; }
  // q = sigma1^2 mu2^2 - 2 mu1 mu2 sigma1 sigma2 rho + sigma2^2 mu1^2
  double q() const;
  bool driftless() const { return mu1 == 0.0 && mu2 == 0.0; }
};

// dX_i = (mu_i - X_i/theta) dt + (Sigma dW)_i with a symmetric diffusion matrix Sigma.
struct OUParams {
  double mu1 = 0, mu2 = 0;
  double theta = 1;
  double sigma11 = 1, sigma12 = 0, sigma22 = 1;
  double x01 = 0, x02 = 0;

  void validate() const;
  Mat2 Sigma() const { return {sigma11, sigma12, sigma12, sigma22}; }
  Mat2 noise_rate() const;  // Sigma * Sigma^T
  double mu(Component c) const { return c == Component::One ? mu1 : mu2; }
  double x0(Component c) const { return c == Component::One ? x01 : x02; }
};

using Model = std::variant<WienerParams, OUParams>;

enum class BoundaryKind { Absorbing, Crossing };

struct Boundary {
  double B1 = 1, B2 = 1;
  BoundaryKind kind = BoundaryKind::Absorbing;

  double B(Component c) const { return c == Component::One ? B1 : B2; }
};

void validate_boundary(const Model& model, const Boundary& b);

struct GaussianTransition {
  Vec2 mean{0, 0};
  Mat2 cov;
};

struct GridSpec {
  double h = 0.01;
  double Theta = 1;
  double r1 = 0.05, r2 = 0.05;
  int m1 = 0, m2 = 0;  // 0 asks for the default truncation rule

  void validate() const;
  int N() const;
  double t(int k) const { return k * h; }
  double r(Component c) const { return c == Component::One ? r1 : r2; }
  int m(Component c) const { return c == Component::One ? m1 : m2; }
};

// Extent and panel count for semi-infinite spatial integrals.
enum class QuadScheme { Trapezoid };

struct QuadSpec {
  double c = 8;
  int n = 400;
  QuadScheme scheme = QuadScheme::Trapezoid;

  void validate() const;
};

struct DensityField {
  std::vector<double> axis1, axis2;
  std::vector<double> values;  // row-major, axis1 outer
  std::map<std::string, std::string> meta;

  DensityField() = default;
  DensityField(std::vector<double> a1, std::vector<double> a2);

  double& at(std::size_t i, std::size_t j) { return values[i * axis2.size() + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * axis2.size() + j]; }
  void validate() const;
};

GaussianTransition wiener_transition(const WienerParams& p, Vec2 y, double dt);
GaussianTransition ou_transition(const OUParams& p, Vec2 y, double dt);
GaussianTransition transition(const Model& m, Vec2 y, double dt);
GaussianTransition em_step_distribution(const Model& m, Vec2 y, double h);

Vec2 drift(const Model& m, Vec2 y);
Mat2 noise_rate(const Model& m);
Vec2 start_point(const Model& m);

// Univariate marginal transition of one component: (mean, variance) after dt from y.
struct Marginal {
  Model model;
  Component c;
  double mean(double y, double dt) const;
  double var(double dt) const;
};

// Smallest m_i with m_i r_i covering 8 marginal standard deviations at the horizon
// plus any downward excursion of the marginal mean.
std::array<int, 2> default_truncation(const Model& m, const GridSpec& g);
GridSpec resolve_truncation(const Model& m, const GridSpec& g);

std::string describe(const Model& m);

}  // namespace fpt
