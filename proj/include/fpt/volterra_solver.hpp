#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fpt/core_models.hpp"

namespace fpt {

// Which boundary slice a lattice family lives on. Family One holds knots (y, B2) and the density
// of (X1, T2); family Two holds knots (B1, y) and the density of (X2, T1).
using Family = Component;

// Survival-derivative tables D_{ts}(lag)(u, v): derivative along the target family's free axis of
// P(X(t) >= target knot u | X(t - lag h) = source knot v), for lag = 1..N-1. Depends on (k, rho)
// only through the lag because both models have time-homogeneous transitions.
class KernelCache {
 public:
  KernelCache(const Model& model, const Boundary& b, const GridSpec& grid, int threads = 1);

  int N() const { return N_; }
  int size(Family f) const { return f == Family::One ? m1_ + 1 : m2_ + 1; }
  // Row u of D_{target,source}(lag); length size(source).
  const double* row(Family target, Family source, int lag, int u) const;
  double d(Family target, Family source, int lag, int u, int v) const {
    return row(target, source, lag, u)[v];
  }
  std::size_t bytes() const;

 private:
  int N_, m1_, m2_;
  std::vector<double> tab_[2][2];
};

// Knot coordinate y_u = B - u r of a family.
double knot(const Boundary& b, const GridSpec& g, Family f, int u);

// Spatial derivative of the free survival function at the family's knot, from the start point.
double lhs_derivative(Family i, double y, double t, const Model& model, const Boundary& b);

// Lagged kernel of the differenced system: D(lag) - D(lag - 1), with the elapsed-zero survival
// replaced by its degenerate indicator value, whose derivative off the knot itself is 0.
double kernel(Family target, Family source, int lag, double target_y, double source_y,
              const Model& model, const Boundary& b, const GridSpec& grid);

enum class ResidualEquation { SliceOne, SliceTwo, Density };

struct ResidualProbe {
  ResidualEquation eq = ResidualEquation::SliceOne;
  Vec2 x{0, 0};  // for SliceOne only x[0] is read (x[1] = B2); for SliceTwo only x[1]
  double t = 0;  // must be a lattice time
};

struct ResidualReport {
  std::vector<double> per_probe;
  double sup = 0;
  double l2 = 0;  // root mean square over probes
};

struct SolverDiagnostics {
  long negative_count = 0;
  double min_value = 0;
  double negative_mass = 0;
  double mass = 0;  // h r-weighted total of both fields
  bool t1_spike[2] = {false, false};
  ResidualReport residual;
  double kernel_seconds = 0;
  double recursion_seconds = 0;
  std::size_t kernel_bytes = 0;
};

struct SolverOptions {
  int threads = 1;
  // Sum the family-one source term of the family-two equation only up to rho = k - 2.
  bool short_cross_sum = false;
  bool compute_residuals = true;
  std::vector<ResidualProbe> probes;  // empty: default probe set
};

struct SolverOutput {
  GridSpec grid;       // with resolved truncation counts
  DensityField f1;     // axis1: knots y descending from B1; axis2: t_0..t_N
  DensityField f2;
  SolverDiagnostics diag;

  const DensityField& field(Family f) const { return f == Family::One ? f1 : f2; }
  DensityField& field(Family f) { return f == Family::One ? f1 : f2; }
};

SolverOutput solve(const Model& model, const Boundary& b, const GridSpec& grid,
                   const SolverOptions& opt = {});

std::vector<ResidualProbe> default_probes(const Model& model, const Boundary& b, const GridSpec& grid);
ResidualReport residual_volterra(const SolverOutput& out, const Model& model, const Boundary& b,
                                 const std::vector<ResidualProbe>& probes);

// f_{T_j}(t_late | X_j(t_early) = x_cross).
using ConditionalFpt = std::function<double(Component j, double t_late, double x_cross, double t_early)>;
// Density of (X_i(T_j), T_j) at (x_free, t_late) for the process restarted at the earlier crossing
// of component i, with X_j(t_early) = x_slice.
using CrossDensity = std::function<double(Component j, double x_free, double t_late, double x_slice,
                                          double t_early)>;

DensityField assemble_absorbing(const SolverOutput& out, const Model& model, const Boundary& b,
                                const std::vector<double>& t_grid, const ConditionalFpt& fpt);
DensityField assemble_crossing(const SolverOutput& out, const Model& model, const Boundary& b,
                               const std::vector<double>& t_grid, const CrossDensity& cross,
                               const QuadSpec& quad = {});

// All lattice times t_1..t_N with the given stride.
std::vector<double> lattice_times(const GridSpec& grid, int stride = 1);

ConditionalFpt wiener_conditional_fpt(const WienerParams& p, const Boundary& b);

// Univariate first-passage density through B from (y, s), by the first-kind Fortet equation
// P(X(t) > B | y, s) = int_s^t P(X(t) > B | B, tau) f(tau) dtau with a midpoint product rule.
std::vector<double> fpt_univ_numeric(const Marginal& model1d, double B, double y, double s,
                                     const std::vector<double>& t_grid, double h);

// Conditional passage densities from every knot, tabulated on the lattice lags.
class LatticeConditionalFpt {
 public:
  LatticeConditionalFpt(const Model& model, const Boundary& b, const GridSpec& grid);
  double operator()(Component j, double t_late, double x_cross, double t_early) const;
  ConditionalFpt callable() const;

 private:
  Boundary b_;
  GridSpec g_;
  std::vector<std::vector<double>> tab_[2];  // [family][u][lag]
};

std::vector<double> knots(const Boundary& b, const GridSpec& g, Family f);
std::vector<double> times(const GridSpec& g);

}  // namespace fpt
