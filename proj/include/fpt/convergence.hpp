#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fpt/core_models.hpp"
#include "fpt/volterra_solver.hpp"
#include "fpt/wiener_analytic.hpp"

namespace fpt {

enum class ReferenceKind { AnalyticWiener, FineGrid };
enum class Metric { MaxAbs, Rms, MSE };

struct Rung {
  double h = 0;
  double r = 0;
};

struct RefinementPlan {
  Rung base;
  std::vector<Rung> ladder;
  ReferenceKind reference = ReferenceKind::AnalyticWiener;
  // Fine grid for ReferenceKind::FineGrid; unset means (h/4, r/4) of the finest rung.
  std::optional<Rung> fine;
  // Comparison skips the first instants, where the step-one division by h dominates.
  double t_min = 0.2;

  void validate() const;

  static RefinementPlan halve_h(Rung base, int rungs, ReferenceKind ref = ReferenceKind::AnalyticWiener);
  static RefinementPlan halve_r(Rung base, int rungs, ReferenceKind ref = ReferenceKind::AnalyticWiener);
  static RefinementPlan halve_both(Rung base, int rungs, ReferenceKind ref = ReferenceKind::AnalyticWiener);
};

struct LadderRow {
  double h = 0, r = 0;
  Metric metric = Metric::Rms;
  double error = 0;
  long points = 0;
  double seconds = 0;
};

// Solves on every rung and measures the error of both lattice fields against the reference on
// the lattice common to all rungs (coarsest h and r, interior knots, t >= t_min).
std::vector<LadderRow> error_ladder(const Model& model, const Boundary& b, double Theta,
                                    const RefinementPlan& plan, Metric metric, int threads = 1);

struct SlopeFit {
  double slope = 0;
  double intercept = 0;
  int used = 0;
  bool dropped_coarsest = false;
};

// Least-squares slope of log(error) against log(x). With four or more points the coarsest point
// (largest x) is dropped when its residual from the fit of the other points exceeds three times
// that fit's RMS residual.
SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& error);

// The lattice fields filled with the closed-form Wiener densities at the knots.
SolverOutput analytic_output(const WienerParams& p, const Boundary& b, const GridSpec& grid);

struct AssemblyCheck {
  double mse = 0;
  long cells = 0;
  long skipped = 0;
  double solve_seconds = 0;
  SolverOutput solution;
  DensityField assembled;
};

// Solve, assemble on the full time lattice and compare with the closed-form joint density.
AssemblyCheck assembled_mse(const WienerParams& p, const Boundary& b, const GridSpec& grid,
                            const SolverOptions& opt = {});

void write_ladder_csv(std::ostream& os, const std::vector<LadderRow>& rows);
const char* to_string(Metric m);
Metric metric_from_string(const std::string& s);

}  // namespace fpt
