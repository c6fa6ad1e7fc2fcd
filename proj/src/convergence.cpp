#include "fpt/convergence.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "fpt/monte_carlo.hpp"

namespace fpt {

void RefinementPlan::validate() const {
  if (ladder.empty()) throw std::invalid_argument("refinement plan: empty ladder");
  for (const auto& g : ladder)
    if (!(g.h > 0) || !(g.r > 0)) throw std::invalid_argument("refinement plan: h and r must be positive");
  for (std::size_t i = 1; i < ladder.size(); ++i) {
    const bool dh = ladder[i].h < ladder[i - 1].h, dr = ladder[i].r < ladder[i - 1].r;
    const bool sh = ladder[i].h <= ladder[i - 1].h, sr = ladder[i].r <= ladder[i - 1].r;
    if (!((dh || dr) && sh && sr))
      throw std::invalid_argument("refinement plan: ladder must decrease in the refined parameter");
  }
  if (fine && (!(fine->h > 0) || !(fine->r > 0)))
    throw std::invalid_argument("refinement plan: fine grid must be positive");
  if (!(t_min >= 0)) throw std::invalid_argument("refinement plan: t_min must be non-negative");
}

namespace {

RefinementPlan make_plan(Rung base, int rungs, ReferenceKind ref, double fh, double fr) {
  if (rungs < 1) throw std::invalid_argument("refinement plan: need at least one rung");
  RefinementPlan p;
  p.base = base;
  p.reference = ref;
  Rung g = base;
  for (int i = 0; i < rungs; ++i) {
    p.ladder.push_back(g);
    g.h *= fh;
    g.r *= fr;
  }
  return p;
}

struct Lattice {
  std::vector<double> t;
  std::vector<double> y[2];
};

int index_of(double v, double step, const char* what) {
  const double d = v / step;
  const long k = std::lround(d);
  if (std::abs(d - static_cast<double>(k)) > 1e-6)
    throw std::invalid_argument(std::string("error_ladder: ") + what + " grids are not nested");
  return static_cast<int>(k);
}

double field_at(const SolverOutput& s, const Boundary& b, Family f, double y, double t) {
  const int k = index_of(t, s.grid.h, "time");
  const int u = index_of(b.B(f) - y, s.grid.r(f), "space");
  const DensityField& fld = s.field(f);
  if (k > s.grid.N() || u >= static_cast<int>(fld.axis1.size()))
    throw std::invalid_argument("error_ladder: comparison point outside a rung's lattice");
  return fld.at(u, k);
}

}  // namespace

RefinementPlan RefinementPlan::halve_h(Rung base, int rungs, ReferenceKind ref) {
  return make_plan(base, rungs, ref, 0.5, 1.0);
}
RefinementPlan RefinementPlan::halve_r(Rung base, int rungs, ReferenceKind ref) {
  return make_plan(base, rungs, ref, 1.0, 0.5);
}
RefinementPlan RefinementPlan::halve_both(Rung base, int rungs, ReferenceKind ref) {
  return make_plan(base, rungs, ref, 0.5, 0.5);
}

SolverOutput analytic_output(const WienerParams& p, const Boundary& b, const GridSpec& grid) {
  const GridSpec g = resolve_truncation(p, grid);
  SolverOutput out;
  out.grid = g;
  const auto tt = times(g);
  for (Family f : {Family::One, Family::Two}) {
    DensityField fld(knots(b, g, f), tt);
    for (std::size_t u = 1; u < fld.axis1.size(); ++u)
      for (int k = 1; k <= g.N(); ++k) fld.at(u, k) = f_joint(f, fld.axis1[u], g.t(k), p, b);
    out.field(f) = std::move(fld);
  }
  return out;
}

std::vector<LadderRow> error_ladder(const Model& model, const Boundary& b, double Theta,
                                    const RefinementPlan& plan, Metric metric, int threads) {
  plan.validate();
  const WienerParams* wp = std::get_if<WienerParams>(&model);
  if (plan.reference == ReferenceKind::AnalyticWiener && !wp)
    throw std::invalid_argument("error_ladder: the analytic reference needs a Wiener model");

  auto grid_for = [&](Rung g) {
    GridSpec s;
    s.h = g.h;
    s.Theta = Theta;
    s.r1 = s.r2 = g.r;
    return resolve_truncation(model, s);
  };
  SolverOptions opt;
  opt.threads = threads;
  opt.compute_residuals = false;

  // Common lattice: coarsest step in each direction, knots every rung can reach.
  double H = 0, R = 0;
  for (const auto& g : plan.ladder) {
    H = std::max(H, g.h);
    R = std::max(R, g.r);
  }
  Lattice lat;
  for (int k = 1; k * H <= Theta * (1 + 1e-12); ++k)
    if (k * H >= plan.t_min - 1e-12) lat.t.push_back(k * H);
  for (Family f : {Family::One, Family::Two}) {
    double depth = std::numeric_limits<double>::infinity();
    for (const auto& g : plan.ladder) depth = std::min(depth, grid_for(g).m(f) * g.r);
    for (int j = 1; j * R <= depth * (1 + 1e-12); ++j) lat.y[idx(f)].push_back(b.B(f) - j * R);
  }

  std::optional<SolverOutput> fine;
  if (plan.reference == ReferenceKind::FineGrid) {
    const Rung fg = plan.fine ? *plan.fine : Rung{plan.ladder.back().h / 4, plan.ladder.back().r / 4};
    fine = solve(model, b, grid_for(fg), opt);
  }
  auto reference = [&](Family f, double y, double t) {
    return fine ? field_at(*fine, b, f, y, t) : f_joint(f, y, t, *wp, b);
  };
  std::vector<double> ref_vals;
  for (Family f : {Family::One, Family::Two})
    for (double y : lat.y[idx(f)])
      for (double t : lat.t) ref_vals.push_back(reference(f, y, t));

  std::vector<LadderRow> rows;
  for (const auto& g : plan.ladder) {
    const auto t0 = std::chrono::steady_clock::now();
    const SolverOutput s = solve(model, b, grid_for(g), opt);
    double acc = 0;
    long n = 0;
    for (Family f : {Family::One, Family::Two})
      for (double y : lat.y[idx(f)])
        for (double t : lat.t) {
          const double e = std::abs(field_at(s, b, f, y, t) - ref_vals[n++]);
          acc = metric == Metric::MaxAbs ? std::max(acc, e) : acc + e * e;
        }
    if (n == 0) throw std::invalid_argument("error_ladder: empty comparison lattice");
    LadderRow row;
    row.h = g.h;
    row.r = g.r;
    row.metric = metric;
    row.points = n;
    row.error = metric == Metric::MaxAbs ? acc : metric == Metric::MSE ? acc / n : std::sqrt(acc / n);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  return rows;
}

SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& error) {
  if (x.size() != error.size() || x.size() < 2) throw std::invalid_argument("fit_slope: need matching series of length >= 2");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] > 0) || !(error[i] > 0)) throw std::invalid_argument("fit_slope: values must be positive");

  auto fit = [&](std::size_t skip) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i == skip) continue;
      const double lx = std::log(x[i]), ly = std::log(error[i]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++n;
    }
    SlopeFit f;
    f.used = n;
    const double den = n * sxx - sx * sx;
    if (den == 0) throw std::invalid_argument("fit_slope: x values must differ");
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    return f;
  };

  SlopeFit all = fit(x.size());
  if (x.size() < 4) return all;
  std::size_t coarse = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > x[coarse]) coarse = i;
  // Judge the coarsest point against the fit of the others, which it cannot drag toward itself.
  SlopeFit rest = fit(coarse);
  double rss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i == coarse) continue;
    const double res = std::log(error[i]) - rest.intercept - rest.slope * std::log(x[i]);
    rss += res * res;
  }
  const double rms = std::sqrt(rss / rest.used);
  const double res_c = std::log(error[coarse]) - rest.intercept - rest.slope * std::log(x[coarse]);
  if (std::abs(res_c) > 3 * rms && std::abs(res_c) > 1e-9) {
    rest.dropped_coarsest = true;
    return rest;
  }
  return all;
}

AssemblyCheck assembled_mse(const WienerParams& p, const Boundary& b, const GridSpec& grid,
                            const SolverOptions& opt) {
  AssemblyCheck c;
  const auto t0 = std::chrono::steady_clock::now();
  c.solution = solve(p, b, grid, opt);
  c.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto tg = lattice_times(c.solution.grid);
  c.assembled = assemble_absorbing(c.solution, p, b, tg, wiener_conditional_fpt(p, b));
  WienerJointReference ref(p, b, grid.Theta);
  const MseResult m = mse_detail(c.assembled, [&](double t1, double t2) { return ref(t1, t2); });
  c.mse = m.value;
  c.cells = m.cells;
  c.skipped = m.skipped;
  return c;
}

const char* to_string(Metric m) {
  switch (m) {
    case Metric::MaxAbs: return "maxabs";
    case Metric::Rms: return "rms";
    case Metric::MSE: return "mse";
  }
  return "?";
}

Metric metric_from_string(const std::string& s) {
  if (s == "maxabs") return Metric::MaxAbs;
  if (s == "rms") return Metric::Rms;
  if (s == "mse") return Metric::MSE;
  throw std::invalid_argument("unknown metric '" + s + "' (expected maxabs, rms or mse)");
}

void write_ladder_csv(std::ostream& os, const std::vector<LadderRow>& rows) {
  os << "h,r,metric,error\n";
  const auto old = os.precision(17);
  for (const auto& r : rows) os << r.h << ',' << r.r << ',' << to_string(r.metric) << ',' << r.error << '\n';
  os.precision(old);
}

}  // namespace fpt
