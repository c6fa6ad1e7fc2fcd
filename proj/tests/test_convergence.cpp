#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fpt/convergence.hpp"

using namespace fpt;

namespace {

const Boundary kB{1.0, 1.0, BoundaryKind::Absorbing};
const WienerParams kSym = WienerParams::make(0, 0, 1, 1, 0.5, 0, 0);

void check_non_increasing(const std::vector<LadderRow>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].error > 0);
    if (i > 0) CHECK(rows[i].error <= 1.1 * rows[i - 1].error);
  }
}

}  // namespace

TEST_SUITE("convergence") {

TEST_CASE("slope fit on synthetic power laws") {
  const std::vector<double> x{0.8, 0.4, 0.2, 0.1, 0.05};
  std::vector<double> e;
  for (double v : x) e.push_back(3.0 * std::pow(v, 1.5));
  const auto f = fit_slope(x, e);
  CHECK(f.slope == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(f.used == 5);
  CHECK_FALSE(f.dropped_coarsest);

  // A pre-asymptotic coarsest point is dropped.
  auto bad = e;
  bad[0] *= 4;
  const auto g = fit_slope(x, bad);
  CHECK(g.dropped_coarsest);
  CHECK(g.used == 4);
  CHECK(g.slope == doctest::Approx(1.5).epsilon(1e-12));

  // Mild noise keeps every point.
  auto noisy = e;
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] *= i % 2 ? 0.97 : 1.03;
  CHECK_FALSE(fit_slope(x, noisy).dropped_coarsest);

  // Three points are never trimmed.
  CHECK_FALSE(fit_slope({0.4, 0.2, 0.1}, {10.0, 0.2, 0.1}).dropped_coarsest);
  CHECK_THROWS(fit_slope({0.1}, {1.0}));
  CHECK_THROWS(fit_slope({0.1, 0.2}, {1.0, -1.0}));
  CHECK_THROWS(fit_slope({0.1, 0.1}, {1.0, 2.0}));
}

TEST_CASE("refinement plans") {
  const auto h = RefinementPlan::halve_h({0.2, 0.1}, 3);
  REQUIRE(h.ladder.size() == 3);
  CHECK(h.ladder[2].h == doctest::Approx(0.05));
  CHECK(h.ladder[2].r == doctest::Approx(0.1));
  const auto r = RefinementPlan::halve_r({0.2, 0.1}, 2, ReferenceKind::FineGrid);
  CHECK(r.ladder[1].r == doctest::Approx(0.05));
  CHECK(r.reference == ReferenceKind::FineGrid);
  const auto b = RefinementPlan::halve_both({0.2, 0.1}, 2);
  CHECK(b.ladder[1].h == doctest::Approx(0.1));
  CHECK(b.ladder[1].r == doctest::Approx(0.05));
  CHECK_NOTHROW(b.validate());

  RefinementPlan p;
  CHECK_THROWS(p.validate());
  p.ladder = {{0.1, 0.1}, {0.1, 0.1}};
  CHECK_THROWS(p.validate());
  p.ladder = {{0.1, 0.1}, {0.05, 0.2}};
  CHECK_THROWS(p.validate());
  p.ladder = {{0.1, 0.1}, {0.05, 0.1}};
  CHECK_NOTHROW(p.validate());
  p.t_min = -1;
  CHECK_THROWS(p.validate());
  CHECK_THROWS(RefinementPlan::halve_h({0.1, 0.1}, 0));

  OUParams o;
  CHECK_THROWS_AS(error_ladder(o, kB, 1.0, RefinementPlan::halve_h({0.1, 0.1}, 2), Metric::Rms),
                  std::invalid_argument);
}

TEST_CASE("analytic lattice fields") {
  GridSpec g;
  g.h = 0.1;
  g.Theta = 1;
  g.r1 = g.r2 = 0.1;
  const auto a = analytic_output(kSym, kB, g);
  CHECK(a.f1.at(0, 5) == 0.0);
  CHECK(a.f1.at(3, 0) == 0.0);
  CHECK(a.f1.at(3, 5) == doctest::Approx(f_joint(Component::One, 0.7, 0.5, kSym, kB)));
  CHECK(a.f2.at(3, 5) == doctest::Approx(a.f1.at(3, 5)));
}

TEST_CASE("error ladders decrease and the joint ladder is bounded by the single ones") {
  const double Theta = 2.0;
  const auto hl = error_ladder(kSym, kB, Theta, RefinementPlan::halve_h({0.2, 0.2}, 3), Metric::Rms);
  const auto rl = error_ladder(kSym, kB, Theta, RefinementPlan::halve_r({0.2, 0.2}, 3), Metric::Rms);
  const auto jl = error_ladder(kSym, kB, Theta, RefinementPlan::halve_both({0.2, 0.2}, 3), Metric::Rms);
  check_non_increasing(hl);
  check_non_increasing(rl);
  check_non_increasing(jl);
  for (std::size_t i = 0; i < jl.size(); ++i) CHECK(jl[i].error <= 2 * (hl[i].error + rl[i].error));
  // The shared lattice stops at the shallowest rung, whose depth depends on r.
  CHECK(std::abs(hl[0].points - jl[0].points) <= hl[0].points / 20);

  // Against a finer solution at the same h the r error is visible on its own.
  auto plan = RefinementPlan::halve_r({0.1, 0.4}, 3, ReferenceKind::FineGrid);
  plan.fine = Rung{0.1, 0.05};
  const auto rf = error_ladder(kSym, kB, Theta, plan, Metric::Rms);
  check_non_increasing(rf);
  CHECK(rf.back().error < 0.75 * rf.front().error);

  const auto mx = error_ladder(kSym, kB, Theta, RefinementPlan::halve_h({0.2, 0.2}, 2), Metric::MaxAbs);
  const auto ms = error_ladder(kSym, kB, Theta, RefinementPlan::halve_h({0.2, 0.2}, 2), Metric::MSE);
  CHECK(ms[0].error == doctest::Approx(hl[0].error * hl[0].error).epsilon(1e-10));
  CHECK(mx[0].error >= hl[0].error);
}

TEST_CASE("ladder table and metric names") {
  std::vector<LadderRow> rows{{0.1, 0.05, Metric::Rms, 0.25, 10, 0}, {0.05, 0.05, Metric::Rms, 0.125, 10, 0}};
  std::ostringstream os;
  write_ladder_csv(os, rows);
  CHECK(os.str() == "h,r,metric,error\n0.10000000000000001,0.050000000000000003,rms,0.25\n"
                    "0.050000000000000003,0.050000000000000003,rms,0.125\n");
  CHECK(metric_from_string("maxabs") == Metric::MaxAbs);
  CHECK(metric_from_string("mse") == Metric::MSE);
  CHECK(std::string(to_string(Metric::Rms)) == "rms");
  CHECK_THROWS(metric_from_string("l1"));
}

}
