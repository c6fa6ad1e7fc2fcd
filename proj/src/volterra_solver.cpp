#include "fpt/volterra_solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

#include "fpt/special_fns.hpp"
#include "fpt/wiener_analytic.hpp"
#include "parallel.hpp"

namespace fpt {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Point of family f with free coordinate y.
Vec2 slice_point(const Boundary& b, Family f, double y) {
  return f == Family::One ? Vec2{y, b.B2} : Vec2{b.B1, y};
}

// Constants of the survival derivative along axis a for a fixed covariance.
struct DerivConst {
  int a, o;
  double sa, beta, csd;
};

DerivConst deriv_const(const Mat2& cov, int a) {
  const int o = 1 - a;
  const double vaa = cov(a, a), voo = cov(o, o), vao = cov(a, o);
  const double cvar = voo - vao * vao / vaa;
  if (!(vaa > 0) || !(cvar > 0)) throw NumericalError("kernel: transition covariance is singular");
  return {a, o, std::sqrt(vaa), vao / vaa, std::sqrt(cvar)};
}

// d/dx_a P(Z >= x) for Z ~ N(mean, cov) using the precomputed constants.
inline double survival_dx(const DerivConst& c, const Vec2& mean, const Vec2& x) {
  const double da = x[c.a] - mean[c.a];
  const double z = da / c.sa;
  const double w = (x[c.o] - mean[c.o] - c.beta * da) / c.csd;
  return -kInvSqrt2Pi / c.sa * std::exp(-0.5 * z * z) * 0.5 * std::erfc(w * 0.70710678118654752440);
}

inline double dot(const double* a, const double* b, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

int lattice_index(const GridSpec& g, double t, const char* what) {
  const double kd = t / g.h;
  const long k = std::lround(kd);
  if (std::abs(kd - static_cast<double>(k)) > 1e-7 || k < 0 || k > g.N())
    throw std::invalid_argument(std::string(what) + ": time is not a lattice time within the horizon");
  return static_cast<int>(k);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

double knot(const Boundary& b, const GridSpec& g, Family f, int u) { return b.B(f) - u * g.r(f); }

std::vector<double> knots(const Boundary& b, const GridSpec& g, Family f) {
  std::vector<double> y(g.m(f) + 1);
  for (int u = 0; u <= g.m(f); ++u) y[u] = knot(b, g, f, u);
  return y;
}

std::vector<double> times(const GridSpec& g) {
  std::vector<double> t(g.N() + 1);
  for (int k = 0; k <= g.N(); ++k) t[k] = g.t(k);
  return t;
}

std::vector<double> lattice_times(const GridSpec& grid, int stride) {
  require(stride >= 1, "lattice_times: stride must be positive");
  std::vector<double> t;
  for (int k = stride; k <= grid.N(); k += stride) t.push_back(grid.t(k));
  return t;
}

KernelCache::KernelCache(const Model& model, const Boundary& b, const GridSpec& grid, int threads)
    : N_(grid.N()), m1_(grid.m1), m2_(grid.m2) {
  grid.validate();
  require(m1_ >= 1 && m2_ >= 1, "kernel cache: truncation counts must be resolved");
  const int lags = std::max(N_ - 1, 0);
  for (Family t : {Family::One, Family::Two})
    for (Family s : {Family::One, Family::Two})
      tab_[idx(t)][idx(s)].assign(static_cast<std::size_t>(lags) * size(t) * size(s), 0.0);
  const auto kt = std::array{knots(b, grid, Family::One), knots(b, grid, Family::Two)};
  detail::parallel_chunks(lags, threads, [&](int lo, int hi) {
    for (int li = lo; li < hi; ++li) {
      const int lag = li + 1;
      const double dt = lag * grid.h;
      const Mat2 cov = transition(model, start_point(model), dt).cov;
      const DerivConst dc[2] = {deriv_const(cov, 0), deriv_const(cov, 1)};
      for (Family s : {Family::One, Family::Two}) {
        const int ns = size(s);
        for (int v = 0; v < ns; ++v) {
          const Vec2 mean = transition(model, slice_point(b, s, kt[idx(s)][v]), dt).mean;
          for (Family t : {Family::One, Family::Two}) {
            const int nt = size(t);
            double* base = tab_[idx(t)][idx(s)].data() + static_cast<std::size_t>(li) * nt * ns;
            for (int u = 0; u < nt; ++u)
              base[static_cast<std::size_t>(u) * ns + v] =
                  survival_dx(dc[idx(t)], mean, slice_point(b, t, kt[idx(t)][u]));
          }
        }
      }
    }
  });
}

const double* KernelCache::row(Family target, Family source, int lag, int u) const {
  const int nt = size(target), ns = size(source);
  return tab_[idx(target)][idx(source)].data() +
         (static_cast<std::size_t>(lag - 1) * nt + u) * ns;
}

std::size_t KernelCache::bytes() const {
  std::size_t n = 0;
  for (const auto& r : tab_)
    for (const auto& t : r) n += t.size() * sizeof(double);
  return n;
}

double lhs_derivative(Family i, double y, double t, const Model& model, const Boundary& b) {
  require(t > 0, "lhs_derivative: t must be positive");
  return bvn_survival_dx(idx(i) + 1, slice_point(b, i, y), transition(model, start_point(model), t));
}

double kernel(Family target, Family source, int lag, double target_y, double source_y,
              const Model& model, const Boundary& b, const GridSpec& grid) {
  require(lag >= 1, "kernel: lag must be at least 1");
  const Vec2 x = slice_point(b, target, target_y);
  const Vec2 src = slice_point(b, source, source_y);
  const int axis = idx(target) + 1;
  const double now = bvn_survival_dx(axis, x, transition(model, src, lag * grid.h));
  if (lag == 1) return now;
  return now - bvn_survival_dx(axis, x, transition(model, src, (lag - 1) * grid.h));
}

SolverOutput solve(const Model& model, const Boundary& b, const GridSpec& grid_in,
                   const SolverOptions& opt) {
  std::visit([](const auto& p) { p.validate(); }, model);
  validate_boundary(model, b);
  grid_in.validate();
  require(opt.threads >= 1, "solve: threads must be positive");
  const GridSpec grid = resolve_truncation(model, grid_in);
  const int N = grid.N();
  const int n1 = grid.m1 + 1, n2 = grid.m2 + 1;
  const double h = grid.h, r1 = grid.r1, r2 = grid.r2;

  SolverOutput out;
  out.grid = grid;

  auto t0 = std::chrono::steady_clock::now();
  const KernelCache cache(model, b, grid, opt.threads);
  out.diag.kernel_seconds = seconds_since(t0);
  out.diag.kernel_bytes = cache.bytes();

  // F[k * n + u]; row k = 0 stays zero.
  std::vector<double> F1(static_cast<std::size_t>(N + 1) * n1, 0.0);
  std::vector<double> F2(static_cast<std::size_t>(N + 1) * n2, 0.0);
  const auto y1 = knots(b, grid, Family::One);
  const auto y2 = knots(b, grid, Family::Two);

  t0 = std::chrono::steady_clock::now();
  const int items = n1 + n2;
  std::vector<double> acc(items);
  for (int k = 1; k <= N; ++k) {
    const Vec2 x0 = start_point(model);
    const GaussianTransition tr = transition(model, x0, grid.t(k));
    const DerivConst dc[2] = {deriv_const(tr.cov, 0), deriv_const(tr.cov, 1)};
    detail::parallel_chunks(items, opt.threads, [&](int lo, int hi) {
      for (int it = lo; it < hi; ++it) {
        const Family f = it < n1 ? Family::One : Family::Two;
        const int u = it < n1 ? it : it - n1;
        const double y = f == Family::One ? y1[u] : y2[u];
        acc[it] = -survival_dx(dc[idx(f)], tr.mean, slice_point(b, f, y)) / h;
      }
      for (int rho = 1; rho < k; ++rho) {
        const int lag = k - rho;
        const double* g1 = F1.data() + static_cast<std::size_t>(rho) * n1;
        const double* g2 = F2.data() + static_cast<std::size_t>(rho) * n2;
        const bool use_cross = !(opt.short_cross_sum && rho > k - 2);
        for (int it = lo; it < hi; ++it) {
          double a;
          if (it < n1) {
            a = r1 * dot(cache.row(Family::One, Family::One, lag, it), g1, n1) +
                r2 * dot(cache.row(Family::One, Family::Two, lag, it), g2, n2);
          } else {
            const int u = it - n1;
            a = r2 * dot(cache.row(Family::Two, Family::Two, lag, u), g2, n2);
            if (use_cross) a += r1 * dot(cache.row(Family::Two, Family::One, lag, u), g1, n1);
          }
          acc[it] += a;
        }
      }
    });
    for (int u = 0; u < n1; ++u) F1[static_cast<std::size_t>(k) * n1 + u] = acc[u];
    for (int u = 0; u < n2; ++u) F2[static_cast<std::size_t>(k) * n2 + u] = acc[n1 + u];
  }
  out.diag.recursion_seconds = seconds_since(t0);

  const auto tt = times(grid);
  out.f1 = DensityField(y1, tt);
  out.f2 = DensityField(y2, tt);
  for (int k = 0; k <= N; ++k) {
    for (int u = 0; u < n1; ++u) out.f1.at(u, k) = F1[static_cast<std::size_t>(k) * n1 + u];
    for (int u = 0; u < n2; ++u) out.f2.at(u, k) = F2[static_cast<std::size_t>(k) * n2 + u];
  }

  auto& d = out.diag;
  d.min_value = 0.0;
  for (Family f : {Family::One, Family::Two}) {
    const DensityField& fld = out.field(f);
    const double r = grid.r(f);
    double lvl1 = 0, lvl2 = 0;
    for (std::size_t u = 0; u < fld.axis1.size(); ++u) {
      for (int k = 1; k <= N; ++k) {
        const double v = fld.at(u, k);
        d.mass += h * r * v;
        if (v < 0) {
          ++d.negative_count;
          d.negative_mass += h * r * v;
          d.min_value = std::min(d.min_value, v);
        }
      }
      lvl1 = std::max(lvl1, std::abs(fld.at(u, 1)));
      if (N >= 2) lvl2 = std::max(lvl2, std::abs(fld.at(u, 2)));
    }
    d.t1_spike[idx(f)] = N >= 2 && lvl1 > 10.0 * lvl2;
  }
  for (auto& fld : {&out.f1, &out.f2}) {
    fld->meta["model"] = describe(model);
    fld->meta["B"] = std::to_string(b.B1) + "," + std::to_string(b.B2);
  }
  out.f1.meta["quantity"] = "density of (X1, T2) on the slice x2 = B2";
  out.f2.meta["quantity"] = "density of (X2, T1) on the slice x1 = B1";

  if (opt.compute_residuals) {
    const auto probes = opt.probes.empty() ? default_probes(model, b, grid) : opt.probes;
    d.residual = residual_volterra(out, model, b, probes);
  }
  return out;
}

std::vector<ResidualProbe> default_probes(const Model& model, const Boundary& b, const GridSpec& grid) {
  const int N = grid.N();
  const Mat2 q = transition(model, start_point(model), grid.Theta).cov;
  const double s1 = 0.5 * std::sqrt(q.a11), s2 = 0.5 * std::sqrt(q.a22);
  std::vector<ResidualProbe> probes;
  for (int k : {std::max(1, N / 4), std::max(1, N / 2), N}) {
    const double t = grid.t(k);
    for (double o : {0.5, 1.0}) {
      probes.push_back({ResidualEquation::SliceOne, {b.B1 + o * s1, b.B2}, t});
      probes.push_back({ResidualEquation::SliceTwo, {b.B1, b.B2 + o * s2}, t});
    }
    probes.push_back({ResidualEquation::Density, {b.B1 + s1, b.B2 + s2}, t});
    probes.push_back({ResidualEquation::Density, {b.B1 + s1, b.B2 - s2}, t});
    probes.push_back({ResidualEquation::Density, {b.B1 - s1, b.B2 + s2}, t});
  }
  return probes;
}

ResidualReport residual_volterra(const SolverOutput& out, const Model& model, const Boundary& b,
                                 const std::vector<ResidualProbe>& probes) {
  const GridSpec& g = out.grid;
  const double h = g.h;
  ResidualReport rep;
  double ss = 0;
  for (const auto& pr : probes) {
    const int k = lattice_index(g, pr.t, "residual_volterra");
    Vec2 x = pr.x;
    if (pr.eq == ResidualEquation::SliceOne) x[1] = b.B2;
    if (pr.eq == ResidualEquation::SliceTwo) x[0] = b.B1;
    const bool density = pr.eq == ResidualEquation::Density;
    const bool outside = density ? (x[0] > b.B1 || x[1] > b.B2)
                                 : (pr.eq == ResidualEquation::SliceOne ? x[0] > b.B1 : x[1] > b.B2);
    if (!outside) throw std::invalid_argument("residual_volterra: probe must lie outside the quadrant");
    if (!std::isfinite(x[0]) || !std::isfinite(x[1]))
      throw std::invalid_argument("residual_volterra: probe must be finite");
    double lhs = 0, rhs = 0;
    if (k > 0) {
      const GaussianTransition tr = transition(model, start_point(model), pr.t);
      lhs = density ? bvn_pdf(x, tr) : bvn_survival(x, tr);
    }
    for (int rho = 1; rho <= k; ++rho) {
      const int lag = k - rho;
      for (Family s : {Family::One, Family::Two}) {
        const DensityField& f = out.field(s);
        double part = 0;
        for (std::size_t v = 0; v < f.axis1.size(); ++v) {
          const double fv = f.at(v, rho);
          if (fv == 0.0) continue;
          const Vec2 src = slice_point(b, s, f.axis1[v]);
          // At elapsed zero the survival is an indicator and the density a point mass, both
          // vanishing at probes outside the closed quadrant.
          if (lag == 0) continue;
          const GaussianTransition tr = transition(model, src, lag * h);
          const double ker = density ? bvn_pdf(x, tr) : bvn_survival(x, tr);
          part += ker * fv;
        }
        rhs += h * g.r(s) * part;
      }
    }
    const double res = std::abs(lhs - rhs);
    rep.per_probe.push_back(res);
    rep.sup = std::max(rep.sup, res);
    ss += res * res;
  }
  rep.l2 = probes.empty() ? 0.0 : std::sqrt(ss / probes.size());
  return rep;
}

namespace {

void check_assembly_grid(const GridSpec& g, const std::vector<double>& t_grid, std::vector<int>& ks) {
  ks.clear();
  for (double t : t_grid) {
    if (t > g.Theta + 1e-9 * g.Theta) throw std::invalid_argument("assemble: t_grid exceeds the horizon");
    const int k = lattice_index(g, t, "assemble");
    if (k == 0) throw std::invalid_argument("assemble: t_grid must be positive");
    ks.push_back(k);
  }
}

// Sum over interior knots u >= 1 of weight(u) * field(u, k).
template <class W>
double slice_sum(const DensityField& f, int k, double r, W&& weight) {
  double s = 0;
  for (std::size_t u = 1; u < f.axis1.size(); ++u) {
    const double v = f.at(u, k);
    if (v != 0.0) s += weight(u) * v;
  }
  return r * s;
}

}  // namespace

DensityField assemble_absorbing(const SolverOutput& out, const Model& model, const Boundary& b,
                                const std::vector<double>& t_grid, const ConditionalFpt& fpt) {
  (void)model;
  if (b.kind != BoundaryKind::Absorbing)
    throw std::invalid_argument("assemble_absorbing: boundary must be absorbing");
  require(static_cast<bool>(fpt), "assemble_absorbing: missing conditional density");
  std::vector<int> ks;
  check_assembly_grid(out.grid, t_grid, ks);
  DensityField res(t_grid, t_grid);
  for (std::size_t a = 0; a < ks.size(); ++a) {
    for (std::size_t c = 0; c < ks.size(); ++c) {
      const double t1 = t_grid[a], t2 = t_grid[c];
      double v = 0;
      if (ks[a] < ks[c]) {
        v = slice_sum(out.f2, ks[a], out.grid.r2,
                      [&](std::size_t u) { return fpt(Component::Two, t2, out.f2.axis1[u], t1); });
      } else if (ks[a] > ks[c]) {
        v = slice_sum(out.f1, ks[c], out.grid.r1,
                      [&](std::size_t u) { return fpt(Component::One, t1, out.f1.axis1[u], t2); });
      }
      res.at(a, c) = v;
    }
  }
  res.meta["quantity"] = "joint density of (T1, T2), absorbing levels";
  return res;
}

DensityField assemble_crossing(const SolverOutput& out, const Model& model, const Boundary& b,
                               const std::vector<double>& t_grid, const CrossDensity& cross,
                               const QuadSpec& quad) {
  if (b.kind != BoundaryKind::Crossing)
    throw std::invalid_argument("assemble_crossing: boundary must be crossing");
  require(static_cast<bool>(cross), "assemble_crossing: missing cross density");
  quad.validate();
  std::vector<int> ks;
  check_assembly_grid(out.grid, t_grid, ks);

  // Integral over the free coordinate of the component that already crossed, restarted at its level.
  auto inner = [&](Component j, double t_late, double x_slice, double t_early) {
    const Component i = other(j);
    const Marginal m{model, i};
    const double dt = t_late - t_early;
    const double mid = m.mean(b.B(i), dt);
    const double half = quad.c * std::sqrt(m.var(dt));
    const double lo = mid - half, step = 2 * half / quad.n;
    double s = 0;
    for (int n = 0; n <= quad.n; ++n) {
      const double w = (n == 0 || n == quad.n) ? 0.5 : 1.0;
      const double v = cross(j, lo + n * step, t_late, x_slice, t_early);
      if (!std::isfinite(v)) throw NumericalError("assemble_crossing: cross density returned a non-finite value");
      s += w * v;
    }
    return s * step;
  };

  DensityField res(t_grid, t_grid);
  for (std::size_t a = 0; a < ks.size(); ++a) {
    for (std::size_t c = 0; c < ks.size(); ++c) {
      const double t1 = t_grid[a], t2 = t_grid[c];
      double v = 0;
      if (ks[a] < ks[c]) {
        v = slice_sum(out.f2, ks[a], out.grid.r2,
                      [&](std::size_t u) { return inner(Component::Two, t2, out.f2.axis1[u], t1); });
      } else if (ks[a] > ks[c]) {
        v = slice_sum(out.f1, ks[c], out.grid.r1,
                      [&](std::size_t u) { return inner(Component::One, t1, out.f1.axis1[u], t2); });
      }
      res.at(a, c) = v;
    }
  }
  res.meta["quantity"] = "joint density of (T1, T2), crossing levels";
  return res;
}

ConditionalFpt wiener_conditional_fpt(const WienerParams& p, const Boundary& b) {
  return [p, b](Component j, double t_late, double x_cross, double t_early) {
    return f_fpt_univ(j, t_late, p, b, StartOverride{x_cross, t_early});
  };
}

namespace {

// P(X(tau) > B | X(0) = B) at the midpoints (n + 1/2) h, n = 0..count-1.
std::vector<double> fortet_kernel(const Marginal& m, double B, double h, int count) {
  std::vector<double> k(count);
  for (int n = 0; n < count; ++n) {
    const double tau = (n + 0.5) * h;
    k[n] = normal_sf((B - m.mean(B, tau)) / std::sqrt(m.var(tau)));
  }
  return k;
}

// Node values f(t_k), k = 0..N, of the passage density from y at elapsed 0.
std::vector<double> fortet_nodes(const Marginal& m, double B, double y, double h, int N,
                                 const std::vector<double>& kern) {
  std::vector<double> mid(N + 2, 0.0);  // mid[r] ~ f((r - 1/2) h)
  for (int k = 1; k <= N + 1; ++k) {
    const double tk = k * h;
    const double F = normal_sf((B - m.mean(y, tk)) / std::sqrt(m.var(tk)));
    double s = 0;
    for (int r = 1; r < k; ++r) s += kern[k - r] * mid[r];
    mid[k] = (F / h - s) / kern[0];
  }
  std::vector<double> node(N + 1, 0.0);
  for (int k = 1; k <= N; ++k) node[k] = std::max(0.0, 0.5 * (mid[k] + mid[k + 1]));
  return node;
}

}  // namespace

std::vector<double> fpt_univ_numeric(const Marginal& model1d, double B, double y, double s,
                                     const std::vector<double>& t_grid, double h) {
  require(B > y, "fpt_univ_numeric: level must lie above the start");
  require(h > 0 && std::isfinite(h), "fpt_univ_numeric: h must be positive");
  double t_end = s;
  for (double t : t_grid) {
    require(std::isfinite(t), "fpt_univ_numeric: t_grid must be finite");
    t_end = std::max(t_end, t);
  }
  const int N = static_cast<int>(std::ceil((t_end - s) / h - 1e-9)) + 1;
  const auto kern = fortet_kernel(model1d, B, h, N + 2);
  const auto node = fortet_nodes(model1d, B, y, h, N, kern);
  std::vector<double> res(t_grid.size(), 0.0);
  for (std::size_t n = 0; n < t_grid.size(); ++n) {
    const double e = (t_grid[n] - s) / h;
    if (e <= 0) continue;
    const int k = std::min(static_cast<int>(e), N - 1);
    const double w = e - k;
    res[n] = (1 - w) * node[k] + w * node[k + 1];
  }
  return res;
}

LatticeConditionalFpt::LatticeConditionalFpt(const Model& model, const Boundary& b_in,
                                             const GridSpec& grid)
    : b_(b_in), g_(resolve_truncation(model, grid)) {
  g_.validate();
  const int N = g_.N();
  for (Component j : {Component::One, Component::Two}) {
    const Marginal m{model, j};
    const double B = b_.B(j);
    const auto kern = fortet_kernel(m, B, g_.h, N + 2);
    auto& tab = tab_[idx(j)];
    tab.assign(g_.m(j) + 1, {});
    tab[0].assign(N + 1, 0.0);
    for (int u = 1; u <= g_.m(j); ++u) tab[u] = fortet_nodes(m, B, knot(b_, g_, j, u), g_.h, N, kern);
  }
}

double LatticeConditionalFpt::operator()(Component j, double t_late, double x_cross,
                                         double t_early) const {
  const auto& tab = tab_[idx(j)];
  const double ud = (b_.B(j) - x_cross) / g_.r(j);
  const long u = std::lround(ud);
  if (std::abs(ud - static_cast<double>(u)) > 1e-7 || u < 0 || u >= static_cast<long>(tab.size()))
    throw std::invalid_argument("conditional passage density: start is not a lattice knot");
  if (t_late <= t_early) return 0.0;
  const int lag = lattice_index(g_, t_late - t_early, "conditional passage density");
  return tab[u][lag];
}

ConditionalFpt LatticeConditionalFpt::callable() const {
  auto self = std::make_shared<const LatticeConditionalFpt>(*this);
  return [self](Component j, double t_late, double x_cross, double t_early) {
    return (*self)(j, t_late, x_cross, t_early);
  };
}

}  // namespace fpt
