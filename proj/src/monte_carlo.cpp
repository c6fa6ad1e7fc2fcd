#include "fpt/monte_carlo.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "fpt/special_fns.hpp"
#include "parallel.hpp"

namespace fpt {

void SimConfig::validate() const {
  if (n_paths < 1) throw std::invalid_argument("simulation: n_paths must be at least 1");
  if (!(step > 0) || !std::isfinite(step)) throw std::invalid_argument("simulation: step must be positive");
  if (!(horizon >= step) || !std::isfinite(horizon))
    throw std::invalid_argument("simulation: horizon must be at least one step");
  if (threads < 1) throw std::invalid_argument("simulation: threads must be positive");
}

const char* to_string(FirstCrossing f) {
  switch (f) {
    case FirstCrossing::One: return "1";
    case FirstCrossing::Two: return "2";
    case FirstCrossing::Tie: return "tie";
  }
  return "?";
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based uniforms: every draw is a pure function of (seed, path, step, slot), so streams
// are reproducible under any schedule and stay coupled when options change which draws are used.
class PathRng {
 public:
  PathRng(std::uint64_t seed, std::uint64_t path) : key_(mix64(mix64(seed) ^ path)) {}

  // Uniform on (0, 1).
  double uniform(std::uint64_t step, unsigned slot) const {
    const std::uint64_t h = mix64(key_ ^ mix64(step * 16 + slot));
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
  }

  std::array<double, 2> normals(std::uint64_t step) const {
    const double r = std::sqrt(-2.0 * std::log(uniform(step, 0)));
    const double a = 2.0 * M_PI * uniform(step, 1);
    return {r * std::cos(a), r * std::sin(a)};
  }

  double normal(std::uint64_t step, unsigned slot) const {
    return std::sqrt(-2.0 * std::log(uniform(step, slot))) * std::cos(2.0 * M_PI * uniform(step, slot + 1));
  }

 private:
  std::uint64_t key_;
};

// Inverse Gaussian draw (Michael, Schucany and Haas) with a cancellation-free root.
double sample_inverse_gaussian(double mean, double shape, double z, double u) {
  const double y = z * z;
  const double my = mean * y;
  const double s = std::sqrt(4.0 * mean * shape * y + my * my);
  const double x = 4.0 * mean * mean * shape * y / ((my + s) * (my + s));
  const double r = (y == 0.0) ? mean : x;
  return u <= mean / (mean + r) ? r : mean * mean / r;
}

// Fraction of the step at which a Brownian bridge from B - d1 to B - d2 with total variance v
// first reaches B, given that it does. Time-changing the bridge into a Brownian motion turns the
// question into the hitting time s of d1 by a motion with drift |d2| / v.
double bridge_hit_fraction(double d1, double d2, double v, double z, double u) {
  double s;
  if (d1 <= 0) return 0.0;
  if (d2 == 0.0) {
    s = d1 * d1 / std::max(z * z, 1e-300);
  } else {
    const double nu = std::abs(d2) / v;
    s = sample_inverse_gaussian(d1 / nu, d1 * d1, z, u);
  }
  return s / (v + s);
}

struct StepLaw {
  Mat2 chol;
  std::array<double, 2> var;  // per-component step variance used by the bridge test
};

StepLaw step_law(const Model& model, double dt) {
  const GaussianTransition st = em_step_distribution(model, start_point(model), dt);
  return {cholesky(st.cov), {st.cov.a11, st.cov.a22}};
}

FPTSample simulate_path(const Model& model, const Boundary& b, const SimConfig& cfg, long path,
                        const StepLaw& full, const StepLaw& last, double last_dt, long n_steps) {
  const PathRng rng(cfg.seed, static_cast<std::uint64_t>(path));
  const bool crossing = b.kind == BoundaryKind::Crossing;
  Vec2 x = start_point(model);
  bool alive[2] = {true, true};
  double when[2] = {cfg.horizon, cfg.horizon};
  FPTSample s;
  bool first_set = false;

  for (long n = 0; n < n_steps && (alive[0] || alive[1]); ++n) {
    const double t = n * cfg.step;
    const bool final_step = n == n_steps - 1;
    const double dt = final_step ? last_dt : cfg.step;
    const StepLaw& law = final_step ? last : full;
    const GaussianTransition st = em_step_distribution(model, x, dt);
    const auto z = rng.normals(static_cast<std::uint64_t>(n));
    Vec2 xn{st.mean[0] + law.chol.a11 * z[0],
            st.mean[1] + law.chol.a21 * z[0] + law.chol.a22 * z[1]};

    bool hit[2] = {false, false};
    double hit_time[2] = {0, 0};
    for (int i = 0; i < 2; ++i) {
      if (!alive[i]) continue;
      const double B = i == 0 ? b.B1 : b.B2;
      const double d1 = B - x[i], d2 = B - xn[i];
      const double u = rng.uniform(static_cast<std::uint64_t>(n), 2 + i);
      if (d2 <= 0) {
        hit[i] = true;
      } else if (cfg.bridge_correction) {
        hit[i] = u < std::exp(-2.0 * d1 * d2 / law.var[i]);
      }
      if (hit[i]) {
        double frac = 1.0;
        if (cfg.interpolate_time) {
          const unsigned slot = 4 + 4 * i;
          frac = bridge_hit_fraction(d1, d2, law.var[i], rng.normal(static_cast<std::uint64_t>(n), slot),
                                     rng.uniform(static_cast<std::uint64_t>(n), slot + 2));
        }
        hit_time[i] = t + frac * dt;
      }
    }

    if (hit[0] && hit[1] && !cfg.refine_ties) hit_time[0] = hit_time[1] = t + dt;
    for (int i = 0; i < 2; ++i) {
      if (!hit[i]) continue;
      alive[i] = false;
      when[i] = std::clamp(hit_time[i], std::nextafter(t, cfg.horizon), final_step ? cfg.horizon : t + dt);
    }
    if (!first_set && (hit[0] || hit[1])) {
      first_set = true;
      if (hit[0] && hit[1]) {
        s.first = when[0] < when[1] ? FirstCrossing::One
                  : when[1] < when[0] ? FirstCrossing::Two
                                      : FirstCrossing::Tie;
      } else {
        s.first = hit[0] ? FirstCrossing::One : FirstCrossing::Two;
      }
    }

    for (int i = 0; i < 2; ++i) {
      if (alive[i] || crossing) x[i] = xn[i];
      else x[i] = i == 0 ? b.B1 : b.B2;  // absorbed
    }
  }

  s.t1 = when[0];
  s.t2 = when[1];
  s.censored1 = alive[0];
  s.censored2 = alive[1];
  if (!first_set) s.first = FirstCrossing::Tie;
  if (first_set && s.censored1 != s.censored2)
    s.first = s.censored1 ? FirstCrossing::Two : FirstCrossing::One;
  return s;
}

}  // namespace

std::vector<FPTSample> simulate(const Model& model, const Boundary& b, const SimConfig& cfg) {
  std::visit([](const auto& p) { p.validate(); }, model);
  validate_boundary(model, b);
  cfg.validate();
  const long n_steps = static_cast<long>(std::ceil(cfg.horizon / cfg.step - 1e-9));
  // A horizon that is a whole number of steps keeps the full step law on the final step, so
  // runs that differ only in horizon stay coupled bit for bit.
  double last_dt = cfg.horizon - static_cast<double>(n_steps - 1) * cfg.step;
  if (std::abs(last_dt - cfg.step) <= 1e-9 * cfg.step) last_dt = cfg.step;
  const StepLaw full = step_law(model, cfg.step);
  const StepLaw last = step_law(model, last_dt);
  std::vector<FPTSample> out(static_cast<std::size_t>(cfg.n_paths));
  const long chunk = 4096;
  const long n_chunks = (cfg.n_paths + chunk - 1) / chunk;
  detail::parallel_chunks(static_cast<int>(n_chunks), cfg.threads, [&](int lo, int hi) {
    for (long c = lo; c < hi; ++c)
      for (long p = c * chunk; p < std::min(cfg.n_paths, (c + 1) * chunk); ++p)
        out[p] = simulate_path(model, b, cfg, p, full, last, last_dt, n_steps);
  });
  return out;
}

DensityField density_estimate(const std::vector<FPTSample>& samples, const std::vector<double>& edges,
                              std::optional<double> bandwidth) {
  if (samples.empty()) throw std::invalid_argument("density_estimate: no samples");
  long complete = 0;
  for (const auto& s : samples) complete += s.complete();
  if (complete < 1000) throw std::invalid_argument("density_estimate: fewer than 1000 complete pairs");
  if (edges.size() < 2) throw std::invalid_argument("density_estimate: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("density_estimate: edges must increase");
  const double n = static_cast<double>(samples.size());

  if (bandwidth) {
    const double bw = *bandwidth;
    if (!(bw > 0)) throw std::invalid_argument("density_estimate: bandwidth must be positive");
    DensityField f(edges, edges);
    const std::size_t G = edges.size();
    std::vector<double> k1(G), k2(G);
    for (const auto& s : samples) {
      if (!s.complete()) continue;
      for (std::size_t i = 0; i < G; ++i) {
        k1[i] = normal_pdf(edges[i], s.t1, bw);
        k2[i] = normal_pdf(edges[i], s.t2, bw);
      }
      for (std::size_t i = 0; i < G; ++i) {
        if (k1[i] == 0.0) continue;
        for (std::size_t j = 0; j < G; ++j) f.at(i, j) += k1[i] * k2[j];
      }
    }
    for (double& v : f.values) v /= n;
    f.meta["estimator"] = "gaussian kernel, bandwidth " + std::to_string(bw);
    return f;
  }

  std::vector<double> centres(edges.size() - 1);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) centres[i] = 0.5 * (edges[i] + edges[i + 1]);
  DensityField f(centres, centres);
  auto cell = [&](double t) -> long {
    if (t < edges.front() || t > edges.back()) return -1;
    const auto it = std::upper_bound(edges.begin(), edges.end(), t);
    const long i = static_cast<long>(it - edges.begin()) - 1;
    return std::min<long>(i, static_cast<long>(centres.size()) - 1);
  };
  for (const auto& s : samples) {
    if (!s.complete()) continue;
    const long i = cell(s.t1), j = cell(s.t2);
    if (i >= 0 && j >= 0) f.at(i, j) += 1.0;
  }
  for (std::size_t i = 0; i < centres.size(); ++i)
    for (std::size_t j = 0; j < centres.size(); ++j)
      f.at(i, j) /= n * (edges[i + 1] - edges[i]) * (edges[j + 1] - edges[j]);
  f.meta["estimator"] = "histogram";
  return f;
}

MseResult mse_detail(const DensityField& estimate, const JointReference& reference, bool exclude_diagonal) {
  if (!reference) throw std::invalid_argument("mse: missing reference");
  MseResult r;
  double acc = 0;
  for (std::size_t i = 0; i < estimate.axis1.size(); ++i) {
    for (std::size_t j = 0; j < estimate.axis2.size(); ++j) {
      const double t1 = estimate.axis1[i], t2 = estimate.axis2[j];
      if (exclude_diagonal && std::abs(t1 - t2) <= 1e-12 * std::max(std::abs(t1), 1.0)) continue;
      const double e = estimate.at(i, j);
      if (!std::isfinite(e)) throw NumericalError("mse: estimate has a non-finite cell");
      const double v = reference(t1, t2);
      if (!std::isfinite(v)) {
        ++r.skipped;
        continue;
      }
      acc += (e - v) * (e - v);
      ++r.cells;
    }
  }
  if (r.cells == 0) throw std::invalid_argument("mse: no comparable cells");
  r.value = acc / static_cast<double>(r.cells);
  return r;
}

double mse(const DensityField& estimate, const JointReference& reference, bool exclude_diagonal) {
  return mse_detail(estimate, reference, exclude_diagonal).value;
}

void write_samples_csv(std::ostream& os, const std::vector<FPTSample>& samples) {
  os << "t1,t2,first,censored1,censored2\n";
  const auto old = os.precision(17);
  for (const auto& s : samples)
    os << s.t1 << ',' << s.t2 << ',' << to_string(s.first) << ',' << s.censored1 << ',' << s.censored2 << '\n';
  os.precision(old);
}

}  // namespace fpt
