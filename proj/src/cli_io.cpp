#include "fpt/cli_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fpt/volterra_solver.hpp"
#include "fpt/wiener_analytic.hpp"

namespace fpt {

using json = nlohmann::json;

namespace {

// Strict view of one JSON object: every key must be consumed, types are checked.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
  }

  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      fail(at(key), "missing required number");
    }
    const json& v = raw(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    return v.get<double>();
  }

  long long integer(const std::string& key, std::optional<long long> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      fail(at(key), "missing required integer");
    }
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(at(key), "expected an integer");
    return v.get<long long>();
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) fail(at(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      fail(at(key), "missing required string");
    }
    const json& v = raw(key);
    if (!v.is_string()) fail(at(key), "expected a string");
    return v.get<std::string>();
  }

  Fields object(const std::string& key) { return Fields(raw(key), at(key)); }

  // Reports a misspelt key as unknown before any required key is found missing.
  void expect(std::initializer_list<const char*> allowed) const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }) ==
          allowed.end())
        fail(at(it.key()), "unknown key");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void checked(const std::string& where, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

Model parse_model(Fields m) {
  const bool w = m.has("wiener"), o = m.has("ou");
  if (w == o) Fields::fail(m.path(), "exactly one of 'wiener' or 'ou' is required");
  Model model;
  if (w) {
    Fields f = m.object("wiener");
    f.expect({"mu1", "mu2", "sigma1", "sigma2", "rho", "x01", "x02"});
    const double mu1 = f.number("mu1"), mu2 = f.number("mu2");
    const double s1 = f.number("sigma1"), s2 = f.number("sigma2"), rho = f.number("rho");
    const double x01 = f.number("x01", 0.0), x02 = f.number("x02", 0.0);
    f.finish();
    checked("model.wiener", [&] { model = WienerParams::make(mu1, mu2, s1, s2, rho, x01, x02); });
  } else {
    Fields f = m.object("ou");
    f.expect({"mu1", "mu2", "theta", "sigma11", "sigma12", "sigma22", "x01", "x02"});
    OUParams p;
    p.mu1 = f.number("mu1");
    p.mu2 = f.number("mu2");
    p.theta = f.number("theta");
    p.sigma11 = f.number("sigma11");
    p.sigma12 = f.number("sigma12");
    p.sigma22 = f.number("sigma22");
    p.x01 = f.number("x01", 0.0);
    p.x02 = f.number("x02", 0.0);
    f.finish();
    checked("model.ou", [&] { p.validate(); });
    model = p;
  }
  m.finish();
  return model;
}

BoundaryKind kind_from_string(const std::string& s, const std::string& where) {
  if (s == "absorbing") return BoundaryKind::Absorbing;
  if (s == "crossing") return BoundaryKind::Crossing;
  Fields::fail(where, "expected 'absorbing' or 'crossing'");
}

ReferenceKind reference_from_string(const std::string& s, const std::string& where) {
  if (s == "analytic") return ReferenceKind::AnalyticWiener;
  if (s == "fine") return ReferenceKind::FineGrid;
  Fields::fail(where, "expected 'analytic' or 'fine'");
}

Rung parse_rung(Fields f) {
  f.expect({"h", "r"});
  Rung r{f.number("h"), f.number("r")};
  f.finish();
  return r;
}

RefinementConfig parse_refinement(Fields f) {
  f.expect({"refine", "reference", "metric", "ladder", "base", "rungs", "fine", "t_min"});
  RefinementConfig rc;
  rc.refine = f.string("refine", std::string("h"));
  if (rc.refine != "h" && rc.refine != "r" && rc.refine != "both")
    Fields::fail(f.at("refine"), "expected 'h', 'r' or 'both'");
  const auto ref = reference_from_string(f.string("reference", std::string("analytic")), f.at("reference"));
  checked(f.at("metric"), [&] { rc.metric = metric_from_string(f.string("metric", std::string("rms"))); });
  if (f.has("ladder")) {
    const json& l = f.raw("ladder");
    if (!l.is_array()) Fields::fail(f.at("ladder"), "expected an array of {h, r}");
    for (std::size_t i = 0; i < l.size(); ++i)
      rc.plan.ladder.push_back(parse_rung(Fields(l[i], f.at("ladder") + "[" + std::to_string(i) + "]")));
    if (f.has("base") || f.has("rungs")) Fields::fail(f.at("ladder"), "give either 'ladder' or 'base' and 'rungs'");
    if (!rc.plan.ladder.empty()) rc.plan.base = rc.plan.ladder.front();
    rc.plan.reference = ref;
  } else {
    const Rung base = parse_rung(f.object("base"));
    const long long rungs = f.integer("rungs", 4);
    if (rungs < 1 || rungs > 12) Fields::fail(f.at("rungs"), "expected 1..12");
    const int n = static_cast<int>(rungs);
    rc.plan = rc.refine == "h"   ? RefinementPlan::halve_h(base, n, ref)
              : rc.refine == "r" ? RefinementPlan::halve_r(base, n, ref)
                                 : RefinementPlan::halve_both(base, n, ref);
  }
  if (f.has("fine")) rc.plan.fine = parse_rung(f.object("fine"));
  rc.plan.t_min = f.number("t_min", 0.2);
  f.finish();
  checked("refinement", [&] { rc.plan.validate(); });
  return rc;
}

json rung_json(const Rung& r) { return {{"h", r.h}, {"r", r.r}}; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string ext(OutputFormat f) { return f == OutputFormat::Csv ? ".csv" : ".json"; }

std::filesystem::path prepare_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.output.dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

std::string write_field(const RunConfig& cfg, const std::filesystem::path& dir, const std::string& stem,
                        const DensityField& f, const Provenance& p, const std::string& c1,
                        const std::string& c2) {
  const auto path = dir / (stem + ext(cfg.output.format));
  auto os = open_out(path);
  if (cfg.output.format == OutputFormat::Csv) write_field_csv(os, f, p, c1, c2);
  else write_field_json(os, f, p, c1, c2);
  return path.string();
}

std::string write_json(const std::filesystem::path& dir, const std::string& name, json j, const Provenance& p) {
  j["provenance"] = {{"version", FPT2D_VERSION}, {"config_hash", p.hash}, {"command", p.command}};
  const auto path = dir / name;
  auto os = open_out(path);
  os << j.dump(2) << '\n';
  return path.string();
}

// Probability mass of the assembled field by the product rectangle rule, plus two summaries.
struct JointSummary {
  double mass = 0, near_diagonal = 0, t1_after_t2 = 0;
};

JointSummary summarize(const DensityField& f, double h, double band) {
  JointSummary s;
  for (std::size_t i = 0; i < f.axis1.size(); ++i)
    for (std::size_t j = 0; j < f.axis2.size(); ++j) {
      const double v = f.at(i, j);
      if (!std::isfinite(v)) continue;
      const double m = v * h * h;
      s.mass += m;
      if (std::abs(f.axis1[i] - f.axis2[j]) <= band) s.near_diagonal += m;
      if (f.axis1[i] > f.axis2[j]) s.t1_after_t2 += m;
    }
  return s;
}

}  // namespace

OutputFormat format_from_string(const std::string& s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw ConfigError("format: expected 'csv' or 'json'");
}

void RunConfig::validate() const {
  checked("model", [&] { std::visit([](const auto& p) { p.validate(); }, model); });
  checked("boundary", [&] { validate_boundary(model, boundary); });
  checked("grid", [&] { grid.validate(); });
  checked("quad", [&] { quad.validate(); });
  if (sim) checked("sim", [&] { sim->validate(); });
  if (refinement) checked("refinement", [&] { refinement->plan.validate(); });
  if (output.dir.empty()) throw ConfigError("output.dir: must not be empty");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    const auto pos = msg.find("parse error");
    throw ConfigError(origin + ": " + (pos == std::string::npos ? msg : msg.substr(pos)));
  }
  RunConfig cfg;
  try {
    Fields top(j, "");
    top.expect({"model", "boundary", "grid", "quad", "sim", "output", "refinement"});
    cfg.model = parse_model(top.object("model"));

    Fields b = top.object("boundary");
    b.expect({"B1", "B2", "kind"});
    cfg.boundary.B1 = b.number("B1");
    cfg.boundary.B2 = b.number("B2");
    cfg.boundary.kind = kind_from_string(b.string("kind", std::string("absorbing")), b.at("kind"));
    b.finish();

    Fields g = top.object("grid");
    g.expect({"h", "Theta", "r1", "r2", "m1", "m2"});
    cfg.grid.h = g.number("h");
    cfg.grid.Theta = g.number("Theta");
    cfg.grid.r1 = g.number("r1");
    cfg.grid.r2 = g.number("r2");
    cfg.grid.m1 = static_cast<int>(g.integer("m1", 0));
    cfg.grid.m2 = static_cast<int>(g.integer("m2", 0));
    g.finish();

    if (top.has("quad")) {
      Fields q = top.object("quad");
      q.expect({"c", "n"});
      cfg.quad.c = q.number("c", cfg.quad.c);
      cfg.quad.n = static_cast<int>(q.integer("n", cfg.quad.n));
      q.finish();
    }
    if (top.has("sim")) {
      Fields s = top.object("sim");
      s.expect({"n_paths", "step", "horizon", "seed", "bridge_correction", "interpolate_time", "refine_ties"});
      SimConfig sc;
      sc.n_paths = static_cast<long>(s.integer("n_paths", sc.n_paths));
      sc.step = s.number("step", sc.step);
      sc.horizon = s.number("horizon", cfg.grid.Theta);
      sc.seed = s.u64("seed", sc.seed);
      sc.bridge_correction = s.boolean("bridge_correction", sc.bridge_correction);
      sc.interpolate_time = s.boolean("interpolate_time", sc.interpolate_time);
      sc.refine_ties = s.boolean("refine_ties", sc.refine_ties);
      s.finish();
      cfg.sim = sc;
    }
    if (top.has("output")) {
      Fields o = top.object("output");
      o.expect({"dir", "format"});
      cfg.output.dir = o.string("dir", cfg.output.dir);
      cfg.output.format = format_from_string(o.string("format", std::string("csv")));
      o.finish();
    }
    if (top.has("refinement")) cfg.refinement = parse_refinement(top.object("refinement"));
    top.finish();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string canonical_json(const RunConfig& cfg) {
  json j;
  if (const auto* w = std::get_if<WienerParams>(&cfg.model)) {
    j["model"]["wiener"] = {{"mu1", w->mu1}, {"mu2", w->mu2}, {"sigma1", w->sigma1}, {"sigma2", w->sigma2},
                            {"rho", w->rho}, {"x01", w->x01}, {"x02", w->x02}};
  } else {
    const auto& o = std::get<OUParams>(cfg.model);
    j["model"]["ou"] = {{"mu1", o.mu1}, {"mu2", o.mu2}, {"theta", o.theta}, {"sigma11", o.sigma11},
                        {"sigma12", o.sigma12}, {"sigma22", o.sigma22}, {"x01", o.x01}, {"x02", o.x02}};
  }
  j["boundary"] = {{"B1", cfg.boundary.B1}, {"B2", cfg.boundary.B2},
                   {"kind", cfg.boundary.kind == BoundaryKind::Absorbing ? "absorbing" : "crossing"}};
  j["grid"] = {{"h", cfg.grid.h}, {"Theta", cfg.grid.Theta}, {"r1", cfg.grid.r1}, {"r2", cfg.grid.r2},
               {"m1", cfg.grid.m1}, {"m2", cfg.grid.m2}};
  j["quad"] = {{"c", cfg.quad.c}, {"n", cfg.quad.n}};
  if (cfg.sim) {
    const auto& s = *cfg.sim;
    j["sim"] = {{"n_paths", s.n_paths}, {"step", s.step}, {"horizon", s.horizon}, {"seed", s.seed},
                {"bridge_correction", s.bridge_correction}, {"interpolate_time", s.interpolate_time},
                {"refine_ties", s.refine_ties}};
  }
  if (cfg.refinement) {
    const auto& r = *cfg.refinement;
    json ladder = json::array();
    for (const auto& g : r.plan.ladder) ladder.push_back(rung_json(g));
    j["refinement"] = {{"ladder", ladder},
                       {"reference", r.plan.reference == ReferenceKind::AnalyticWiener ? "analytic" : "fine"},
                       {"metric", to_string(r.metric)}, {"refine", r.refine}, {"t_min", r.plan.t_min}};
    if (r.plan.fine) j["refinement"]["fine"] = rung_json(*r.plan.fine);
  }
  return j.dump();
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(cfg))));
  return buf;
}

void write_provenance(std::ostream& os, const Provenance& p) {
  os << "# fpt2d " << FPT2D_VERSION << '\n';
  os << "# config_hash " << p.hash << '\n';
  os << "# command " << p.command << '\n';
}

void write_field_csv(std::ostream& os, const DensityField& f, const Provenance& p, const std::string& c1,
                     const std::string& c2) {
  write_provenance(os, p);
  for (const auto& [k, v] : f.meta) os << "# " << k << ": " << v << '\n';
  os << c1 << ',' << c2 << ",density\n";
  for (std::size_t i = 0; i < f.axis1.size(); ++i)
    for (std::size_t j = 0; j < f.axis2.size(); ++j) {
      const double v = f.at(i, j);
      os << fmt(f.axis1[i]) << ',' << fmt(f.axis2[j]) << ',';
      if (std::isfinite(v)) os << fmt(v);
      os << '\n';
    }
}

void write_field_json(std::ostream& os, const DensityField& f, const Provenance& p, const std::string& c1,
                      const std::string& c2) {
  json j;
  j["provenance"] = {{"version", FPT2D_VERSION}, {"config_hash", p.hash}, {"command", p.command}};
  j["meta"] = f.meta;
  j["axes"] = {c1, c2};
  j[c1] = f.axis1;
  j[c2] = f.axis2;
  json rows = json::array();
  for (std::size_t i = 0; i < f.axis1.size(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < f.axis2.size(); ++k) row.push_back(finite_or_null(f.at(i, k)));
    rows.push_back(std::move(row));
  }
  j["density"] = std::move(rows);
  os << j.dump() << '\n';
}

std::vector<std::string> cmd_analytic(const RunConfig& cfg, const Provenance& p, int) {
  const auto* w = std::get_if<WienerParams>(&cfg.model);
  if (!w) throw ConfigError("analytic: no closed form exists for the OU model; use the solve command");
  if (cfg.boundary.kind != BoundaryKind::Absorbing)
    throw ConfigError("analytic: closed forms cover absorbing levels only");
  const auto dir = prepare_dir(cfg);
  const auto tg = lattice_times(cfg.grid);
  WienerJointReference ref(*w, cfg.boundary, cfg.grid.Theta, cfg.quad);
  DensityField joint(tg, tg);
  for (std::size_t i = 0; i < tg.size(); ++i)
    for (std::size_t j = 0; j < tg.size(); ++j) joint.at(i, j) = ref(tg[i], tg[j]);
  joint.meta["quantity"] = "joint density of (T1, T2), absorbing levels";
  joint.meta["method"] = w->driftless() ? "series closed form" : "quadrature of the crossing-slice density";

  DensityField marg(tg, {1.0, 2.0});
  for (std::size_t i = 0; i < tg.size(); ++i) {
    marg.at(i, 0) = f_fpt_univ(Component::One, tg[i], *w, cfg.boundary);
    marg.at(i, 1) = f_fpt_univ(Component::Two, tg[i], *w, cfg.boundary);
  }
  marg.meta["quantity"] = "marginal passage densities; component is 1 or 2";
  return {write_field(cfg, dir, "joint", joint, p, "t1", "t2"),
          write_field(cfg, dir, "marginals", marg, p, "t", "component")};
}

std::vector<std::string> cmd_solve(const RunConfig& cfg, const Provenance& p, int threads) {
  const auto dir = prepare_dir(cfg);
  SolverOptions opt;
  opt.threads = threads;
  const auto t0 = std::chrono::steady_clock::now();
  const SolverOutput out = solve(cfg.model, cfg.boundary, cfg.grid, opt);
  std::vector<std::string> files = {write_field(cfg, dir, "f_x1_t2", out.f1, p, "x1", "t"),
                                    write_field(cfg, dir, "f_x2_t1", out.f2, p, "x2", "t")};
  const auto& d = out.diag;
  json diag = {{"grid", {{"h", out.grid.h}, {"Theta", out.grid.Theta}, {"r1", out.grid.r1}, {"r2", out.grid.r2},
                         {"m1", out.grid.m1}, {"m2", out.grid.m2}}},
               {"residual", {{"sup", d.residual.sup}, {"rms", d.residual.l2}, {"per_probe", d.residual.per_probe}}},
               {"negative_count", d.negative_count},
               {"min_value", d.min_value},
               {"negative_mass", d.negative_mass},
               {"lattice_mass", d.mass},
               {"first_step_spike", {d.t1_spike[0], d.t1_spike[1]}},
               {"kernel_bytes", d.kernel_bytes},
               {"kernel_seconds", d.kernel_seconds},
               {"recursion_seconds", d.recursion_seconds}};

  if (cfg.boundary.kind == BoundaryKind::Absorbing) {
    const auto tg = lattice_times(out.grid);
    const auto* w = std::get_if<WienerParams>(&cfg.model);
    const ConditionalFpt fpt = w ? wiener_conditional_fpt(*w, cfg.boundary)
                                 : LatticeConditionalFpt(cfg.model, cfg.boundary, out.grid).callable();
    const DensityField joint = assemble_absorbing(out, cfg.model, cfg.boundary, tg, fpt);
    files.push_back(write_field(cfg, dir, "joint", joint, p, "t1", "t2"));
    const JointSummary s = summarize(joint, out.grid.h, 0.1 * out.grid.Theta);
    diag["joint"] = {{"mass", s.mass}, {"mass_near_diagonal", s.near_diagonal}, {"mass_t1_after_t2", s.t1_after_t2}};
    if (w) {
      WienerJointReference ref(*w, cfg.boundary, cfg.grid.Theta, cfg.quad);
      const MseResult m = mse_detail(joint, [&](double a, double b) { return ref(a, b); });
      diag["joint"]["mse_vs_closed_form"] = m.value;
      diag["joint"]["mse_cells"] = m.cells;
      diag["joint"]["mse_skipped_cells"] = m.skipped;
    }
  } else {
    diag["joint"] = "not assembled: crossing levels need a caller-supplied crossing density";
  }
  diag["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  files.push_back(write_json(dir, "diagnostics.json", diag, p));
  return files;
}

std::vector<std::string> cmd_simulate(const RunConfig& cfg, const Provenance& p, int threads) {
  if (!cfg.sim) throw ConfigError("simulate: the config needs a 'sim' block");
  SimConfig sc = *cfg.sim;
  sc.threads = threads;
  const auto dir = prepare_dir(cfg);
  const auto samples = simulate(cfg.model, cfg.boundary, sc);
  std::vector<std::string> files;
  {
    const auto path = dir / "samples.csv";
    auto os = open_out(path);
    write_provenance(os, p);
    write_samples_csv(os, samples);
    files.push_back(path.string());
  }
  long complete = 0, ties = 0;
  double m1 = 0, m2 = 0;
  for (const auto& s : samples) {
    complete += s.complete();
    ties += s.complete() && s.first == FirstCrossing::Tie;
    if (s.complete()) {
      m1 += s.t1;
      m2 += s.t2;
    }
  }
  json summary = {{"paths", samples.size()}, {"complete", complete}, {"ties", ties}};
  if (complete > 0) summary["mean_complete"] = {m1 / complete, m2 / complete};
  if (complete >= 1000) {
    std::vector<double> edges;
    for (int k = 0; k <= cfg.grid.N(); ++k) edges.push_back(cfg.grid.t(k));
    files.push_back(write_field(cfg, dir, "mc_density", density_estimate(samples, edges), p, "t1", "t2"));
  } else {
    summary["density"] = "not estimated: fewer than 1000 complete pairs";
  }
  files.push_back(write_json(dir, "summary.json", summary, p));
  return files;
}

std::vector<std::string> cmd_converge(const RunConfig& cfg, const Provenance& p, int threads) {
  if (!cfg.refinement) throw ConfigError("converge: the config needs a 'refinement' block");
  const auto& rc = *cfg.refinement;
  if (rc.plan.reference == ReferenceKind::AnalyticWiener && !std::holds_alternative<WienerParams>(cfg.model))
    throw ConfigError("refinement.reference: the analytic reference needs a Wiener model");
  const auto dir = prepare_dir(cfg);
  const auto rows = error_ladder(cfg.model, cfg.boundary, cfg.grid.Theta, rc.plan, rc.metric, threads);
  std::vector<std::string> files;
  if (cfg.output.format == OutputFormat::Csv) {
    const auto path = dir / "ladder.csv";
    auto os = open_out(path);
    write_provenance(os, p);
    write_ladder_csv(os, rows);
    files.push_back(path.string());
  }
  std::vector<double> x, e;
  json table = json::array();
  for (const auto& r : rows) {
    x.push_back(rc.refine == "r" ? r.r : r.h);
    e.push_back(r.error);
    table.push_back({{"h", r.h}, {"r", r.r}, {"metric", to_string(r.metric)}, {"error", r.error}});
  }
  json report = {{"ladder", table}, {"refine", rc.refine}};
  if (rows.size() >= 2) {
    const SlopeFit f = fit_slope(x, e);
    report["slope"] = f.slope;
    report["points_used"] = f.used;
    report["dropped_coarsest"] = f.dropped_coarsest;
  }
  files.push_back(write_json(dir, "slope.json", report, p));
  return files;
}

int run_command(const std::string& command, const CommandOptions& opt, std::ostream& err) {
  try {
    if (opt.threads < 1) throw ConfigError("--threads: must be at least 1");
    RunConfig cfg = load_config(opt.config_path);
    if (opt.out_dir) cfg.output.dir = *opt.out_dir;
    if (opt.format) cfg.output.format = *opt.format;
    if (opt.seed) {
      if (!cfg.sim) {
        cfg.sim = SimConfig{};
        cfg.sim->horizon = cfg.grid.Theta;
      }
      cfg.sim->seed = *opt.seed;
    }
    cfg.validate();
    Provenance p;
    p.hash = config_hash(cfg);
    p.command = "fpt2d " + command + " --config " + std::filesystem::path(opt.config_path).filename().string();
    if (opt.seed) p.command += " --seed " + std::to_string(*opt.seed);

    std::vector<std::string> files;
    if (command == "analytic") files = cmd_analytic(cfg, p, opt.threads);
    else if (command == "solve") files = cmd_solve(cfg, p, opt.threads);
    else if (command == "simulate") files = cmd_simulate(cfg, p, opt.threads);
    else if (command == "converge") files = cmd_converge(cfg, p, opt.threads);
    else throw ConfigError("unknown command '" + command + "'");
    for (const auto& f : files) err << "wrote " << f << '\n';
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace fpt
