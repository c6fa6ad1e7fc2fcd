#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "fpt/cli_io.hpp"

using namespace fpt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(FPT2D_TEST_DIR) / "cli_scratch" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const auto p = dir / "run.json";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Csv {
  std::vector<std::string> comments;
  std::string header;
  std::vector<std::array<double, 3>> rows;
};

Csv read_csv(const fs::path& p) {
  Csv c;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) {
      c.comments.push_back(line);
      continue;
    }
    if (c.header.empty()) {
      c.header = line;
      continue;
    }
    std::array<double, 3> r{};
    std::stringstream ss(line);
    std::string cell;
    for (int i = 0; i < 3; ++i) {
      std::getline(ss, cell, ',');
      r[i] = cell.empty() ? NAN : std::stod(cell);
    }
    c.rows.push_back(r);
  }
  return c;
}

const char* kWiener = R"({
  "model": {"wiener": {"mu1": 0, "mu2": 0, "sigma1": 1, "sigma2": 1, "rho": 0.5}},
  "boundary": {"B1": 1, "B2": 1},
  "grid": {"h": 0.1, "Theta": 1, "r1": 0.1, "r2": 0.1},
  "sim": {"n_paths": 4000, "step": 0.01, "seed": 17}
})";

int run(const std::string& cmd, const fs::path& cfg, const fs::path& out, int threads = 1,
        std::string* log = nullptr) {
  CommandOptions o;
  o.config_path = cfg.string();
  o.out_dir = out.string();
  o.threads = threads;
  std::ostringstream err;
  const int rc = run_command(cmd, o, err);
  if (log) *log = err.str();
  return rc;
}

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("well-formed configuration") {
  const auto c = parse_config(kWiener);
  CHECK(std::holds_alternative<WienerParams>(c.model));
  CHECK(c.grid.N() == 10);
  REQUIRE(c.sim);
  CHECK(c.sim->horizon == 1.0);
  CHECK(c.sim->seed == 17);
  CHECK(c.output.format == OutputFormat::Csv);
  CHECK(c.boundary.kind == BoundaryKind::Absorbing);
}

TEST_CASE("configuration errors name the line or the field") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text, "cfg.json");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  const std::string broken = "{\n  \"model\": {\n    \"wiener\": {\"mu1\": 0,, }\n  }\n}";
  const auto m1 = message(broken);
  CHECK(m1.find("cfg.json") != std::string::npos);
  CHECK(m1.find("line 3") != std::string::npos);

  std::string typo = kWiener;
  typo.replace(typo.find("\"r2\""), 4, "\"rr\"");
  CHECK(message(typo).find("grid.rr: unknown key") != std::string::npos);

  std::string missing = kWiener;
  missing.replace(missing.find("\"B2\": 1"), 7, "\"kind\": \"crossing\"");
  CHECK(message(missing).find("boundary.B2") != std::string::npos);

  std::string both = kWiener;
  both.replace(both.find("\"wiener\""), 8, "\"ou\": {}, \"wiener\"");
  CHECK(message(both).find("model") != std::string::npos);

  std::string type = kWiener;
  type.replace(type.find("\"rho\": 0.5"), 10, "\"rho\": \"half\"");
  CHECK(message(type).find("model.wiener.rho: expected a number") != std::string::npos);

  std::string rho = kWiener;
  rho.replace(rho.find("\"rho\": 0.5"), 10, "\"rho\": 1.5");
  CHECK(message(rho).find("model.wiener") != std::string::npos);

  // An empty time grid fails validation.
  std::string empty = kWiener;
  empty.replace(empty.find("\"Theta\": 1"), 10, "\"Theta\": 0");
  CHECK(message(empty).find("grid") != std::string::npos);

  std::string fmt = kWiener;
  fmt.replace(fmt.rfind('}'), 1, ", \"output\": {\"format\": \"xml\"}}");
  CHECK(message(fmt).find("format") != std::string::npos);
}

TEST_CASE("configuration hash ignores layout and the output block") {
  const auto a = parse_config(kWiener);
  std::string spaced = kWiener;
  spaced.replace(spaced.find("\"mu1\": 0, \"mu2\": 0"), 18, "\"mu2\":0,\"mu1\":0.0");
  const auto b = parse_config(spaced);
  CHECK(config_hash(a) == config_hash(b));
  auto c = a;
  c.output.dir = "elsewhere";
  c.output.format = OutputFormat::Json;
  CHECK(config_hash(a) == config_hash(c));
  c.grid.h = 0.05;
  CHECK(config_hash(a) != config_hash(c));
  CHECK(config_hash(a).rfind("fnv1a64:", 0) == 0);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("field writers") {
  DensityField f({0.5, 1.0}, {0.5, 1.0});
  f.values = {1.0, NAN, 0.25, 2.0};
  f.meta["quantity"] = "test";
  const Provenance p{"fpt2d analytic --config a.json", "fnv1a64:0000000000000001"};
  std::ostringstream os;
  write_field_csv(os, f, p);
  const std::string s = os.str();
  CHECK(s.find("# config_hash fnv1a64:0000000000000001\n") != std::string::npos);
  CHECK(s.find("# command fpt2d analytic --config a.json\n") != std::string::npos);
  CHECK(s.find("# quantity: test\n") != std::string::npos);
  CHECK(s.find("t1,t2,density\n0.5,0.5,1\n0.5,1,\n1,0.5,0.25\n1,1,2\n") != std::string::npos);
  std::ostringstream js;
  write_field_json(js, f, p);
  CHECK(js.str().find("[1.0,null]") != std::string::npos);
}

TEST_CASE("exit codes") {
  const auto dir = scratch("exit");
  std::string log;
  CHECK(run("simulate", dir / "missing.json", dir / "o") == 2);

  std::string bad = kWiener;
  bad.replace(bad.find("\"h\": 0.1"), 8, "\"h\": -1");
  CHECK(run("solve", write_config(dir, bad), dir / "bad", 1, &log) == 2);
  CHECK(log.find("grid") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "bad"));

  const std::string ou = R"({
    "model": {"ou": {"mu1": 1.5, "mu2": 1.5, "theta": 10, "sigma11": 2, "sigma12": 1, "sigma22": 2}},
    "boundary": {"B1": 10, "B2": 10},
    "grid": {"h": 0.5, "Theta": 5, "r1": 1, "r2": 1}
  })";
  CHECK(run("analytic", write_config(dir, ou), dir / "ou", 1, &log) == 2);
  CHECK(log.find("solve") != std::string::npos);
  CHECK(run("simulate", write_config(dir, ou), dir / "ou", 1) == 2);
  CHECK(run("frobnicate", write_config(dir, kWiener), dir / "x") == 2);
  CHECK(run("solve", write_config(dir, kWiener), dir / "t", 0) == 2);

  // Volatilities this small underflow the transition variance.
  const std::string tiny = R"({
    "model": {"wiener": {"mu1": 0, "mu2": 0, "sigma1": 1e-200, "sigma2": 1e-200, "rho": 0.5}},
    "boundary": {"B1": 1, "B2": 1},
    "grid": {"h": 0.1, "Theta": 1, "r1": 0.1, "r2": 0.1}
  })";
  CHECK(run("solve", write_config(dir, tiny), dir / "tiny", 1, &log) == 3);
  CHECK(log.find("numerical failure") != std::string::npos);

  CHECK(run("analytic", write_config(dir, kWiener), dir / "ok", 1, &log) == 0);
  CHECK(fs::exists(dir / "ok" / "joint.csv"));
  CHECK(fs::exists(dir / "ok" / "marginals.csv"));
}

TEST_CASE("simulate and solve outputs are byte-identical across runs and worker counts") {
  const auto dir = scratch("determinism");
  const auto cfg = write_config(dir, kWiener);
  REQUIRE(run("simulate", cfg, dir / "a", 1) == 0);
  REQUIRE(run("simulate", cfg, dir / "b", 1) == 0);
  REQUIRE(run("simulate", cfg, dir / "c", 3) == 0);
  for (const char* f : {"samples.csv", "mc_density.csv", "summary.json"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK(slurp(dir / "a" / f) == slurp(dir / "c" / f));
  }
  REQUIRE(run("solve", cfg, dir / "s1", 1) == 0);
  REQUIRE(run("solve", cfg, dir / "s2", 2) == 0);
  for (const char* f : {"f_x1_t2.csv", "f_x2_t1.csv", "joint.csv"}) {
    CAPTURE(f);
    CHECK(slurp(dir / "s1" / f) == slurp(dir / "s2" / f));
  }
  const auto samples = slurp(dir / "a" / "samples.csv");
  CHECK(samples.find("t1,t2,first,censored1,censored2\n") != std::string::npos);
  CHECK(samples.find("# command fpt2d simulate --config run.json\n") != std::string::npos);

  // The seed flag overrides the configured seed and is recorded.
  CommandOptions o;
  o.config_path = cfg.string();
  o.out_dir = (dir / "seed").string();
  o.seed = 99;
  std::ostringstream err;
  REQUIRE(run_command("simulate", o, err) == 0);
  const auto seeded = slurp(dir / "seed" / "samples.csv");
  CHECK(seeded.find("--seed 99") != std::string::npos);
  CHECK(seeded.substr(seeded.find("t1,t2")) != samples.substr(samples.find("t1,t2")));
}

TEST_CASE("solve diagnostics") {
  const auto dir = scratch("solve");
  REQUIRE(run("solve", write_config(dir, kWiener), dir / "o") == 0);
  const auto d = slurp(dir / "o" / "diagnostics.json");
  for (const char* key : {"\"residual\"", "\"negative_count\"", "\"mse_vs_closed_form\"", "\"recursion_seconds\"",
                          "\"wall_seconds\"", "\"config_hash\""})
    CHECK(d.find(key) != std::string::npos);
  const auto f = read_csv(dir / "o" / "f_x1_t2.csv");
  CHECK(f.header == "x1,t,density");
  CHECK(f.comments.size() >= 3);
}

TEST_CASE("driftless analytic grid is symmetric") {
  const auto dir = scratch("analytic_sym");
  REQUIRE(run("analytic", write_config(dir, kWiener), dir / "o") == 0);
  const auto c = read_csv(dir / "o" / "joint.csv");
  CHECK(c.header == "t1,t2,density");
  std::map<std::pair<long, long>, double> v;
  for (const auto& r : c.rows) v[{std::lround(r[0] * 1000), std::lround(r[1] * 1000)}] = r[2];
  REQUIRE(v.size() == 100);
  for (const auto& [k, x] : v) {
    const double y = v.at({k.second, k.first});
    // The singular diagonal is written as an empty field.
    if (std::isnan(x)) {
      CHECK(k.first == k.second);
      continue;
    }
    CHECK(std::abs(x - y) <= 1e-10 * std::max(1.0, std::abs(x)));
  }
}

TEST_CASE("drifted analytic grid peaks near the mean passage times") {
  const auto dir = scratch("analytic_drift");
  const std::string cfg = R"({
    "model": {"wiener": {"mu1": 1, "mu2": 1.5, "sigma1": 1, "sigma2": 1, "rho": 0.5}},
    "boundary": {"B1": 10, "B2": 10},
    "grid": {"h": 0.5, "Theta": 20, "r1": 0.5, "r2": 0.5}
  })";
  REQUIRE(run("analytic", write_config(dir, cfg), dir / "o") == 0);
  const auto c = read_csv(dir / "o" / "joint.csv");
  double best = -1, a = 0, b = 0;
  long nulls = 0;
  for (const auto& r : c.rows) {
    if (std::isnan(r[2])) {
      ++nulls;
      continue;
    }
    if (r[2] > best) {
      best = r[2];
      a = r[0];
      b = r[1];
    }
  }
  CHECK(nulls == 40);
  CAPTURE(a);
  CAPTURE(b);
  CHECK(std::abs(a - 10.0) <= 0.5);
  CHECK(std::abs(b - 20.0 / 3) <= 0.5);
}

TEST_CASE("json output format") {
  const auto dir = scratch("json");
  CommandOptions o;
  o.config_path = write_config(dir, kWiener).string();
  o.out_dir = (dir / "o").string();
  o.format = OutputFormat::Json;
  std::ostringstream err;
  REQUIRE(run_command("analytic", o, err) == 0);
  const auto j = slurp(dir / "o" / "joint.json");
  CHECK(j.find("\"density\"") != std::string::npos);
  CHECK(j.find("\"provenance\"") != std::string::npos);
  CHECK(format_from_string("json") == OutputFormat::Json);
  CHECK_THROWS_AS(format_from_string("yaml"), ConfigError);
}

TEST_CASE("converge command writes the ladder and the slope") {
  const auto dir = scratch("converge");
  std::string cfg = kWiener;
  cfg.replace(cfg.rfind('}'), 1, R"(, "refinement": {"refine": "h", "base": {"h": 0.2, "r": 0.2}, "rungs": 3}})");
  cfg.replace(cfg.find("\"Theta\": 1"), 10, "\"Theta\": 2");
  REQUIRE(run("converge", write_config(dir, cfg), dir / "o") == 0);
  const auto l = slurp(dir / "o" / "ladder.csv");
  CHECK(l.find("h,r,metric,error\n") != std::string::npos);
  const auto s = slurp(dir / "o" / "slope.json");
  CHECK(s.find("\"slope\"") != std::string::npos);
  CHECK(run("converge", write_config(dir, kWiener), dir / "p") == 2);
}

}
