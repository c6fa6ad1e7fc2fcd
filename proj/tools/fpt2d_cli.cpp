#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fpt/cli_io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Joint first-passage densities of two-dimensional Gaussian diffusions"};
  app.set_version_flag("--version", std::string(FPT2D_VERSION));
  app.require_subcommand(1);

  fpt::CommandOptions opt;
  std::string out, format;
  std::uint64_t seed = 0;

  const char* commands[][2] = {
      {"analytic", "closed-form joint density for the Wiener model"},
      {"solve", "lattice solution of the integral system and the assembled joint density"},
      {"simulate", "Euler-Maruyama passage-time samples and their histogram"},
      {"converge", "error ladder under grid refinement and the fitted order"},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--config", opt.config_path, "JSON configuration file")->required();
    sub->add_option("--out", out, "output directory (overrides output.dir)");
    sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "simulation seed (overrides sim.seed)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  if (!out.empty()) opt.out_dir = out;
  if (!format.empty()) opt.format = fpt::format_from_string(format);
  if (sub->count("--seed")) opt.seed = seed;
  return fpt::run_command(sub->get_name(), opt, std::cerr);
}
