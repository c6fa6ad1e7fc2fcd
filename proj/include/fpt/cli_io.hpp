#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpt/convergence.hpp"
#include "fpt/core_models.hpp"
#include "fpt/monte_carlo.hpp"

namespace fpt {

// Bad or inconsistent configuration; the message names the offending line or field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OutputFormat { Csv, Json };

struct OutputSpec {
  std::string dir = "out";
  OutputFormat format = OutputFormat::Csv;
};

struct RefinementConfig {
  RefinementPlan plan;
  Metric metric = Metric::Rms;
  std::string refine = "h";  // which parameter the slope is fitted against: h, r or both
};

struct RunConfig {
  Model model;
  Boundary boundary;
  GridSpec grid;
  QuadSpec quad;
  std::optional<SimConfig> sim;
  OutputSpec output;
  std::optional<RefinementConfig> refinement;

  void validate() const;
};

// Parses and validates; `origin` prefixes error messages.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::string& path);

// Normalized JSON of every setting that affects results (the output block is left out).
std::string canonical_json(const RunConfig& cfg);
std::uint64_t fnv1a64(const std::string& s);
std::string config_hash(const RunConfig& cfg);

struct Provenance {
  std::string command;  // normalized command line, without worker count or output directory
  std::string hash;
};

void write_provenance(std::ostream& os, const Provenance& p);
// CSV with a '#'-prefixed provenance block, a header row "<c1>,<c2>,density" and one row per
// cell, axis1 outer. Non-finite values are written as empty fields.
void write_field_csv(std::ostream& os, const DensityField& f, const Provenance& p,
                     const std::string& c1 = "t1", const std::string& c2 = "t2");
void write_field_json(std::ostream& os, const DensityField& f, const Provenance& p,
                      const std::string& c1 = "t1", const std::string& c2 = "t2");

struct CommandOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<OutputFormat> format;
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

// Runs one of analytic | solve | simulate | converge and returns the process exit code:
// 0 success, 2 configuration error, 3 numerical failure. Messages go to `err`.
int run_command(const std::string& command, const CommandOptions& opt, std::ostream& err);

// The individual commands; each returns the files written.
std::vector<std::string> cmd_analytic(const RunConfig& cfg, const Provenance& p, int threads);
std::vector<std::string> cmd_solve(const RunConfig& cfg, const Provenance& p, int threads);
std::vector<std::string> cmd_simulate(const RunConfig& cfg, const Provenance& p, int threads);
std::vector<std::string> cmd_converge(const RunConfig& cfg, const Provenance& p, int threads);

OutputFormat format_from_string(const std::string& s);

}  // namespace fpt
