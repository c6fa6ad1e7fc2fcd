#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fpt/core_models.hpp"

namespace fpt {

struct SimConfig {
  long n_paths = 100000;
  double step = 0.01;
  double horizon = 10;
  std::uint64_t seed = 1;
  bool bridge_correction = true;
  // Place each crossing inside its step by sampling the hitting time of the Brownian bridge
  // between the two grid values. Off: crossings are stamped at the step's right endpoint.
  bool interpolate_time = true;
  // Resolve same-step crossings of both components with the interpolated times instead of
  // stamping both at the right endpoint as a tie.
  bool refine_ties = false;
  int threads = 1;

  void validate() const;
};

enum class FirstCrossing { One, Two, Tie };

struct FPTSample {
  double t1 = 0, t2 = 0;  // the horizon when censored
  FirstCrossing first = FirstCrossing::One;
  bool censored1 = false, censored2 = false;

  bool complete() const { return !censored1 && !censored2; }
};

// One sample per path, in path order. Path p draws from its own generator keyed by (seed, p).
std::vector<FPTSample> simulate(const Model& model, const Boundary& b, const SimConfig& cfg);

// 2-D histogram with cell edges `edges` on both axes (axis values are the cell centres), or a
// product-Gaussian kernel estimate evaluated at the edge points when a bandwidth is given.
// Each sample contributes 1/n_samples, so the histogram integrates to the fraction of samples
// whose two times both fall inside the edge range.
DensityField density_estimate(const std::vector<FPTSample>& samples, const std::vector<double>& edges,
                              std::optional<double> bandwidth = std::nullopt);

struct MseResult {
  double value = 0;
  long cells = 0;    // cells entering the mean
  long skipped = 0;  // cells where the reference is not finite (e.g. an unsupported diagonal)
};

using JointReference = std::function<double(double t1, double t2)>;

MseResult mse_detail(const DensityField& estimate, const JointReference& reference,
                     bool exclude_diagonal = false);
double mse(const DensityField& estimate, const JointReference& reference, bool exclude_diagonal = false);

void write_samples_csv(std::ostream& os, const std::vector<FPTSample>& samples);

const char* to_string(FirstCrossing f);

}  // namespace fpt
