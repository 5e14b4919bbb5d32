#pragma once

#include "pce/dataset.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace pce {

// Maps a (resampled) dataset to a fixed-length vector of statistics.
using Statistic = std::function<std::vector<double>(const Dataset&)>;

struct BootstrapOptions {
  std::size_t replicates = 500;
  double level = 0.95;
  std::uint64_t seed = 0;
  // 0 lets OpenMP decide.
  int threads = 0;
  // Abort when more than this fraction of replicates fails.
  double max_failure_rate = 0.2;
};

struct BootstrapResult {
  std::vector<Interval> intervals;   // percentile intervals, one per statistic
  std::vector<double> standard_errors;
  // draws[r] is empty when replicate r failed.
  std::vector<std::vector<double>> draws;
  std::size_t failures = 0;
  double failure_rate = 0.0;
  std::string first_failure;
};

// Percentile bootstrap over units resampled with replacement. Replicate r
// draws from RngStream(seed, r), so results do not depend on the thread count.
// Throws EstimatorFailure when too many replicates fail.
BootstrapResult bootstrap_ci(const Dataset& d, const Statistic& stat, const BootstrapOptions& opt);

// Single-threaded reference with identical output.
BootstrapResult bootstrap_ci_serial(const Dataset& d, const Statistic& stat, const BootstrapOptions& opt);

// Linear-interpolation sample quantile of sorted values (type 7).
double sorted_quantile(const std::vector<double>& sorted, double p);

}  // namespace pce
