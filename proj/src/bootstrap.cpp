#include "pce/bootstrap.hpp"

#include "pce/errors.hpp"
#include "pce/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pce {

namespace {

struct Replicate {
  std::vector<double> values;
  std::string error;
};

Replicate run_replicate(const Dataset& d, const Statistic& stat, std::uint64_t seed, std::size_t r) {
  RngStream rng(seed, r);
  std::vector<std::size_t> idx(d.size());
  for (auto& i : idx) i = rng.uniform_index(d.size());
  Replicate out;
  try {
    out.values = stat(d.resample(idx));
  } catch (const std::exception& e) {
    out.values.clear();
    out.error = e.what();
  }
  return out;
}

void check_options(const Dataset& d, const BootstrapOptions& opt) {
  if (opt.replicates < 2) throw BadParams("bootstrap needs at least 2 replicates");
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw BadParams("bootstrap level must lie in (0,1)");
  if (d.size() == 0) throw InputError("empty", "bootstrap on an empty dataset");
}

BootstrapResult summarize(std::vector<Replicate> reps, const BootstrapOptions& opt) {
  BootstrapResult res;
  std::size_t width = 0;
  for (const auto& r : reps) {
    if (r.values.empty()) {
      ++res.failures;
      if (res.first_failure.empty()) res.first_failure = r.error;
      continue;
    }
    if (width == 0) width = r.values.size();
    if (r.values.size() != width) throw BadParams("bootstrap statistic changed length between replicates");
  }
  res.failure_rate = static_cast<double>(res.failures) / static_cast<double>(reps.size());
  if (res.failure_rate > opt.max_failure_rate || width == 0) {
    std::ostringstream msg;
    msg << res.failures << " of " << reps.size() << " bootstrap replicates failed";
    if (!res.first_failure.empty()) msg << " (first: " << res.first_failure << ")";
    throw EstimatorFailure(msg.str(), res.failure_rate);
  }
  const double alpha = 1.0 - opt.level;
  for (std::size_t j = 0; j < width; ++j) {
    std::vector<double> v;
    for (const auto& r : reps)
      if (!r.values.empty()) v.push_back(r.values[j]);
    std::sort(v.begin(), v.end());
    res.intervals.push_back({sorted_quantile(v, alpha / 2.0), sorted_quantile(v, 1.0 - alpha / 2.0), opt.level});
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    res.standard_errors.push_back(v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0);
  }
  res.draws.reserve(reps.size());
  for (auto& r : reps) res.draws.push_back(std::move(r.values));
  return res;
}

}  // namespace

double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw BadParams("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap_ci(const Dataset& d, const Statistic& stat, const BootstrapOptions& opt) {
  check_options(d, opt);
  std::vector<Replicate> reps(opt.replicates);
  const int threads = opt.threads > 0 ? opt.threads : omp_get_max_threads();
  const auto n = static_cast<std::int64_t>(opt.replicates);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::int64_t r = 0; r < n; ++r)
    reps[static_cast<std::size_t>(r)] = run_replicate(d, stat, opt.seed, static_cast<std::size_t>(r));
  return summarize(std::move(reps), opt);
}

BootstrapResult bootstrap_ci_serial(const Dataset& d, const Statistic& stat, const BootstrapOptions& opt) {
  check_options(d, opt);
  std::vector<Replicate> reps;
  reps.reserve(opt.replicates);
  for (std::size_t r = 0; r < opt.replicates; ++r) reps.push_back(run_replicate(d, stat, opt.seed, r));
  return summarize(std::move(reps), opt);
}

}  // namespace pce
