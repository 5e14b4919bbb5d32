// Serial reference vs OpenMP kernels, and collapsed vs per-unit stratum updates.

#include "pce/bayes.hpp"
#include "pce/bootstrap.hpp"
#include "pce/dgp.hpp"
#include "pce/mom.hpp"

#include <benchmark/benchmark.h>

using namespace pce;

namespace {

const Dataset& jobs_data() {
  static const Dataset d = dgp::generate_jobs_like(5000, 0.4, 1).data;
  return d;
}

const Dataset& dgp3_data(std::size_t n) {
  static std::map<std::size_t, Dataset> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    dgp::DgpSpec spec;
    spec.id = dgp::DgpId::Dgp3;
    spec.n = n;
    spec.seed = 1;
    it = cache.emplace(n, dgp::generate(spec).data).first;
  }
  return it->second;
}

Statistic mom_statistic() {
  return [](const Dataset& d) {
    const auto fit = mom_fit(d, 0.4);
    return std::vector<double>{fit.beta1(0) - fit.beta0(0), fit.beta1(1) - fit.beta0(1)};
  };
}

template <bool Parallel>
void BM_Bootstrap(benchmark::State& state) {
  BootstrapOptions opt;
  opt.replicates = static_cast<std::size_t>(state.range(0));
  opt.seed = 1;
  const auto stat = mom_statistic();
  for (auto _ : state) {
    auto r = Parallel ? bootstrap_ci(jobs_data(), stat, opt) : bootstrap_ci_serial(jobs_data(), stat, opt);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_Bootstrap<false>)->Name("bootstrap/serial")->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bootstrap<true>)->Name("bootstrap/openmp")->Arg(200)->Unit(benchmark::kMillisecond);

bayes::McmcConfig short_config(bayes::StratumKernel kernel) {
  bayes::McmcConfig cfg;
  cfg.iterations = 2000;
  cfg.burn_in = 500;
  cfg.chains = 4;
  cfg.seed = 1;
  cfg.prior = bayes::prior_by_name("beta11");
  cfg.kernel = kernel;
  return cfg;
}

template <bool Parallel>
void BM_Chains(benchmark::State& state) {
  const auto cfg = short_config(bayes::StratumKernel::Collapsed);
  const auto& d = dgp3_data(10000);
  for (auto _ : state) {
    auto p = Parallel ? bayes::gibbs_model34(d, bayes::Model::M3, cfg)
                      : bayes::gibbs_model34_serial(d, bayes::Model::M3, cfg);
    benchmark::DoNotOptimize(p);
  }
}
BENCHMARK(BM_Chains<false>)->Name("gibbs_chains/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Chains<true>)->Name("gibbs_chains/openmp")->Unit(benchmark::kMillisecond);

template <bayes::StratumKernel K>
void BM_Kernel(benchmark::State& state) {
  const auto cfg = short_config(K);
  const auto& d = dgp3_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto p = bayes::gibbs_model34(d, bayes::Model::M3, cfg);
    benchmark::DoNotOptimize(p);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Kernel<bayes::StratumKernel::Collapsed>)->Name("m34_kernel/collapsed")->Arg(1000)->Arg(10000)->Arg(50000)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Kernel<bayes::StratumKernel::PerUnit>)->Name("m34_kernel/per_unit")->Arg(1000)->Arg(10000)->Arg(50000)
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
