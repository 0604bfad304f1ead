#include <benchmark/benchmark.h>

#include <vector>

#include "fairaudit/dataset.hpp"
#include "fairaudit/learners.hpp"
#include "fairaudit/metrics.hpp"
#include "fairaudit/propensity.hpp"
#include "fairaudit/synthgen.hpp"

namespace {

using namespace fairaudit;

Dataset make_cohort(int n, uint64_t seed) {
  GeneratorConfig gen;
  gen.n = n;
  gen.seed = seed;
  gen.sensitive_name = "sex";
  gen.sensitive_codes = {"F", "M"};
  gen.sensitive_fractions = {0.5, 0.5};
  ContinuousFeatureConfig age{"age", 60.0, 15.0, {0.0, 120.0}, {{"F", 6.0}}};
  ContinuousFeatureConfig bmi{"bmi", 27.0, 5.0, {10.0, 60.0}, {{"F", 1.5}}};
  ContinuousFeatureConfig sofa{"sofa", 4.0, 2.0, {0.0, 24.0}, {}};
  gen.continuous = {age, bmi, sofa};
  gen.outcome.name = "mortality";
  gen.outcome.target_rate = 0.3;
  gen.outcome.coefficients = {{"age", 2.0}, {"bmi", -1.0}};
  Dataset raw = generate(gen);
  return preprocess(raw).first;
}

void bm_logistic_train(benchmark::State& state) {
  Dataset d = make_cohort(static_cast<int>(state.range(0)), 31);
  LearnerSpec spec;
  for (auto _ : state) {
    TrainedModel m = train(spec, d);
    benchmark::DoNotOptimize(m.to_json());
  }
}
BENCHMARK(bm_logistic_train)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void bm_forest_train(benchmark::State& state) {
  Dataset d = make_cohort(2000, 32);
  LearnerSpec spec;
  spec.family = LearnerFamily::kForest;
  spec.n_trees = static_cast<int>(state.range(0));
  for (auto _ : state) {
    TrainedModel m = train(spec, d);
    benchmark::DoNotOptimize(m.to_json());
  }
}
BENCHMARK(bm_forest_train)->Arg(10)->Arg(40)->Unit(benchmark::kMillisecond);

void bm_match_caliper(benchmark::State& state) {
  Dataset d = make_cohort(static_cast<int>(state.range(0)), 33);
  SensitiveContrast contrast{"sex", "F", "M"};
  PropensityModel model = fit_propensity(d, contrast);
  for (auto _ : state) {
    MatchedSample s = match_caliper(model, 0.05, 1);
    benchmark::DoNotOptimize(s.pairs.size());
  }
}
BENCHMARK(bm_match_caliper)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);

void bm_bootstrap_bookkeeping(benchmark::State& state) {
  Dataset d = make_cohort(2000, 34);
  SensitiveContrast contrast{"sex", "F", "M"};
  TrainFn constant_rule = [](int, const std::vector<int>&) -> ReplicatePredictor {
    return [](const std::vector<int>& rows) {
      return std::vector<int>(rows.size(), 1);
    };
  };
  int replicates = static_cast<int>(state.range(0));
  for (auto _ : state) {
    BootstrapResult r =
        bootstrap_oob(constant_rule, d, contrast, all_metrics(), replicates, 9);
    benchmark::DoNotOptimize(r.mean_oob_fraction);
  }
}
BENCHMARK(bm_bootstrap_bookkeeping)->Arg(50)->Arg(150)->Unit(benchmark::kMillisecond);

}  // namespace
