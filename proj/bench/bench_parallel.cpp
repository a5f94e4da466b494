// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include "mockskel/evaluation.hpp"
#include "mockskel/features.hpp"
#include "mockskel/prep.hpp"
#include "mockskel/synth.hpp"

using namespace mockskel;

namespace {

const traffic::TrafficLog& items_log() {
  static const auto log = [] {
    synth::SynthConfig cfg;
    cfg.transactions = 5000;
    return synth::generate(cfg);
  }();
  return log;
}

const std::vector<prep::PreparedDataset>& items_datasets() {
  static const auto ds = [] {
    auto table = features::build_instance_table_serial(items_log(), {});
    auto [pruned, removals] = prep::prune_targets(table, {});
    auto all = prep::project_all(pruned, removals);
    // The 200-valued name target dominates; keep the fast ones.
    std::vector<prep::PreparedDataset> out;
    for (auto& d : all)
      if (d.target != "responsejson:name") out.push_back(std::move(d));
    return out;
  }();
  return ds;
}

const std::vector<learn::Learner> kLearners{learn::Learner::C45, learn::Learner::Ripper, learn::Learner::Part};

void BM_InstanceTable(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(features::build_instance_table(items_log(), {}));
}

void BM_InstanceTableSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(features::build_instance_table_serial(items_log(), {}));
}

void BM_EvaluateAll(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(eval::evaluate_all(items_datasets(), kLearners, {}, {}));
}

void BM_EvaluateAllSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(eval::evaluate_all_serial(items_datasets(), kLearners, {}, {}));
}

void BM_CrossValidate(benchmark::State& state) {
  const auto coded = learn::encode(items_datasets().front());
  for (auto _ : state) benchmark::DoNotOptimize(eval::cross_validate(coded, learn::Learner::C45, {}, {}));
}

void BM_CrossValidateSerial(benchmark::State& state) {
  const auto coded = learn::encode(items_datasets().front());
  for (auto _ : state) benchmark::DoNotOptimize(eval::cross_validate_serial(coded, learn::Learner::C45, {}, {}));
}

}  // namespace

BENCHMARK(BM_InstanceTable)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_InstanceTableSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EvaluateAll)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EvaluateAllSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CrossValidate)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CrossValidateSerial)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
