#include <benchmark/benchmark.h>

#include "vsd/householder.hpp"
#include "vsd/inference.hpp"
#include "vsd/kl.hpp"
#include "vsd/metrics.hpp"

namespace {

using vsd::Tensor;

void BM_HouseholderApplyRows(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  vsd::Rng init(1), rng(2);
  vsd::HouseholderChain chain(k, 2, 0, init);
  const Tensor x = vsd::sample_standard_normal({128, k}, rng);
  for (auto _ : state) {
    vsd::Tape tape(false);
    benchmark::DoNotOptimize(chain.apply_rows(tape, tape.constant(x)).value());
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_HouseholderApplyRows)->Arg(32)->Arg(128)->Arg(400);

void BM_ForwardPass(benchmark::State& state) {
  const auto variant = static_cast<vsd::Variant>(state.range(0));
  vsd::LayerOptions opts;
  opts.transforms = 2;
  vsd::Network net({784}, {"dense:400", "relu", "dense:400", "relu", "dense:10"}, variant, opts, 3);
  vsd::Rng rng(4), local(5), global(6);
  const Tensor x = vsd::sample_standard_normal({100, 784}, rng);
  for (auto _ : state) {
    vsd::Tape tape(false);
    vsd::ForwardContext ctx{local, global, vsd::NoiseMode::Stochastic};
    benchmark::DoNotOptimize(net.forward(tape, tape.constant(x), ctx).value());
  }
  state.SetLabel(std::string(vsd::to_string(variant)));
}
BENCHMARK(BM_ForwardPass)
    ->Arg(static_cast<int>(vsd::Variant::Map))
    ->Arg(static_cast<int>(vsd::Variant::Mcd))
    ->Arg(static_cast<int>(vsd::Variant::Vd))
    ->Arg(static_cast<int>(vsd::Variant::Bbb))
    ->Arg(static_cast<int>(vsd::Variant::Vsd))
    ->Arg(static_cast<int>(vsd::Variant::VsdHier))
    ->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
  vsd::LayerOptions opts;
  opts.transforms = 2;
  vsd::Model model(vsd::Network({784}, {"dense:400", "relu", "dense:400", "relu", "dense:10"}, vsd::Variant::Vsd, opts, 7),
                   vsd::Likelihood::Categorical);
  vsd::Rng rng(8), local(9), global(10);
  vsd::Batch batch;
  batch.x = vsd::sample_standard_normal({100, 784}, rng);
  for (int i = 0; i < 100; ++i) batch.labels.push_back(i % 10);
  vsd::Objective obj;
  obj.dataset_size = 60000;
  for (auto _ : state) {
    vsd::Tape tape;
    vsd::ForwardContext ctx{local, global, vsd::NoiseMode::Stochastic};
    vsd::ObjectiveTerms terms = vsd::negative_elbo(tape, model, batch, obj, ctx);
    tape.backward(terms.total);
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_KlEbVsd(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  vsd::Rng init(11);
  const Tensor u = vsd::HouseholderChain(k, 2, 0, init).matrix();
  const Tensor alpha({k}, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(vsd::kl_eb_vsd(alpha, u, 400));
}
BENCHMARK(BM_KlEbVsd)->Arg(64)->Arg(400);

void BM_OodMetrics(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  vsd::Rng rng(12);
  std::vector<double> in(n), out(n);
  for (double& v : in) v = rng.uniform(0.3, 1.0);
  for (double& v : out) v = rng.uniform(0.0, 0.8);
  for (auto _ : state) benchmark::DoNotOptimize(vsd::ood_metrics(in, out));
}
BENCHMARK(BM_OodMetrics)->Arg(1000)->Arg(10000);

void BM_Ece(benchmark::State& state) {
  vsd::Rng rng(13);
  Tensor probs({10000, 10});
  std::vector<int> labels(10000);
  for (std::size_t i = 0; i < 10000; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < 10; ++c) s += probs(i, c) = rng.uniform();
    for (std::size_t c = 0; c < 10; ++c) probs(i, c) /= s;
    labels[i] = static_cast<int>(rng.below(10));
  }
  for (auto _ : state) benchmark::DoNotOptimize(vsd::ece(probs, labels));
}
BENCHMARK(BM_Ece);

}  // namespace

BENCHMARK_MAIN();
