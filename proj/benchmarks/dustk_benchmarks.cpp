#include <benchmark/benchmark.h>

#include <filesystem>

#include "dustk/ckptio.hpp"
#include "dustk/corpus.hpp"
#include "dustk/fixture.hpp"
#include "dustk/merge.hpp"
#include "dustk/refmodel.hpp"
#include "dustk/surgery.hpp"
#include "dustk/train.hpp"

namespace {

using namespace dustk;

// Shape of the recovery experiment's base model.
ModelConfig bench_config(std::size_t n_layers = 8) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = 32;
  c.n_heads = 4;
  c.n_kv_heads = 4;
  c.d_ff = 64;
  c.vocab_size = 64;
  return c;
}

void BM_Forward(benchmark::State& state) {
  const RefModel model(random_checkpoint(bench_config(), {.seed = 1}));
  std::vector<Token> tokens(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = static_cast<Token>(i % 64);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(tokens));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  const Checkpoint ck = random_checkpoint(bench_config(), {.seed = 2, .dtype = DType::kFloat64});
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  std::vector<Token> windows(batch * 32);
  for (std::size_t i = 0; i < windows.size(); ++i) windows[i] = static_cast<Token>((i * 7) % 64);
  TrainConfig cfg;
  for (auto _ : state) {
    Checkpoint params = ck;
    Optimizer opt(cfg);
    Tape tape;
    const auto bound = bind_params(tape, params);
    const Var loss = lm_loss_var(tape, bound, params.config, windows, 32);
    opt.step(params, backward(tape, loss, bound, params), 1e-3);
    benchmark::DoNotOptimize(params);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(windows.size()));
}
BENCHMARK(BM_TrainStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_DepthwiseScale(benchmark::State& state) {
  const Checkpoint base = random_checkpoint(bench_config(32), {.seed = 3});
  const ScalePlan plan = plan_scale(32, 8);
  for (auto _ : state) benchmark::DoNotOptimize(depthwise_scale(base, plan));
}
BENCHMARK(BM_DepthwiseScale)->Unit(benchmark::kMicrosecond);

void BM_MergeAverage(benchmark::State& state) {
  const Checkpoint sources[] = {random_checkpoint(bench_config(), {.seed = 4}),
                                random_checkpoint(bench_config(), {.seed = 5})};
  const double weights[] = {0.5, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(merge_average(sources, weights));
}
BENCHMARK(BM_MergeAverage)->Unit(benchmark::kMicrosecond);

void BM_MergeSlerp(benchmark::State& state) {
  const Checkpoint a = random_checkpoint(bench_config(), {.seed = 4});
  const Checkpoint b = random_checkpoint(bench_config(), {.seed = 5});
  for (auto _ : state) benchmark::DoNotOptimize(merge_slerp(a, b, 0.5));
}
BENCHMARK(BM_MergeSlerp)->Unit(benchmark::kMicrosecond);

void BM_SaveLoad(benchmark::State& state) {
  const Checkpoint ck = random_checkpoint(bench_config(), {.seed = 6});
  const auto path = std::filesystem::temp_directory_path() / "dustk_bench_ckpt";
  for (auto _ : state) {
    save_checkpoint(ck, path);
    benchmark::DoNotOptimize(load_checkpoint(path));
  }
  std::filesystem::remove(path.string() + ".safetensors");
  std::filesystem::remove(path.string() + ".config.json");
}
BENCHMARK(BM_SaveLoad)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
