#include <benchmark/benchmark.h>

#include <vector>

#include "amoc/attacks.hpp"
#include "amoc/bank.hpp"
#include "amoc/data.hpp"
#include "amoc/encoder.hpp"
#include "amoc/losses.hpp"

namespace {

using namespace amoc;

EncoderArch bench_arch() {
    EncoderArch arch;
    arch.width = 8;
    arch.embed_dim = 32;
    return arch;
}

Tensor bench_batch(int64_t n, int side, uint64_t seed) {
    Rng rng = Rng::substream(seed, "bench_batch");
    Tensor x({n, 3, side, side});
    for (double& v : x.v) v = rng.uniform01();
    return x;
}

void EncoderForwardEval(benchmark::State& state) {
    auto arch = bench_arch();
    Rng rng = Rng::substream(5, "bench_init");
    DualBNEncoder enc(arch);
    enc.init(rng);
    Tensor x = bench_batch(state.range(0), 16, 7);
    for (auto _ : state) {
        LayerCtx ctx;
        Tensor z = enc.forward(x, ctx, eval_mode(BnBranch::clean));
        benchmark::DoNotOptimize(z.v.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(EncoderForwardEval)->Arg(16)->Arg(64);

void EncoderForwardBackward(benchmark::State& state) {
    auto arch = bench_arch();
    Rng rng = Rng::substream(5, "bench_init");
    DualBNEncoder enc(arch);
    enc.init(rng);
    Tensor x = bench_batch(state.range(0), 16, 7);
    for (auto _ : state) {
        LayerCtx ctx;
        Tensor z = enc.forward(x, ctx, frozen_batch_mode(BnBranch::adv));
        Tensor dz(z.shape);
        dz.fill(1.0 / static_cast<double>(dz.v.size()));
        zero_grads(enc.params());
        Tensor dx = enc.backward(dz, ctx, /*param_grads=*/true, /*want_dx=*/true);
        benchmark::DoNotOptimize(dx.v.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(EncoderForwardBackward)->Arg(16)->Arg(64);

void InfoNceWithGrads(benchmark::State& state) {
    Rng rng = Rng::substream(9, "bench_nce");
    int64_t b = 64, d = 32;
    Tensor q({b, d}), k({b, d});
    MemoryBank bank(static_cast<int64_t>(state.range(0)), d, 13);
    for (double& v : q.v) v = rng.normal();
    for (double& v : k.v) v = rng.normal();
    for (int64_t i = 0; i < b; ++i) {
        double nq = 0, nk = 0;
        for (int64_t j = 0; j < d; ++j) {
            nq += q.at2(i, j) * q.at2(i, j);
            nk += k.at2(i, j) * k.at2(i, j);
        }
        for (int64_t j = 0; j < d; ++j) {
            q.at2(i, j) /= std::sqrt(nq);
            k.at2(i, j) /= std::sqrt(nk);
        }
    }
    for (auto _ : state) {
        InfoNceResult r = info_nce(q, k, bank.negatives(), 0.2, /*want_grads=*/true);
        benchmark::DoNotOptimize(r.loss);
        benchmark::DoNotOptimize(r.dq.v.data());
    }
    state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(InfoNceWithGrads)->Arg(256)->Arg(2048);

void BankEnqueue(benchmark::State& state) {
    int64_t d = 32, b = 64;
    MemoryBank bank(state.range(0), d, 3);
    Rng rng = Rng::substream(11, "bench_bank");
    Tensor keys({b, d});
    for (double& v : keys.v) v = rng.normal();
    for (int64_t i = 0; i < b; ++i) {
        double n2 = 0;
        for (int64_t j = 0; j < d; ++j) n2 += keys.at2(i, j) * keys.at2(i, j);
        for (int64_t j = 0; j < d; ++j) keys.at2(i, j) /= std::sqrt(n2);
    }
    for (auto _ : state) {
        bank.enqueue(keys);
        benchmark::DoNotOptimize(bank.negatives().v.data());
    }
    state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BankEnqueue)->Arg(2048);

void MomentumUpdate(benchmark::State& state) {
    auto arch = bench_arch();
    EncoderPair pair = init_encoder_pair(arch, 17, 0.999);
    for (auto _ : state) {
        momentum_update(pair);
        benchmark::DoNotOptimize(pair.key.params().front().value->v.data());
    }
}
BENCHMARK(MomentumUpdate);

void PgdCraft(benchmark::State& state) {
    auto arch = bench_arch();
    Rng rng = Rng::substream(23, "bench_pgd");
    auto model = std::make_unique<ClassifierModel>(arch, 2);
    model->init(rng);
    Tensor x = bench_batch(32, 16, 29);
    std::vector<int> y(32);
    for (size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i) % 2;
    AttackSpec spec;
    spec.steps = static_cast<int>(state.range(0));
    spec.random_start = false;
    ClassifierSurface surface(*model, eval_mode(BnBranch::adv));
    CrossEntropyObjective objective(surface, y);
    Rng attack_rng = Rng::substream(31, "bench_pgd_rng");
    for (auto _ : state) {
        Tensor adv = pgd(objective, x, spec, attack_rng);
        benchmark::DoNotOptimize(adv.v.data());
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(PgdCraft)->Arg(1)->Arg(10);

void PretrainViews(benchmark::State& state) {
    LabeledImageSet data = synth_toy_dataset(1, 64, 2, 16);
    AugmentationPipeline pipeline;  // pretrain defaults
    Rng rng = Rng::substream(37, "bench_views");
    for (auto _ : state) {
        auto views = make_views_batch(data.images, pipeline, rng);
        benchmark::DoNotOptimize(views.first.v.data());
        benchmark::DoNotOptimize(views.second.v.data());
    }
    state.SetItemsProcessed(state.iterations() * data.count());
}
BENCHMARK(PretrainViews);

}  // namespace

BENCHMARK_MAIN();
