// Microbenchmarks for the hot kernels: attention, codec transform, resampler,
// and a full velocity-field evaluation on the small enhancement preset.
#include <benchmark/benchmark.h>

#include <cascadeflow/codec.hpp>
#include <cascadeflow/dit.hpp>
#include <cascadeflow/graph.hpp>
#include <cascadeflow/resample.hpp>
#include <cascadeflow/rng.hpp>

using namespace cascadeflow;

static Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal();
    return t;
}

static void BM_AttentionForward(benchmark::State& state) {
    const std::int64_t m = state.range(0);
    const std::int64_t c = 64;
    Rng rng(1);
    Tensor q = random_tensor({m, c}, rng);
    Tensor k = random_tensor({m, c}, rng);
    Tensor v = random_tensor({m, c}, rng);
    for (auto _ : state) {
        ad::Graph g;
        ad::Graph::Id out = g.attention(g.input(q), g.input(k), g.input(v), 4);
        benchmark::DoNotOptimize(g.val(out).data.data());
    }
    state.SetComplexityN(m);
}
BENCHMARK(BM_AttentionForward)->Arg(32)->Arg(128)->Arg(512)->Complexity();

static void BM_CodecEncode(benchmark::State& state) {
    CodecConfig cfg;
    cfg.spatial_ratio = 4;
    cfg.temporal_ratio = 2;
    Codec codec(cfg);
    Rng rng(2);
    VideoTensor video(9, 32, 32, 1);
    for (auto& v : video.data) v = rng.normal();
    for (auto _ : state) {
        LatentTensor z = codec.encode(video);
        benchmark::DoNotOptimize(z.data.data());
    }
}
BENCHMARK(BM_CodecEncode);

static void BM_ResizeBicubic(benchmark::State& state) {
    Rng rng(3);
    VideoTensor video(3, 64, 64, 1);
    for (auto& v : video.data) v = rng.normal();
    for (auto _ : state) {
        VideoTensor small = resize_bicubic(video, 16, 16);
        benchmark::DoNotOptimize(small.data.data());
    }
}
BENCHMARK(BM_ResizeBicubic);

static void BM_VelocityField(benchmark::State& state) {
    DiTConfig cfg = DiTConfig::stage2_preset(/*latent_channels=*/32, /*cond_classes=*/72);
    Rng rng(4);
    ParamStore params = init_dit_params(cfg, rng);
    RopeCache ropes;
    LatentTensor z(2, 8, 8, 32);
    for (auto& v : z.data) v = rng.normal();
    for (auto _ : state) {
        LatentTensor out = dit_forward(cfg, params, ropes, z, 0.5, 0, 3);
        benchmark::DoNotOptimize(out.data.data());
    }
}
BENCHMARK(BM_VelocityField);

BENCHMARK_MAIN();
