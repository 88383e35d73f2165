// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "tokrec/model.hpp"
#include "tokrec/objective.hpp"
#include "tokrec/rng.hpp"
#include "tokrec/types.hpp"

namespace {

tokrec::ModelConfig bench_config() {
    tokrec::TokenSpace space(4, 32);
    tokrec::ModelConfig cfg;
    cfg.vocab = space.vocab();
    cfg.embed_dim = 32;
    cfg.ffn_dim = 64;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.heads = 2;
    cfg.max_positions = 64;
    cfg.seed = 3;
    return cfg;
}

// Source of 32 code tokens plus a bos-led 4-token decoder input, mirroring an
// eval-time sequence of 8 history items at L = 4.
struct BenchInputs {
    std::vector<int32_t> x;
    std::vector<int32_t> y_in;
    std::vector<int32_t> y;
};

BenchInputs bench_inputs(const tokrec::TokenSpace& space, uint64_t seed) {
    tokrec::Rng rng(seed);
    BenchInputs in;
    for (int i = 0; i < 32; ++i) {
        int layer = i % space.L;
        in.x.push_back(space.token(layer, static_cast<int>(rng.uniform_index(space.K))));
    }
    in.y_in.push_back(space.bos());
    for (int l = 0; l < space.L; ++l) {
        int32_t tok = space.token(l, static_cast<int>(rng.uniform_index(space.K)));
        in.y.push_back(tok);
        if (l + 1 < space.L) in.y_in.push_back(tok);
    }
    return in;
}

void bm_model_forward(benchmark::State& state) {
    tokrec::TokenSpace space(4, 32);
    auto m = tokrec::Model<float>::init(bench_config());
    BenchInputs in = bench_inputs(space, 5);
    tokrec::Workspace<float> ws;
    for (auto _ : state) {
        tokrec::model_forward(m, in.x, in.y_in, ws);
        benchmark::DoNotOptimize(ws.logits.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_model_forward);

void bm_model_backward(benchmark::State& state) {
    tokrec::TokenSpace space(4, 32);
    auto m = tokrec::Model<float>::init(bench_config());
    BenchInputs in = bench_inputs(space, 5);
    std::vector<double> w(in.y.size(), 1.0);
    tokrec::Workspace<float> ws;
    std::vector<float> d_logits;
    std::vector<float> grads(m.params.size());
    for (auto _ : state) {
        tokrec::model_forward(m, in.x, in.y_in, ws);
        d_logits.assign(ws.logits.size(), 0.0f);
        double loss = tokrec::weighted_nll<float>(
            ws.logits, static_cast<int>(in.y.size()), m.cfg.vocab, in.y, w,
            d_logits);
        benchmark::DoNotOptimize(loss);
        std::fill(grads.begin(), grads.end(), 0.0f);
        tokrec::model_backward<float>(m, ws, d_logits, grads);
        benchmark::DoNotOptimize(grads.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_model_backward);

} // namespace
