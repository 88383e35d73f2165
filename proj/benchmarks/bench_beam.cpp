// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "tokrec/beam.hpp"
#include "tokrec/model.hpp"
#include "tokrec/quantizer.hpp"
#include "tokrec/rng.hpp"
#include "tokrec/types.hpp"

namespace {

// 256-item catalog with codes enumerated in base K, so the trie is full at
// the top layers and beam expansion sees realistic branching.
tokrec::SemanticIdTable bench_catalog(int n, int L, int K) {
    std::vector<tokrec::ItemId> items;
    std::vector<int32_t> codes;
    for (int i = 0; i < n; ++i) {
        items.push_back("item" + std::to_string(i));
        int v = i;
        std::vector<int32_t> id(L);
        for (int l = L - 1; l >= 0; --l) {
            id[l] = v % K;
            v /= K;
        }
        codes.insert(codes.end(), id.begin(), id.end());
    }
    return tokrec::SemanticIdTable::create(L, K, std::move(items), std::move(codes));
}

void bm_beam_search(benchmark::State& state) {
    const int width = static_cast<int>(state.range(0));
    tokrec::TokenSpace space(4, 8);
    tokrec::SemanticIdTable ids = bench_catalog(256, space.L, space.K);
    tokrec::PrefixTrie trie = tokrec::build_trie(ids);

    tokrec::ModelConfig cfg;
    cfg.vocab = space.vocab();
    cfg.embed_dim = 32;
    cfg.ffn_dim = 64;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.heads = 2;
    cfg.max_positions = 64;
    cfg.seed = 17;
    auto m = tokrec::Model<float>::init(cfg);

    tokrec::Rng rng(9);
    std::vector<int32_t> x;
    for (int i = 0; i < 32; ++i) {
        x.push_back(space.token(i % space.L,
                                static_cast<int>(rng.uniform_index(space.K))));
    }
    tokrec::Workspace<float> ws;
    auto src = tokrec::model_encode(m, x, ws);
    for (auto _ : state) {
        auto ranked = tokrec::constrained_beam_search(m, src, trie, ids, width, ws);
        benchmark::DoNotOptimize(ranked.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_beam_search)->Arg(10)->Arg(20);

void bm_encode(benchmark::State& state) {
    tokrec::TokenSpace space(4, 8);
    tokrec::ModelConfig cfg;
    cfg.vocab = space.vocab();
    cfg.embed_dim = 32;
    cfg.ffn_dim = 64;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.heads = 2;
    cfg.max_positions = 64;
    cfg.seed = 17;
    auto m = tokrec::Model<float>::init(cfg);

    tokrec::Rng rng(9);
    std::vector<int32_t> x;
    for (int i = 0; i < 32; ++i) {
        x.push_back(space.token(i % space.L,
                                static_cast<int>(rng.uniform_index(space.K))));
    }
    tokrec::Workspace<float> ws;
    for (auto _ : state) {
        auto src = tokrec::model_encode(m, x, ws);
        benchmark::DoNotOptimize(src.memory.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_encode);

} // namespace
