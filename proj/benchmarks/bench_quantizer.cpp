// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <cstdint>
#include <string>
#include <vector>

#include "tokrec/quantizer.hpp"
#include "tokrec/rng.hpp"
#include "tokrec/types.hpp"

namespace {

tokrec::ItemEmbeddingTable random_embeddings(size_t n, int dim, uint64_t seed) {
    tokrec::Rng rng(seed);
    std::vector<tokrec::ItemId> ids(n);
    std::vector<double> data(n * static_cast<size_t>(dim));
    for (size_t i = 0; i < n; ++i) ids[i] = "item" + std::to_string(i);
    for (double& v : data) v = rng.normal();
    return tokrec::ItemEmbeddingTable::create(std::move(ids), std::move(data), dim);
}

void bm_kmeans(benchmark::State& state) {
    const size_t n = static_cast<size_t>(state.range(0));
    const int dim = 16;
    const int k = 32;
    tokrec::ItemEmbeddingTable emb = random_embeddings(n, dim, 7);
    for (auto _ : state) {
        auto res = tokrec::kmeans(emb.data, n, dim, k, 10, 11);
        benchmark::DoNotOptimize(res.error);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}
BENCHMARK(bm_kmeans)->Arg(256)->Arg(1024);

void bm_fit_rq(benchmark::State& state) {
    tokrec::ItemEmbeddingTable emb = random_embeddings(512, 16, 7);
    tokrec::QuantizeConfig cfg;
    cfg.flavor = tokrec::QuantFlavor::RQ;
    cfg.L = 4;
    cfg.K = 32;
    cfg.iters = 10;
    cfg.seed = 11;
    for (auto _ : state) {
        auto cb = tokrec::fit_rq(emb, cfg);
        benchmark::DoNotOptimize(cb.centroids.data());
    }
}
BENCHMARK(bm_fit_rq);

void bm_assign_ids(benchmark::State& state) {
    tokrec::ItemEmbeddingTable emb = random_embeddings(1024, 16, 7);
    tokrec::QuantizeConfig cfg;
    cfg.flavor = tokrec::QuantFlavor::RQ;
    cfg.L = 4;
    cfg.K = 32;
    cfg.iters = 10;
    cfg.seed = 11;
    tokrec::CodebookSet cb = tokrec::fit_rq(emb, cfg);
    for (auto _ : state) {
        auto ids = tokrec::assign_ids(emb, cb, 13);
        benchmark::DoNotOptimize(ids.codes.data());
    }
    state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(bm_assign_ids);

} // namespace
