// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "tokrec/dataset.hpp"
#include "tokrec/types.hpp"

namespace tokrec {

// Synthetic world: item embeddings from a hierarchical Gaussian mixture,
// item popularity from a Zipf law, user sequences from a popularity-biased
// Markov walk that prefers to stay inside the current item's top-level
// cluster.
struct SynthConfig {
    int items = 200;
    int dim = 16;
    std::vector<int> branching = {4, 4}; // mixture fanout per level
    std::vector<double> level_spread = {}; // per-level center stddev; defaults below
    double item_noise = 0.15;   // stddev of per-item offset from its leaf center
    double zipf_s = 1.1;        // popularity exponent; 0 = uniform
    int users = 500;
    double mean_history = 10.0; // target mean interactions per user
    int min_history = 5;
    double stay_prob = 0.7;     // chance the walk stays in the current cluster
    uint64_t seed = 42;

    void validate() const;
    // Defaults to 2.0 * 0.35^level when level_spread is empty.
    std::vector<double> effective_spread() const;
};

struct SynthResult {
    ItemEmbeddingTable emb;
    InteractionDataset interactions;
    // labels[level][item row] = planted mixture component at that level
    std::vector<std::vector<int>> labels;
};

// Deterministic for a fixed config: identical seeds give byte-identical
// artifacts once serialized.
SynthResult generate_synthetic(const SynthConfig& cfg);

} // namespace tokrec
