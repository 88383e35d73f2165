// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tokrec/beam.hpp"
#include "tokrec/dataset.hpp"
#include "tokrec/model.hpp"
#include "tokrec/quantizer.hpp"

namespace tokrec {

// 1 if the target row appears in the top k, else 0.
double hit_at_k(std::span<const ScoredItem> ranked, int32_t target_row, int k);

// Single relevant item: 1 / log2(rank + 1) at 1-based rank <= k, else 0.
double ndcg_at_k(std::span<const ScoredItem> ranked, int32_t target_row, int k);

// Item rows split by training interaction count: head = the more frequent
// half (ties by item id), tail = the rest. With by_mass the head instead
// covers the most frequent items holding at least half the interaction mass.
struct HeadTailSplit {
    std::vector<bool> is_head; // indexed by id table row
    size_t head_items = 0;
    size_t tail_items = 0;
};

HeadTailSplit head_tail_split(const SemanticIdTable& ids,
                              const std::map<ItemId, int64_t>& train_counts,
                              bool by_mass = false);

struct MetricBlock {
    std::map<int, double> hit;  // k -> mean
    std::map<int, double> ndcg; // k -> mean
    int64_t count = 0;
};

// Popularity-decile histograms of targets vs. top-1 predictions. Bin 0 holds
// the least frequent tenth of the catalog, bin 9 the most frequent. l1 is
// the distance between the two normalized histograms. Requires at least 10
// distinct items.
struct DecileReport {
    std::array<int64_t, 10> truth = {};
    std::array<int64_t, 10> pred = {};
    double l1 = 0.0;
};

struct EvalReport {
    MetricBlock overall, head, tail;
    DecileReport decile;
    std::string to_json() const; // schema used by the eval artifact
};

struct EvalConfig {
    std::vector<int> ks = {5, 10};
    int beam_width = 0; // 0 = 2 * max(ks)
    int max_items = 20; // history truncation, matches training
    bool head_by_mass = false;

    int effective_width() const;
};

// Runs constrained beam search for every sample and aggregates metrics.
// train_counts supplies item popularity for the head/tail and decile views.
template <typename T>
EvalReport evaluate(const Model<T>& m, std::span<const SplitSample> samples,
                    const SemanticIdTable& ids, const PrefixTrie& trie,
                    const std::map<ItemId, int64_t>& train_counts,
                    const EvalConfig& cfg);

} // namespace tokrec
