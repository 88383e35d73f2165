// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "tokrec/dataset.hpp"
#include "tokrec/quantizer.hpp"
#include "tokrec/types.hpp"

namespace tokrec {

// Mean squared distance of a group of embedding rows to the group centroid.
// Zero for a singleton; translation-invariant.
double dispersion(std::span<const size_t> rows, const ItemEmbeddingTable& emb);

// mu[k] = expected dispersion of the group an item lands in after k tokens,
// item-weighted (a group of size g has weight g / n). mu[0] covers the whole
// catalog, mu[L] the singleton leaves. delta[k] = mu[k] - mu[k+1] >= 0 for
// IDs produced by refining prefixes.
struct DispersionProfile {
    std::vector<double> mu;    // L + 1 values
    std::vector<double> delta; // L values
};

DispersionProfile dispersion_profile(const SemanticIdTable& ids,
                                     const ItemEmbeddingTable& emb);

// Position weights proportional to clamped dispersion drops, normalized to
// sum to L. When every drop is zero the weights fall back to all ones.
std::vector<double> front_greater_weights(const DispersionProfile& profile);

// Occurrence counts of (layer, code) tokens over training target sequences,
// keyed by layer-offset token id.
struct FrequencyTable {
    TokenSpace space;
    double beta = 0.99;
    std::map<int32_t, int64_t> counts;

    int64_t count(int32_t token) const; // unseen tokens count as 0
    // Effective number of a count: (1 - beta^n) / (1 - beta), n >= 1.
    double effective_number(int64_t n) const;
    // 1 / E_n with unseen tokens treated as n = 1.
    double raw_weight(int32_t token) const;
};

FrequencyTable token_frequencies(std::span<const SplitSample> train,
                                 const SemanticIdTable& ids, double beta);

// Per-sequence weights 1 / E_n over the target's tokens, normalized to sum
// to L. All-equal counts normalize to all ones.
std::vector<double> frequency_weights(std::span<const int32_t> target_codes,
                                      const FrequencyTable& freq);

// purity(prefix) = 1 - H / ln(n) where H is the natural-log entropy of the
// training frequencies of the n items sharing the prefix; 1 for singletons.
// Token gain = purity(prefix + token) - purity(prefix), averaged over the
// token's distinct prefix occurrences. Keyed by layer-offset token id.
std::map<int32_t, double> purity_gain(const SemanticIdTable& ids,
                                      const std::map<ItemId, int64_t>& counts);

enum class FilterRatioWeighting {
    ItemWeighted,   // parents weighted by the items beneath them
    PrefixUniform,  // every occupied parent counts once
};

// Per layer: how much of the candidate set one more token removes. For each
// occupied length-(l-1) parent, the expected value over its items of
// 1 - items(child) / items(parent), aggregated across parents.
std::vector<double> layer_filter_ratio(
    const SemanticIdTable& ids,
    FilterRatioWeighting weighting = FilterRatioWeighting::ItemWeighted);

} // namespace tokrec
