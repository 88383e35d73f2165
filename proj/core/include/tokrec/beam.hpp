// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tokrec/model.hpp"
#include "tokrec/quantizer.hpp"

namespace tokrec {

struct ScoredItem {
    int32_t item_row = -1;             // row in the id table
    double logprob = 0.0;              // sum of per-token log softmax scores
    std::vector<int32_t> codes;        // the item's L codes
};

// Beam search over the prefix trie: only children of the current trie node
// are expanded, so every emitted sequence is a real item. Candidates are
// ranked by score, ties broken by lexicographic code order. Returns up to
// `width` items, best first. With width >= catalog size this enumerates the
// exact top of the full scored catalog.
template <typename T>
std::vector<ScoredItem> constrained_beam_search(const Model<T>& m,
                                                const EncodedSource<T>& src,
                                                const PrefixTrie& trie,
                                                const SemanticIdTable& ids,
                                                int width, Workspace<T>& ws);

// Oracle: scores every item by teacher-forcing its full code sequence and
// returns the catalog sorted by (score desc, codes lex asc).
template <typename T>
std::vector<ScoredItem> exhaustive_rank(const Model<T>& m,
                                        const EncodedSource<T>& src,
                                        const SemanticIdTable& ids,
                                        Workspace<T>& ws);

} // namespace tokrec
