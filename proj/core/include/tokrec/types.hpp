// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tokrec/common.hpp"

namespace tokrec {

using ItemId = std::string;

// Layer-offset token vocabulary over L codebooks of K codes each. The code c
// at layer l (both 0-based) maps to token l*K + c, so tokens from different
// layers never collide. Two specials follow the code block: pad, then bos.
struct TokenSpace {
    int L = 0;
    int K = 0;

    TokenSpace() = default;
    TokenSpace(int layers, int codes) : L(layers), K(codes) {
        require(L >= 1, "TokenSpace: L must be >= 1");
        require(K >= 1, "TokenSpace: K must be >= 1");
    }

    int vocab() const { return L * K + 2; }
    int32_t pad() const { return L * K; }
    int32_t bos() const { return L * K + 1; }

    int32_t token(int layer, int code) const {
        require(layer >= 0 && layer < L, "TokenSpace: layer out of range");
        require(code >= 0 && code < K, "TokenSpace: code out of range");
        return static_cast<int32_t>(layer) * K + code;
    }
    int layer_of(int32_t tok) const {
        require(tok >= 0 && tok < L * K, "TokenSpace: not a code token");
        return tok / K;
    }
    int code_of(int32_t tok) const {
        require(tok >= 0 && tok < L * K, "TokenSpace: not a code token");
        return tok % K;
    }
};

// Dense item embeddings, one row per item, row-major.
struct ItemEmbeddingTable {
    std::vector<ItemId> ids;
    std::vector<double> data;
    int dim = 0;

    static ItemEmbeddingTable create(std::vector<ItemId> ids,
                                     std::vector<double> data, int dim);

    size_t size() const { return ids.size(); }
    std::span<const double> row(size_t i) const {
        return {data.data() + i * static_cast<size_t>(dim),
                static_cast<size_t>(dim)};
    }
    bool has(const ItemId& id) const { return index_.count(id) != 0; }
    size_t index_of(const ItemId& id) const;

private:
    std::unordered_map<ItemId, size_t> index_;
};

} // namespace tokrec
