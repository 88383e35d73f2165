// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tokrec/types.hpp"

namespace tokrec {

enum class QuantFlavor { RQ, PQ };

std::string to_string(QuantFlavor f);
QuantFlavor quant_flavor_from_string(const std::string& s);

// L codebooks of K centroids each. RQ centroids live in the full input space
// (layer l quantizes the residual left by layers 0..l-1). PQ centroids live
// in the l-th of L equal contiguous segments, so their width is dim / L.
struct CodebookSet {
    QuantFlavor flavor = QuantFlavor::RQ;
    int L = 0;
    int K = 0;
    int dim = 0;           // input embedding width
    uint64_t seed = 0;
    std::vector<double> centroids; // L * K rows of centroid_dim(), row-major

    int centroid_dim() const { return flavor == QuantFlavor::PQ ? dim / L : dim; }
    std::span<const double> centroid(int layer, int code) const;
    std::span<double> centroid(int layer, int code);
};

// Per-item code sequences of fixed length L, unique across items.
struct SemanticIdTable {
    int L = 0;
    int K = 0;
    std::vector<ItemId> items;
    std::vector<int32_t> codes; // row-major n x L

    static SemanticIdTable create(int L, int K, std::vector<ItemId> items,
                                  std::vector<int32_t> codes);

    size_t size() const { return items.size(); }
    std::span<const int32_t> id_of(size_t row) const {
        return {codes.data() + row * static_cast<size_t>(L),
                static_cast<size_t>(L)};
    }
    size_t row_of(const ItemId& item) const;
    bool has(const ItemId& item) const { return index_.count(item) != 0; }

private:
    std::unordered_map<ItemId, size_t> index_;
};

// Prefix tree over all assigned IDs. Children are keyed by code and kept
// ordered so traversal order is deterministic. Each node counts the items
// beneath it; a depth-L node is a leaf holding exactly one item row.
struct PrefixTrie {
    struct Node {
        std::map<int32_t, int32_t> children; // code -> node index
        int32_t item_count = 0;
        int32_t item_row = -1; // leaf only
    };
    int L = 0;
    std::vector<Node> nodes; // nodes[0] is the root

    const Node& root() const { return nodes[0]; }
    size_t node_count() const { return nodes.size(); }
    // Walks a (possibly empty) code prefix; -1 when the prefix is unoccupied.
    int32_t find(std::span<const int32_t> prefix) const;
};

struct QuantizeConfig {
    QuantFlavor flavor = QuantFlavor::RQ;
    int L = 4;
    int K = 256;
    int iters = 50;
    uint64_t seed = 1;
};

// Lloyd k-means with k-means++ seeding. Empty clusters are re-seeded from the
// point currently farthest from its centroid. Returns centroids (k rows) and
// writes per-point assignments; the within-cluster squared error is
// non-increasing over iterations.
struct KMeansResult {
    std::vector<double> centroids; // k x dim
    std::vector<int32_t> assign;   // n
    double error = 0.0;            // mean squared distance at the last assign
    std::vector<double> error_per_iter;
};
KMeansResult kmeans(std::span<const double> points, size_t n, int dim, int k,
                    int iters, uint64_t seed);

// Residual quantizer: layer 0 clusters the raw vectors, layer l the residuals
// after subtracting the first l assigned centroids.
CodebookSet fit_rq(const ItemEmbeddingTable& emb, const QuantizeConfig& cfg);

// Product quantizer: independent k-means per contiguous dim/L segment.
// Requires dim divisible by L.
CodebookSet fit_pq(const ItemEmbeddingTable& emb, const QuantizeConfig& cfg);

CodebookSet fit_codebooks(const ItemEmbeddingTable& emb, const QuantizeConfig& cfg);

// Nearest-centroid code sequence per item, before collision resolution.
// Ties go to the lowest code index.
std::vector<int32_t> quantize_codes(const ItemEmbeddingTable& emb,
                                    const CodebookSet& cb);

// Codes plus collision resolution: whenever several items land on the same
// full sequence, all but the first (by item id) re-draw their final token
// uniformly from the codes still unused under the shared length-(L-1) prefix.
// Tokens 0..L-2 are never altered. Throws when more than K items share one
// length-(L-1) prefix, naming the prefix.
SemanticIdTable assign_ids(const ItemEmbeddingTable& emb, const CodebookSet& cb,
                           uint64_t seed);

PrefixTrie build_trie(const SemanticIdTable& ids);

// Mean squared distance between embeddings and their reconstructions: sum of
// assigned centroids for RQ, concatenation for PQ.
double reconstruction_error(const ItemEmbeddingTable& emb, const CodebookSet& cb,
                            const SemanticIdTable& ids);

} // namespace tokrec
