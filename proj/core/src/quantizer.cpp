// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "tokrec/rng.hpp"

namespace tokrec {

std::string to_string(QuantFlavor f) {
    return f == QuantFlavor::RQ ? "rq" : "pq";
}

QuantFlavor quant_flavor_from_string(const std::string& s) {
    if (s == "rq") return QuantFlavor::RQ;
    if (s == "pq") return QuantFlavor::PQ;
    throw ContractError("unknown quantizer flavor \"" + s + "\" (expected rq or pq)");
}

std::span<const double> CodebookSet::centroid(int layer, int code) const {
    size_t w = static_cast<size_t>(centroid_dim());
    return {centroids.data() + (static_cast<size_t>(layer) * K + code) * w, w};
}

std::span<double> CodebookSet::centroid(int layer, int code) {
    size_t w = static_cast<size_t>(centroid_dim());
    return {centroids.data() + (static_cast<size_t>(layer) * K + code) * w, w};
}

SemanticIdTable SemanticIdTable::create(int L, int K, std::vector<ItemId> items,
                                        std::vector<int32_t> codes) {
    require(L >= 1 && K >= 1, "id table: L and K must be >= 1");
    require(codes.size() == items.size() * static_cast<size_t>(L),
            "id table: codes size does not match items * L");
    SemanticIdTable t;
    t.L = L;
    t.K = K;
    t.items = std::move(items);
    t.codes = std::move(codes);
    for (int32_t c : t.codes)
        require(c >= 0 && c < K, "id table: code out of range");
    t.index_.reserve(t.items.size());
    std::set<std::vector<int32_t>> seen;
    for (size_t i = 0; i < t.items.size(); ++i) {
        bool fresh = t.index_.emplace(t.items[i], i).second;
        require(fresh, "id table: duplicate item " + t.items[i]);
        auto id = t.id_of(i);
        bool unique = seen.emplace(id.begin(), id.end()).second;
        require(unique, "id table: duplicate code sequence for item " + t.items[i]);
    }
    return t;
}

size_t SemanticIdTable::row_of(const ItemId& item) const {
    auto it = index_.find(item);
    require(it != index_.end(), "id table: unknown item " + item);
    return it->second;
}

int32_t PrefixTrie::find(std::span<const int32_t> prefix) const {
    int32_t cur = 0;
    for (int32_t code : prefix) {
        auto it = nodes[cur].children.find(code);
        if (it == nodes[cur].children.end()) return -1;
        cur = it->second;
    }
    return cur;
}

namespace {

double sq_dist(const double* a, const double* b, int dim) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
        double diff = a[d] - b[d];
        s += diff * diff;
    }
    return s;
}

} // namespace

KMeansResult kmeans(std::span<const double> points, size_t n, int dim, int k,
                    int iters, uint64_t seed) {
    require(dim >= 1, "kmeans: dim must be >= 1");
    require(k >= 1, "kmeans: k must be >= 1");
    require(n >= static_cast<size_t>(k), "kmeans: need at least k points");
    require(points.size() == n * static_cast<size_t>(dim), "kmeans: bad points size");
    require(iters >= 1, "kmeans: iters must be >= 1");
    Rng rng(seed);

    // k-means++ seeding: first centroid uniform, the rest D^2-weighted, so a
    // point at zero distance from a chosen centroid is never picked again.
    KMeansResult res;
    res.centroids.resize(static_cast<size_t>(k) * dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    size_t first = rng.uniform_index(n);
    std::copy_n(points.data() + first * dim, dim, res.centroids.begin());
    for (int c = 1; c < k; ++c) {
        const double* prev = &res.centroids[(static_cast<size_t>(c) - 1) * dim];
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(points.data() + i * dim, prev, dim));
            total += d2[i];
        }
        size_t pick;
        if (total > 0.0) {
            pick = rng.discrete(d2);
        } else {
            pick = rng.uniform_index(n); // all points identical
        }
        std::copy_n(points.data() + pick * dim, dim, res.centroids.begin() + static_cast<size_t>(c) * dim);
    }

    res.assign.assign(n, 0);
    std::vector<double> sums(static_cast<size_t>(k) * dim);
    std::vector<int64_t> counts(k);
    std::vector<double> point_err(n);
    for (int it = 0; it < iters; ++it) {
        // assignment, ties to the lowest centroid index
        double total_err = 0.0;
        for (size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(points.data() + i * dim, res.centroids.data(), dim);
            for (int c = 1; c < k; ++c) {
                double d = sq_dist(points.data() + i * dim,
                                   &res.centroids[static_cast<size_t>(c) * dim], dim);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            res.assign[i] = best;
            point_err[i] = best_d;
            total_err += best_d;
        }
        res.error = total_err / static_cast<double>(n);
        res.error_per_iter.push_back(res.error);
        if (it + 1 == iters) break;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (size_t i = 0; i < n; ++i) {
            double* s = &sums[static_cast<size_t>(res.assign[i]) * dim];
            const double* p = points.data() + i * dim;
            for (int d = 0; d < dim; ++d) s[d] += p[d];
            ++counts[res.assign[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            double inv = 1.0 / static_cast<double>(counts[c]);
            for (int d = 0; d < dim; ++d)
                res.centroids[static_cast<size_t>(c) * dim + d] =
                    sums[static_cast<size_t>(c) * dim + d] * inv;
        }
        // Re-seed empty clusters from the farthest point (lowest index on
        // ties); each reclaimed point is excluded from later re-seeds.
        std::vector<bool> taken(n, false);
        for (int c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            size_t far = n;
            double far_d = -1.0;
            for (size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                if (point_err[i] > far_d) {
                    far_d = point_err[i];
                    far = i;
                }
            }
            if (far == n) break;
            taken[far] = true;
            std::copy_n(points.data() + far * dim, dim,
                        res.centroids.begin() + static_cast<size_t>(c) * dim);
        }
    }
    return res;
}

CodebookSet fit_rq(const ItemEmbeddingTable& emb, const QuantizeConfig& cfg) {
    require(cfg.L >= 1 && cfg.K >= 1, "fit_rq: L and K must be >= 1");
    require(emb.size() >= static_cast<size_t>(cfg.K),
            "fit_rq: need at least K items");
    CodebookSet cb;
    cb.flavor = QuantFlavor::RQ;
    cb.L = cfg.L;
    cb.K = cfg.K;
    cb.dim = emb.dim;
    cb.seed = cfg.seed;
    cb.centroids.resize(static_cast<size_t>(cfg.L) * cfg.K * emb.dim);

    std::vector<double> residual(emb.data);
    size_t n = emb.size();
    for (int l = 0; l < cfg.L; ++l) {
        auto km = kmeans(residual, n, emb.dim, cfg.K, cfg.iters,
                         derive_seed(cfg.seed, static_cast<uint64_t>(l)));
        std::copy(km.centroids.begin(), km.centroids.end(),
                  cb.centroids.begin() + static_cast<size_t>(l) * cfg.K * emb.dim);
        for (size_t i = 0; i < n; ++i) {
            const double* c = &km.centroids[static_cast<size_t>(km.assign[i]) * emb.dim];
            double* r = &residual[i * static_cast<size_t>(emb.dim)];
            for (int d = 0; d < emb.dim; ++d) r[d] -= c[d];
        }
    }
    return cb;
}

CodebookSet fit_pq(const ItemEmbeddingTable& emb, const QuantizeConfig& cfg) {
    require(cfg.L >= 1 && cfg.K >= 1, "fit_pq: L and K must be >= 1");
    require(emb.dim % cfg.L == 0, "fit_pq: dim must be divisible by L");
    require(emb.size() >= static_cast<size_t>(cfg.K),
            "fit_pq: need at least K items");
    CodebookSet cb;
    cb.flavor = QuantFlavor::PQ;
    cb.L = cfg.L;
    cb.K = cfg.K;
    cb.dim = emb.dim;
    cb.seed = cfg.seed;
    int sub = emb.dim / cfg.L;
    cb.centroids.resize(static_cast<size_t>(cfg.L) * cfg.K * sub);

    size_t n = emb.size();
    std::vector<double> segment(n * static_cast<size_t>(sub));
    for (int l = 0; l < cfg.L; ++l) {
        for (size_t i = 0; i < n; ++i)
            std::copy_n(emb.data.data() + i * emb.dim + static_cast<size_t>(l) * sub,
                        sub, segment.begin() + i * sub);
        auto km = kmeans(segment, n, sub, cfg.K, cfg.iters,
                         derive_seed(cfg.seed, static_cast<uint64_t>(l)));
        std::copy(km.centroids.begin(), km.centroids.end(),
                  cb.centroids.begin() + static_cast<size_t>(l) * cfg.K * sub);
    }
    return cb;
}

CodebookSet fit_codebooks(const ItemEmbeddingTable& emb, const QuantizeConfig& cfg) {
    return cfg.flavor == QuantFlavor::PQ ? fit_pq(emb, cfg) : fit_rq(emb, cfg);
}

std::vector<int32_t> quantize_codes(const ItemEmbeddingTable& emb,
                                    const CodebookSet& cb) {
    require(emb.dim == cb.dim, "quantize: embedding dim does not match codebooks");
    size_t n = emb.size();
    std::vector<int32_t> codes(n * static_cast<size_t>(cb.L));
    int sub = cb.centroid_dim();
    std::vector<double> residual;
    if (cb.flavor == QuantFlavor::RQ) residual = emb.data;
    for (int l = 0; l < cb.L; ++l) {
        for (size_t i = 0; i < n; ++i) {
            const double* v = cb.flavor == QuantFlavor::RQ
                                  ? &residual[i * static_cast<size_t>(cb.dim)]
                                  : emb.data.data() + i * cb.dim + static_cast<size_t>(l) * sub;
            int best = 0;
            double best_d = sq_dist(v, cb.centroid(l, 0).data(), sub);
            for (int c = 1; c < cb.K; ++c) {
                double d = sq_dist(v, cb.centroid(l, c).data(), sub);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            codes[i * static_cast<size_t>(cb.L) + l] = best;
        }
        if (cb.flavor == QuantFlavor::RQ) {
            for (size_t i = 0; i < n; ++i) {
                auto c = cb.centroid(l, codes[i * static_cast<size_t>(cb.L) + l]);
                double* r = &residual[i * static_cast<size_t>(cb.dim)];
                for (int d = 0; d < cb.dim; ++d) r[d] -= c[d];
            }
        }
    }
    return codes;
}

SemanticIdTable assign_ids(const ItemEmbeddingTable& emb, const CodebookSet& cb,
                           uint64_t seed) {
    auto codes = quantize_codes(emb, cb);
    size_t n = emb.size();
    int L = cb.L;
    Rng rng(derive_seed(seed, 0xC0111DE));

    // Two phases over items in id order: originals first, so nobody loses a
    // code to somebody else's re-draw, then every true duplicate re-draws its
    // final token among the codes still free under its prefix.
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return emb.ids[a] < emb.ids[b]; });

    std::map<std::vector<int32_t>, std::set<int32_t>> used; // prefix -> final codes
    std::vector<size_t> duplicates;
    for (size_t idx : order) {
        const int32_t* row = &codes[idx * static_cast<size_t>(L)];
        std::vector<int32_t> prefix(row, row + L - 1);
        if (!used[prefix].insert(row[L - 1]).second) duplicates.push_back(idx);
    }
    for (size_t idx : duplicates) {
        int32_t* row = &codes[idx * static_cast<size_t>(L)];
        std::vector<int32_t> prefix(row, row + L - 1);
        auto& taken = used[prefix];
        if (taken.size() >= static_cast<size_t>(cb.K)) {
            std::string p;
            for (int32_t c : prefix) p += std::to_string(c) + ",";
            if (!p.empty()) p.pop_back();
            throw ContractError("assign_ids: more than K items share prefix [" + p +
                                "], cannot disambiguate item " + emb.ids[idx]);
        }
        std::vector<int32_t> unused;
        unused.reserve(cb.K - taken.size());
        for (int32_t c = 0; c < cb.K; ++c)
            if (!taken.count(c)) unused.push_back(c);
        int32_t pick = unused[rng.uniform_index(unused.size())];
        row[L - 1] = pick;
        taken.insert(pick);
    }
    return SemanticIdTable::create(L, cb.K, emb.ids, std::move(codes));
}

PrefixTrie build_trie(const SemanticIdTable& ids) {
    PrefixTrie trie;
    trie.L = ids.L;
    trie.nodes.emplace_back();
    for (size_t i = 0; i < ids.size(); ++i) {
        auto id = ids.id_of(i);
        int32_t cur = 0;
        ++trie.nodes[0].item_count;
        for (int l = 0; l < ids.L; ++l) {
            auto [it, fresh] = trie.nodes[cur].children.try_emplace(
                id[l], static_cast<int32_t>(trie.nodes.size()));
            if (fresh) trie.nodes.emplace_back();
            cur = it->second;
            ++trie.nodes[cur].item_count;
        }
        trie.nodes[cur].item_row = static_cast<int32_t>(i);
    }
    return trie;
}

double reconstruction_error(const ItemEmbeddingTable& emb, const CodebookSet& cb,
                            const SemanticIdTable& ids) {
    require(emb.size() == ids.size(), "reconstruction_error: table size mismatch");
    require(emb.dim == cb.dim, "reconstruction_error: dim mismatch");
    size_t n = emb.size();
    int sub = cb.centroid_dim();
    double total = 0.0;
    std::vector<double> rec(cb.dim);
    for (size_t i = 0; i < n; ++i) {
        auto id = ids.id_of(ids.row_of(emb.ids[i]));
        std::fill(rec.begin(), rec.end(), 0.0);
        for (int l = 0; l < cb.L; ++l) {
            auto c = cb.centroid(l, id[l]);
            if (cb.flavor == QuantFlavor::RQ) {
                for (int d = 0; d < cb.dim; ++d) rec[d] += c[d];
            } else {
                for (int d = 0; d < sub; ++d) rec[l * sub + d] = c[d];
            }
        }
        total += sq_dist(emb.row(i).data(), rec.data(), cb.dim);
    }
    return total / static_cast<double>(n);
}

} // namespace tokrec
