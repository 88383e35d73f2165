// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/weights.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace tokrec {

double dispersion(std::span<const size_t> rows, const ItemEmbeddingTable& emb) {
    require(!rows.empty(), "dispersion: empty group");
    int dim = emb.dim;
    std::vector<double> mean(dim, 0.0);
    for (size_t r : rows) {
        auto v = emb.row(r);
        for (int d = 0; d < dim; ++d) mean[d] += v[d];
    }
    double inv = 1.0 / static_cast<double>(rows.size());
    for (int d = 0; d < dim; ++d) mean[d] *= inv;
    double total = 0.0;
    for (size_t r : rows) {
        auto v = emb.row(r);
        for (int d = 0; d < dim; ++d) {
            double diff = v[d] - mean[d];
            total += diff * diff;
        }
    }
    return total * inv;
}

DispersionProfile dispersion_profile(const SemanticIdTable& ids,
                                     const ItemEmbeddingTable& emb) {
    require(ids.size() == emb.size(), "dispersion_profile: table size mismatch");
    require(ids.size() > 0, "dispersion_profile: empty tables");
    size_t n = ids.size();
    int L = ids.L;
    DispersionProfile p;
    p.mu.resize(L + 1);

    // Groups at prefix length k, item-weighted: mu_k = sum_G (|G|/n) V(G).
    for (int k = 0; k <= L; ++k) {
        std::map<std::vector<int32_t>, std::vector<size_t>> groups;
        for (size_t i = 0; i < n; ++i) {
            auto id = ids.id_of(i);
            size_t row = emb.index_of(ids.items[i]);
            groups[{id.begin(), id.begin() + k}].push_back(row);
        }
        double mu = 0.0;
        for (const auto& [prefix, rows] : groups)
            mu += static_cast<double>(rows.size()) / static_cast<double>(n) *
                  dispersion(rows, emb);
        p.mu[k] = mu;
    }
    p.delta.resize(L);
    for (int k = 0; k < L; ++k) p.delta[k] = p.mu[k] - p.mu[k + 1];
    return p;
}

std::vector<double> front_greater_weights(const DispersionProfile& profile) {
    size_t L = profile.delta.size();
    require(L >= 1, "front_greater_weights: empty profile");
    std::vector<double> w(L);
    double total = 0.0;
    for (size_t k = 0; k < L; ++k) {
        w[k] = std::max(profile.delta[k], 0.0);
        total += w[k];
    }
    if (total <= 0.0) {
        std::fill(w.begin(), w.end(), 1.0);
        return w;
    }
    double scale = static_cast<double>(L) / total;
    for (auto& v : w) v *= scale;
    return w;
}

int64_t FrequencyTable::count(int32_t token) const {
    auto it = counts.find(token);
    return it == counts.end() ? 0 : it->second;
}

double FrequencyTable::effective_number(int64_t n) const {
    require(n >= 1, "effective_number: n must be >= 1");
    require(beta >= 0.0 && beta < 1.0, "effective_number: beta outside [0, 1)");
    return (1.0 - std::pow(beta, static_cast<double>(n))) / (1.0 - beta);
}

double FrequencyTable::raw_weight(int32_t token) const {
    int64_t n = std::max<int64_t>(count(token), 1); // unseen tokens act as n = 1
    return 1.0 / effective_number(n);
}

FrequencyTable token_frequencies(std::span<const SplitSample> train,
                                 const SemanticIdTable& ids, double beta) {
    require(beta >= 0.0 && beta < 1.0, "token_frequencies: beta outside [0, 1)");
    FrequencyTable t;
    t.space = TokenSpace(ids.L, ids.K);
    t.beta = beta;
    for (const auto& s : train) {
        auto codes = ids.id_of(ids.row_of(s.target));
        for (int l = 0; l < ids.L; ++l) ++t.counts[t.space.token(l, codes[l])];
    }
    return t;
}

std::vector<double> frequency_weights(std::span<const int32_t> target_codes,
                                      const FrequencyTable& freq) {
    size_t L = target_codes.size();
    require(L == static_cast<size_t>(freq.space.L),
            "frequency_weights: target length does not match the token space");
    std::vector<double> w(L);
    double total = 0.0;
    for (size_t l = 0; l < L; ++l) {
        w[l] = freq.raw_weight(
            freq.space.token(static_cast<int>(l), target_codes[l]));
        total += w[l];
    }
    double scale = static_cast<double>(L) / total;
    for (auto& v : w) v *= scale;
    return w;
}

namespace {

// purity = 1 - H / ln(n) over the training frequencies of the n items under
// a prefix; zero-count items stay in n but contribute no entropy mass.
double purity_of(const std::vector<int64_t>& item_counts) {
    size_t n = item_counts.size();
    if (n <= 1) return 1.0;
    int64_t total = 0;
    for (int64_t c : item_counts) total += c;
    if (total == 0) return 0.0; // no signal: as impure as uniform
    double h = 0.0;
    for (int64_t c : item_counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return 1.0 - h / std::log(static_cast<double>(n));
}

} // namespace

std::map<int32_t, double> purity_gain(const SemanticIdTable& ids,
                                      const std::map<ItemId, int64_t>& counts) {
    TokenSpace space(ids.L, ids.K);
    size_t n = ids.size();
    require(n > 0, "purity_gain: empty id table");

    // Item counts grouped by prefix, for prefix lengths 0..L.
    auto count_of = [&](size_t row) {
        auto it = counts.find(ids.items[row]);
        int64_t c = it == counts.end() ? 0 : it->second;
        require(c >= 0, "purity_gain: negative count for item " + ids.items[row]);
        return c;
    };
    std::vector<std::map<std::vector<int32_t>, std::vector<int64_t>>> by_len(ids.L + 1);
    for (size_t i = 0; i < n; ++i) {
        auto id = ids.id_of(i);
        int64_t c = count_of(i);
        for (int k = 0; k <= ids.L; ++k)
            by_len[k][{id.begin(), id.begin() + k}].push_back(c);
    }
    std::vector<std::map<std::vector<int32_t>, double>> purity(ids.L + 1);
    for (int k = 0; k <= ids.L; ++k)
        for (const auto& [prefix, cs] : by_len[k]) purity[k][prefix] = purity_of(cs);

    // A token's occurrences are its distinct (prefix, token) edges; the gain
    // averages purity(prefix + token) - purity(prefix) over them.
    std::map<int32_t, double> sum;
    std::map<int32_t, int64_t> occ;
    for (int k = 1; k <= ids.L; ++k) {
        for (const auto& [prefix, cs] : by_len[k]) {
            std::vector<int32_t> parent(prefix.begin(), prefix.end() - 1);
            int32_t tok = space.token(k - 1, prefix.back());
            sum[tok] += purity[k].at(prefix) - purity[k - 1].at(parent);
            ++occ[tok];
        }
    }
    std::map<int32_t, double> gain;
    for (const auto& [tok, s] : sum) gain[tok] = s / static_cast<double>(occ[tok]);
    return gain;
}

std::vector<double> layer_filter_ratio(const SemanticIdTable& ids,
                                       FilterRatioWeighting weighting) {
    size_t n = ids.size();
    require(n > 0, "layer_filter_ratio: empty id table");

    std::vector<double> out(ids.L);
    for (int k = 1; k <= ids.L; ++k) {
        // parent prefix -> child sizes, in one pass over items
        std::map<std::vector<int32_t>, std::map<int32_t, int64_t>> parents;
        for (size_t i = 0; i < n; ++i) {
            auto id = ids.id_of(i);
            std::vector<int32_t> parent(id.begin(), id.begin() + (k - 1));
            ++parents[parent][id[k - 1]];
        }
        // For one parent, the expectation over its items of
        // 1 - items(child)/items(parent).
        double acc = 0.0, norm = 0.0;
        for (const auto& [parent, children] : parents) {
            int64_t parent_items = 0;
            for (const auto& [code, cnt] : children) parent_items += cnt;
            double r = 0.0;
            for (const auto& [code, cnt] : children) {
                double frac_here = static_cast<double>(cnt) /
                                   static_cast<double>(parent_items);
                r += frac_here * (1.0 - frac_here);
            }
            double w = weighting == FilterRatioWeighting::ItemWeighted
                           ? static_cast<double>(parent_items)
                           : 1.0;
            acc += w * r;
            norm += w;
        }
        out[k - 1] = acc / norm;
    }
    return out;
}

} // namespace tokrec
