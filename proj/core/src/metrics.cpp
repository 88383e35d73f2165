// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace tokrec {

double hit_at_k(std::span<const ScoredItem> ranked, int32_t target_row, int k) {
    require(k >= 1, "metrics: k must be positive");
    int top = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int i = 0; i < top; ++i)
        if (ranked[i].item_row == target_row) return 1.0;
    return 0.0;
}

double ndcg_at_k(std::span<const ScoredItem> ranked, int32_t target_row, int k) {
    require(k >= 1, "metrics: k must be positive");
    int top = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int i = 0; i < top; ++i)
        if (ranked[i].item_row == target_row)
            return 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return 0.0;
}

namespace {

// Rows ordered by (train count, item id); ascending puts the least frequent
// first. Items absent from the counts have count zero.
std::vector<size_t> rows_by_frequency(const SemanticIdTable& ids,
                                      const std::map<ItemId, int64_t>& counts) {
    size_t n = ids.items.size();
    std::vector<int64_t> cnt(n, 0);
    for (size_t r = 0; r < n; ++r) {
        auto it = counts.find(ids.items[r]);
        if (it != counts.end()) cnt[r] = it->second;
    }
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (cnt[a] != cnt[b]) return cnt[a] < cnt[b];
        return ids.items[a] < ids.items[b];
    });
    return order;
}

} // namespace

HeadTailSplit head_tail_split(const SemanticIdTable& ids,
                              const std::map<ItemId, int64_t>& train_counts,
                              bool by_mass) {
    size_t n = ids.items.size();
    require(n >= 1, "head_tail_split: empty id table");
    std::vector<size_t> asc = rows_by_frequency(ids, train_counts);
    HeadTailSplit split;
    split.is_head.assign(n, false);
    if (by_mass) {
        int64_t total = 0;
        std::vector<int64_t> cnt(n, 0);
        for (size_t r = 0; r < n; ++r) {
            auto it = train_counts.find(ids.items[r]);
            if (it != train_counts.end()) cnt[r] = it->second;
            total += cnt[r];
        }
        // walk from the most frequent until at least half the mass is covered
        int64_t acc = 0;
        for (size_t i = n; i-- > 0;) {
            size_t row = asc[i];
            if (2 * acc >= total) break;
            split.is_head[row] = true;
            acc += cnt[row];
        }
    } else {
        size_t head_n = n / 2; // most frequent half by item count
        for (size_t i = 0; i < head_n; ++i) split.is_head[asc[n - 1 - i]] = true;
    }
    for (bool h : split.is_head) (h ? split.head_items : split.tail_items) += 1;
    return split;
}

int EvalConfig::effective_width() const {
    require(!ks.empty(), "eval: ks must not be empty");
    int mx = 0;
    for (int k : ks) {
        require(k >= 1, "eval: k must be positive");
        mx = std::max(mx, k);
    }
    return beam_width > 0 ? beam_width : 2 * mx;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    auto metric_map = [](const std::map<int, double>& m) {
        nlohmann::json o = nlohmann::json::object();
        for (const auto& [k, v] : m) o[std::to_string(k)] = v;
        return o;
    };
    auto block = [&](const MetricBlock& b) {
        nlohmann::json o = nlohmann::json::object();
        o["count"] = b.count;
        o["hit"] = metric_map(b.hit);
        o["ndcg"] = metric_map(b.ndcg);
        return o;
    };
    j["hit"] = metric_map(overall.hit);
    j["ndcg"] = metric_map(overall.ndcg);
    j["head"] = block(head);
    j["tail"] = block(tail);
    j["decile"]["truth"] = decile.truth;
    j["decile"]["pred"] = decile.pred;
    j["decile"]["l1"] = decile.l1;
    return j.dump();
}

template <typename T>
EvalReport evaluate(const Model<T>& m, std::span<const SplitSample> samples,
                    const SemanticIdTable& ids, const PrefixTrie& trie,
                    const std::map<ItemId, int64_t>& train_counts,
                    const EvalConfig& cfg) {
    require(!samples.empty(), "evaluate: empty test set");
    size_t n = ids.items.size();
    require(n >= 10, "evaluate: decile report needs at least 10 distinct items");
    int width = cfg.effective_width();

    HeadTailSplit split = head_tail_split(ids, train_counts, cfg.head_by_mass);
    std::vector<size_t> asc = rows_by_frequency(ids, train_counts);
    std::vector<int> bin(n, 0); // 0 = least frequent tenth
    for (size_t i = 0; i < n; ++i)
        bin[asc[i]] = static_cast<int>(i * 10 / n);

    EvalReport rep;
    for (int k : cfg.ks) {
        for (MetricBlock* b : {&rep.overall, &rep.head, &rep.tail}) {
            b->hit[k] = 0.0;
            b->ndcg[k] = 0.0;
        }
    }

    Workspace<T> ws;
    std::vector<ItemId> with_target;
    for (const SplitSample& s : samples) {
        with_target.assign(s.history.begin(), s.history.end());
        with_target.push_back(s.target);
        FlatSample flat =
            flatten_history(std::span<const ItemId>(with_target), ids, cfg.max_items);
        int32_t target_row = static_cast<int32_t>(ids.row_of(s.target));
        EncodedSource<T> src =
            model_encode(m, std::span<const int32_t>(flat.x), ws);
        std::vector<ScoredItem> ranked =
            constrained_beam_search(m, src, trie, ids, width, ws);
        MetricBlock& sub = split.is_head[target_row] ? rep.head : rep.tail;
        for (int k : cfg.ks) {
            double h = hit_at_k(ranked, target_row, k);
            double d = ndcg_at_k(ranked, target_row, k);
            rep.overall.hit[k] += h;
            rep.overall.ndcg[k] += d;
            sub.hit[k] += h;
            sub.ndcg[k] += d;
        }
        rep.overall.count += 1;
        sub.count += 1;
        rep.decile.truth[bin[target_row]] += 1;
        rep.decile.pred[bin[ranked.front().item_row]] += 1;
    }

    for (MetricBlock* b : {&rep.overall, &rep.head, &rep.tail}) {
        if (b->count == 0) continue;
        for (auto& [k, v] : b->hit) v /= static_cast<double>(b->count);
        for (auto& [k, v] : b->ndcg) v /= static_cast<double>(b->count);
    }
    double total = static_cast<double>(rep.overall.count);
    double l1 = 0.0;
    for (int b = 0; b < 10; ++b)
        l1 += std::abs(static_cast<double>(rep.decile.truth[b]) / total -
                       static_cast<double>(rep.decile.pred[b]) / total);
    rep.decile.l1 = l1;
    return rep;
}

template EvalReport evaluate<float>(const Model<float>&,
                                    std::span<const SplitSample>,
                                    const SemanticIdTable&, const PrefixTrie&,
                                    const std::map<ItemId, int64_t>&,
                                    const EvalConfig&);
template EvalReport evaluate<double>(const Model<double>&,
                                     std::span<const SplitSample>,
                                     const SemanticIdTable&, const PrefixTrie&,
                                     const std::map<ItemId, int64_t>&,
                                     const EvalConfig&);

} // namespace tokrec
