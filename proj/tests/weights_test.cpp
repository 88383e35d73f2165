// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "tokrec/common.hpp"
#include "tokrec/dataset.hpp"
#include "tokrec/quantizer.hpp"
#include "tokrec/rng.hpp"
#include "tokrec/synthetic.hpp"
#include "tokrec/weights.hpp"

using namespace tokrec;

namespace {

ItemEmbeddingTable table_from(std::vector<std::vector<double>> rows) {
    std::vector<ItemId> ids;
    std::vector<double> data;
    int dim = static_cast<int>(rows[0].size());
    for (size_t i = 0; i < rows.size(); ++i) {
        ids.push_back("i" + std::to_string(i));
        data.insert(data.end(), rows[i].begin(), rows[i].end());
    }
    return ItemEmbeddingTable::create(std::move(ids), std::move(data), dim);
}

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        size_t n = v.size();
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](size_t x, size_t y) { return v[x] < v[y]; });
        std::vector<double> r(n);
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
            for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    auto ra = ranks(a), rb = ranks(b);
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(ra.size());
    mb /= static_cast<double>(rb.size());
    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(da * db);
}

} // namespace

TEST_SUITE("weights") {

TEST_CASE("dispersion basics") {
    auto emb = table_from({{0, 0}, {2, 0}, {7, -3}});
    std::vector<size_t> single = {2};
    CHECK(dispersion(single, emb) == 0.0);
    std::vector<size_t> pair = {0, 1};
    CHECK(dispersion(pair, emb) == doctest::Approx(1.0));
    // Translation invariance.
    auto shifted = table_from({{100, -50}, {102, -50}, {7, -3}});
    CHECK(dispersion(pair, shifted) == doctest::Approx(1.0));
}

TEST_CASE("dispersion profile hits zero at singleton leaves") {
    auto emb = table_from({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
    auto ids = SemanticIdTable::create(2, 2, {"i0", "i1", "i2", "i3"},
                                       {0, 0, 0, 1, 1, 0, 1, 1});
    auto p = dispersion_profile(ids, emb);
    REQUIRE(p.mu.size() == 3);
    REQUIRE(p.delta.size() == 2);
    CHECK(p.mu[2] == doctest::Approx(0.0));
    CHECK(p.delta[0] == doctest::Approx(p.mu[0] - p.mu[1]));
    CHECK(p.delta[1] == doctest::Approx(p.mu[1] - p.mu[2]));
}

TEST_CASE("layer-one drop equals the between-pair variance component") {
    // Two tight pairs; the first token separates the pairs.
    auto emb = table_from({{0, 0}, {0.2, 0}, {10, 0}, {10.2, 0}});
    auto ids = SemanticIdTable::create(2, 2, {"i0", "i1", "i2", "i3"},
                                       {0, 0, 0, 1, 1, 0, 1, 1});
    auto p = dispersion_profile(ids, emb);
    // Brute force: mu0 over all four, mu1 averages the two pair groups.
    std::vector<size_t> all = {0, 1, 2, 3}, g0 = {0, 1}, g1 = {2, 3};
    double mu0 = dispersion(all, emb);
    double mu1 = 0.5 * dispersion(g0, emb) + 0.5 * dispersion(g1, emb);
    CHECK(p.mu[0] == doctest::Approx(mu0));
    CHECK(p.mu[1] == doctest::Approx(mu1));
    CHECK(p.delta[0] == doctest::Approx(mu0 - mu1));
    CHECK(p.delta[0] > 0.9 * mu0); // nearly all variance is between pairs
}

TEST_CASE("profile expectation is item-weighted, not group-uniform") {
    // Group sizes 3 and 1: the singleton contributes zero dispersion with
    // weight 1/4, not 1/2.
    auto emb = table_from({{0, 0}, {2, 0}, {4, 0}, {100, 0}});
    auto ids = SemanticIdTable::create(2, 4, {"i0", "i1", "i2", "i3"},
                                       {0, 0, 0, 1, 0, 2, 1, 0});
    auto p = dispersion_profile(ids, emb);
    std::vector<size_t> g0 = {0, 1, 2};
    CHECK(p.mu[1] == doctest::Approx(0.75 * dispersion(g0, emb)));
}

TEST_CASE("lemma 1 holds on random quantized instances") {
    // K tight clusters of at most K/2 items each: id assignment always has a
    // free suffix under every prefix, so the instances quantize cleanly.
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        int K = 6 + static_cast<int>(rng.uniform_index(7));
        int dim = 4 + static_cast<int>(rng.uniform_index(4));
        std::vector<double> data;
        std::vector<ItemId> names;
        for (int c = 0; c < K; ++c) {
            std::vector<double> center(dim);
            for (auto& v : center) v = 10.0 * rng.normal();
            int sz = 1 + static_cast<int>(rng.uniform_index(K / 2));
            for (int j = 0; j < sz; ++j) {
                names.push_back("i" + std::to_string(names.size()));
                for (int d = 0; d < dim; ++d)
                    data.push_back(center[d] + 0.3 * rng.normal());
            }
        }
        auto emb = ItemEmbeddingTable::create(names, data, dim);
        QuantizeConfig q;
        q.flavor = trial % 2 == 0 ? QuantFlavor::RQ : QuantFlavor::PQ;
        q.L = 2;
        q.K = K;
        q.iters = 10;
        q.seed = rng.next_u64();
        if (q.flavor == QuantFlavor::PQ && dim % q.L != 0) {
            q.flavor = QuantFlavor::RQ;
        }
        auto cb = fit_codebooks(emb, q);
        auto ids = assign_ids(emb, cb, q.seed);
        auto p = dispersion_profile(ids, emb);
        for (size_t k = 1; k < p.mu.size(); ++k)
            CHECK(p.mu[k] <= p.mu[k - 1] + 1e-9);
    }
}

TEST_CASE("front-greater weights follow the hand example") {
    DispersionProfile p;
    p.mu = {3, 1, 1, 0, 0};
    p.delta = {2, 0, 1, 0};
    auto w = front_greater_weights(p);
    REQUIRE(w.size() == 4);
    CHECK(w[0] == doctest::Approx(8.0 / 3.0));
    CHECK(w[1] == doctest::Approx(0.0));
    CHECK(w[2] == doctest::Approx(4.0 / 3.0));
    CHECK(w[3] == doctest::Approx(0.0));
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("equal or vanishing drops fall back to uniform weights") {
    DispersionProfile equal;
    equal.delta = {0.7, 0.7, 0.7};
    auto w = front_greater_weights(equal);
    for (double v : w) CHECK(v == doctest::Approx(1.0));

    DispersionProfile zero;
    zero.delta = {0.0, 0.0, 0.0};
    auto wz = front_greater_weights(zero);
    for (double v : wz) CHECK(v == doctest::Approx(1.0));

    DispersionProfile negative;
    negative.delta = {-1.0, -2.0, -0.5};
    auto wn = front_greater_weights(negative);
    for (double v : wn) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("front-greater weights are scale invariant") {
    Rng rng(31);
    DispersionProfile p;
    for (int i = 0; i < 5; ++i) p.delta.push_back(rng.uniform() - 0.3);
    auto w1 = front_greater_weights(p);
    for (auto& d : p.delta) d *= 37.5;
    auto w2 = front_greater_weights(p);
    for (size_t i = 0; i < w1.size(); ++i)
        CHECK(w1[i] == doctest::Approx(w2[i]).epsilon(1e-12));
}

TEST_CASE("token frequencies count training targets per layer") {
    auto ids = SemanticIdTable::create(2, 4, {"a", "b"}, {1, 2, 3, 2});
    std::vector<SplitSample> train;
    train.push_back({"u1", {"b"}, "a"});
    auto f1 = token_frequencies(train, ids, 0.99);
    CHECK(f1.counts.size() == 2); // one token per layer
    CHECK(f1.count(ids.id_of(0)[0]) == 1);
    CHECK(f1.count(4 + 2) == 1); // layer 1, code 2
    // Duplicating the sample doubles every count.
    train.push_back(train[0]);
    auto f2 = token_frequencies(train, ids, 0.99);
    CHECK(f2.count(1) == 2);
    CHECK(f2.count(4 + 2) == 2);
    // History items contribute nothing.
    CHECK(f2.count(3) == 0);
}

TEST_CASE("layer-one token counts track item popularity on a zipf world") {
    SynthConfig s;
    s.items = 100;
    s.dim = 8;
    s.users = 800;
    s.zipf_s = 1.2;
    s.seed = 21;
    auto world = generate_synthetic(s);
    QuantizeConfig q;
    q.L = 2;
    q.K = 16;
    q.iters = 20;
    q.seed = 3;
    auto cb = fit_rq(world.emb, q);
    auto ids = assign_ids(world.emb, cb, 3);
    auto split = leave_one_out_split(world.interactions);
    auto freq = token_frequencies(split.train, ids, 0.99);

    // A first token's count is exactly the pooled training-target count of
    // the items that share it.
    std::map<ItemId, int64_t> item_counts;
    for (auto& smp : split.train) item_counts[smp.target] += 1;
    std::vector<int64_t> expected(q.K, 0);
    for (auto& [item, n] : item_counts)
        expected[ids.id_of(ids.row_of(item))[0]] += n;
    int64_t total = 0, top = 0;
    for (int c = 0; c < q.K; ++c) {
        CHECK(freq.count(freq.space.token(0, c)) == expected[c]);
        total += expected[c];
        top = std::max(top, expected[c]);
    }
    // Zipf skew survives pooling: the heaviest token far exceeds the mean.
    CHECK(static_cast<double>(top) * q.K >= 2.0 * static_cast<double>(total));
}

TEST_CASE("effective numbers follow the closed form") {
    FrequencyTable t;
    t.beta = 0.99;
    CHECK(t.effective_number(1) == doctest::Approx(1.0));
    CHECK(t.effective_number(2) == doctest::Approx(1.99));
    // 1 / E_2 with beta = 0.99.
    CHECK(1.0 / t.effective_number(2) == doctest::Approx(0.502513).epsilon(1e-6));
    // Geometric limit: E_n -> 1 / (1 - beta) = 100.
    CHECK(t.effective_number(1000000) == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("lemma 2: effective-number increments are exactly beta^(n-1)") {
    for (double beta : {0.9, 0.99, 0.999}) {
        FrequencyTable t;
        t.beta = beta;
        double prev = t.effective_number(1);
        double prev_diff = 1.0; // E_1 - E_0 = beta^0
        for (int64_t n = 2; n <= 10000; ++n) {
            double e = t.effective_number(n);
            double diff = e - prev;
            CHECK(std::abs(diff - std::pow(beta, static_cast<double>(n - 1))) <= 1e-12);
            // Concave: second differences <= 0. Once increments shrink below
            // one ulp of E_n the computed sequence plateaus and single-ulp
            // bumps appear, so grant the same slack as the identity above.
            CHECK(diff <= prev_diff + 1e-12);
            CHECK(e >= prev); // non-decreasing
            prev = e;
            prev_diff = diff;
        }
    }
}

TEST_CASE("rarer tokens get strictly larger raw weights") {
    FrequencyTable t;
    t.space = TokenSpace(2, 4);
    t.beta = 0.99;
    t.counts[0] = 3;
    t.counts[1] = 10;
    t.counts[4] = 1;
    CHECK(t.raw_weight(4) > t.raw_weight(0));
    CHECK(t.raw_weight(0) > t.raw_weight(1));
    // Unseen tokens weigh like n = 1.
    CHECK(t.raw_weight(2) == doctest::Approx(t.raw_weight(4)));
}

TEST_CASE("frequency weights normalize to the id length") {
    auto ids = SemanticIdTable::create(3, 4, {"a", "b"}, {0, 1, 2, 0, 1, 3});
    std::vector<SplitSample> train;
    train.push_back({"u", {"b"}, "a"});
    train.push_back({"u", {"a"}, "b"});
    train.push_back({"u", {"b"}, "a"});
    auto freq = token_frequencies(train, ids, 0.99);
    auto w = frequency_weights(ids.id_of(0), freq);
    REQUIRE(w.size() == 3);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(3.0).epsilon(1e-9));
    // Token 2@layer2 is rarer for item a than the shared first two tokens.
    CHECK(w[2] > w[0]);
    CHECK(w[0] == doctest::Approx(w[1])); // same counts, same weight

    // All-equal counts collapse to uniform weights.
    std::vector<SplitSample> once = {{"u", {"b"}, "a"}};
    auto freq1 = token_frequencies(once, ids, 0.99);
    auto w1 = frequency_weights(ids.id_of(0), freq1);
    for (double v : w1) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("purity follows the entropy arithmetic") {
    // Two items under one first token; counts {3, 1}.
    auto ids = SemanticIdTable::create(2, 2, {"a", "b", "c"},
                                       {0, 0, 0, 1, 1, 0});
    std::map<ItemId, int64_t> counts = {{"a", 3}, {"b", 1}, {"c", 2}};
    auto gain = purity_gain(ids, counts);
    // Token 0 at layer 1 leads from the root (purity of {3,1,2} counts) to
    // the {3,1} prefix.
    double h_root = 0.0;
    for (double p : {3.0 / 6.0, 1.0 / 6.0, 2.0 / 6.0}) h_root -= p * std::log(p);
    double purity_root = 1.0 - h_root / std::log(3.0);
    double h_01 = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
    double purity_01 = 1.0 - h_01 / std::log(2.0);
    CHECK(purity_01 == doctest::Approx(0.18872187554086717).epsilon(1e-9));
    CHECK(gain.at(0) == doctest::Approx(purity_01 - purity_root));
    // Token 1 at layer 1 reaches a singleton: purity 1.
    CHECK(gain.at(1) == doctest::Approx(1.0 - purity_root));
    // Layer-2 code 0 occurs under prefixes 0 (gain 1 - purity_01) and
    // 1 (gain 0, the parent is already a singleton); the report averages.
    CHECK(gain.at(2 + 0) == doctest::Approx(0.5 * (1.0 - purity_01)));
    // Layer-2 code 1 occurs only under prefix 0.
    CHECK(gain.at(2 + 1) == doctest::Approx(1.0 - purity_01));
}

TEST_CASE("purity gains stay within [-1, 1] on random tables") {
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 20 + static_cast<int>(rng.uniform_index(50));
        std::vector<ItemId> names;
        std::vector<int32_t> codes;
        std::set<std::vector<int32_t>> seen;
        int added = 0;
        while (added < n) {
            std::vector<int32_t> id = {
                static_cast<int32_t>(rng.uniform_index(4)),
                static_cast<int32_t>(rng.uniform_index(4)),
                static_cast<int32_t>(rng.uniform_index(8))};
            if (!seen.insert(id).second) continue;
            names.push_back("i" + std::to_string(added));
            codes.insert(codes.end(), id.begin(), id.end());
            ++added;
        }
        auto ids = SemanticIdTable::create(3, 8, names, codes);
        std::map<ItemId, int64_t> counts;
        for (auto& nm : names) counts[nm] = 1 + static_cast<int64_t>(rng.uniform_index(20));
        auto gain = purity_gain(ids, counts);
        for (auto& [tok, g] : gain) {
            CHECK(g >= -1.0 - 1e-12);
            CHECK(g <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("filter ratios match the hand-counted fixtures") {
    // {00, 01, 10}: first token keeps 2/3 or 1/3 of the catalog.
    auto t1 = SemanticIdTable::create(2, 2, {"a", "b", "c"},
                                      {0, 0, 0, 1, 1, 0});
    auto item_weighted = layer_filter_ratio(t1, FilterRatioWeighting::ItemWeighted);
    REQUIRE(item_weighted.size() == 2);
    CHECK(item_weighted[0] == doctest::Approx(4.0 / 9.0));
    CHECK(item_weighted[1] == doctest::Approx(1.0 / 3.0));

    // {00, 10, 20}: all items split apart at the first token.
    auto t2 = SemanticIdTable::create(2, 3, {"a", "b", "c"},
                                      {0, 0, 1, 0, 2, 0});
    auto r2 = layer_filter_ratio(t2);
    CHECK(r2[0] == doctest::Approx(2.0 / 3.0));
    CHECK(r2[1] == doctest::Approx(0.0));
}

TEST_CASE("prefix-uniform weighting averages parents equally") {
    auto t = SemanticIdTable::create(2, 2, {"a", "b", "c"},
                                     {0, 0, 0, 1, 1, 0});
    auto r = layer_filter_ratio(t, FilterRatioWeighting::PrefixUniform);
    // Layer 1 has a single parent (the root) either way.
    CHECK(r[0] == doctest::Approx(4.0 / 9.0));
    // Layer 2 parents: prefix 0 splits (1/2), prefix 1 keeps everything (0).
    CHECK(r[1] == doctest::Approx(0.25));
}

TEST_CASE("degenerate filter fixtures") {
    // Everything distinct at the first token: ratio 1 - 1/N.
    auto distinct = SemanticIdTable::create(2, 5, {"a", "b", "c", "d", "e"},
                                            {0, 0, 1, 0, 2, 0, 3, 0, 4, 0});
    auto r = layer_filter_ratio(distinct);
    CHECK(r[0] == doctest::Approx(1.0 - 1.0 / 5.0));
    CHECK(r[1] == doctest::Approx(0.0));

    auto single = SemanticIdTable::create(2, 2, {"only"}, {1, 1});
    auto rs = layer_filter_ratio(single);
    CHECK(rs[0] == doctest::Approx(0.0));
    CHECK(rs[1] == doctest::Approx(0.0));
}

} // TEST_SUITE
