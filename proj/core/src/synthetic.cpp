// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tokrec/rng.hpp"

namespace tokrec {

void SynthConfig::validate() const {
    require(items >= 1, "synth: items must be >= 1");
    require(dim >= 1, "synth: dim must be >= 1");
    require(!branching.empty(), "synth: branching must have at least one level");
    for (int b : branching) require(b >= 1, "synth: branching factors must be >= 1");
    require(level_spread.empty() || level_spread.size() == branching.size(),
            "synth: level_spread must match branching length");
    require(item_noise >= 0.0, "synth: item_noise must be >= 0");
    require(zipf_s >= 0.0, "synth: zipf_s must be >= 0");
    require(users >= 0, "synth: users must be >= 0");
    require(min_history >= 2, "synth: min_history must be >= 2");
    require(mean_history >= min_history, "synth: mean_history below min_history");
    require(stay_prob >= 0.0 && stay_prob <= 1.0, "synth: stay_prob outside [0, 1]");
}

std::vector<double> SynthConfig::effective_spread() const {
    if (!level_spread.empty()) return level_spread;
    std::vector<double> s(branching.size());
    double v = 2.0;
    for (size_t l = 0; l < s.size(); ++l) {
        s[l] = v;
        v *= 0.35;
    }
    return s;
}

namespace {

std::string padded_id(char prefix, int i, int max_value) {
    int width = 1;
    for (int v = max_value; v >= 10; v /= 10) ++width;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%0*d", prefix, width, i);
    return buf;
}

} // namespace

SynthResult generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    size_t levels = cfg.branching.size();
    auto spread = cfg.effective_spread();

    // Mixture centers, level by level: each component's children are offsets
    // from their parent. leaf_centers collects the full-depth sums.
    size_t leaves = 1;
    for (int b : cfg.branching) leaves *= static_cast<size_t>(b);
    std::vector<std::vector<double>> level_centers; // per level, comp x dim
    std::vector<size_t> comps_at_level(levels);
    size_t comps = 1;
    for (size_t l = 0; l < levels; ++l) {
        comps *= static_cast<size_t>(cfg.branching[l]);
        comps_at_level[l] = comps;
        std::vector<double> centers(comps * cfg.dim);
        for (size_t c = 0; c < comps; ++c) {
            size_t parent = c / cfg.branching[l];
            for (int d = 0; d < cfg.dim; ++d) {
                double base = l == 0 ? 0.0 : level_centers[l - 1][parent * cfg.dim + d];
                centers[c * cfg.dim + d] = base + rng.normal(0.0, spread[l]);
            }
        }
        level_centers.push_back(std::move(centers));
    }

    // Items: round-robin over leaves plus per-item noise.
    std::vector<ItemId> item_ids(cfg.items);
    std::vector<double> data(static_cast<size_t>(cfg.items) * cfg.dim);
    std::vector<std::vector<int>> labels(levels, std::vector<int>(cfg.items));
    for (int i = 0; i < cfg.items; ++i) {
        size_t leaf = static_cast<size_t>(i) % leaves;
        size_t comp = leaf;
        for (size_t l = levels; l-- > 0;) {
            labels[l][i] = static_cast<int>(comp);
            comp /= static_cast<size_t>(cfg.branching[l]);
        }
        item_ids[i] = padded_id('i', i, cfg.items - 1);
        const double* center = &level_centers[levels - 1][leaf * cfg.dim];
        for (int d = 0; d < cfg.dim; ++d)
            data[static_cast<size_t>(i) * cfg.dim + d] =
                center[d] + rng.normal(0.0, cfg.item_noise);
    }

    // Zipf popularity over a random rank permutation.
    auto rank_of = rng.permutation(static_cast<uint32_t>(cfg.items));
    std::vector<double> pop(cfg.items);
    for (int i = 0; i < cfg.items; ++i)
        pop[i] = std::pow(static_cast<double>(rank_of[i]) + 1.0, -cfg.zipf_s);

    // Per top-level cluster: member rows and their popularity weights.
    size_t top = comps_at_level[0];
    std::vector<std::vector<size_t>> members(top);
    std::vector<std::vector<double>> member_pop(top);
    for (int i = 0; i < cfg.items; ++i) {
        members[labels[0][i]].push_back(static_cast<size_t>(i));
        member_pop[labels[0][i]].push_back(pop[i]);
    }

    SynthResult out;
    out.emb = ItemEmbeddingTable::create(item_ids, std::move(data), cfg.dim);
    out.labels = std::move(labels);

    double len_sigma = cfg.mean_history / 3.0;
    for (int u = 0; u < cfg.users; ++u) {
        long len = std::lround(rng.normal(cfg.mean_history, len_sigma));
        len = std::max<long>(len, cfg.min_history);
        len = std::min<long>(len, std::lround(3.0 * cfg.mean_history));
        UserHistory hist{padded_id('u', u, cfg.users - 1), {}};
        hist.items.reserve(static_cast<size_t>(len));
        size_t cur = rng.discrete(pop);
        hist.items.push_back(out.emb.ids[cur]);
        for (long k = 1; k < len; ++k) {
            size_t next;
            if (rng.uniform() < cfg.stay_prob) {
                size_t cluster = out.labels[0][cur];
                next = members[cluster][rng.discrete(member_pop[cluster])];
            } else {
                next = rng.discrete(pop);
            }
            hist.items.push_back(out.emb.ids[next]);
            cur = next;
        }
        out.interactions.users.push_back(std::move(hist));
    }
    return out;
}

} // namespace tokrec
