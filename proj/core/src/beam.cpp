// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/beam.hpp"

#include <algorithm>

namespace tokrec {

namespace {

struct Hyp {
    int32_t node = 0; // prefix trie node index
    double score = 0.0;
    std::vector<int32_t> codes;
};

bool better(double sa, const std::vector<int32_t>& ca, double sb,
            const std::vector<int32_t>& cb) {
    if (sa != sb) return sa > sb;
    return ca < cb; // lexicographic on codes breaks exact ties
}

} // namespace

template <typename T>
std::vector<ScoredItem> constrained_beam_search(const Model<T>& m,
                                                const EncodedSource<T>& src,
                                                const PrefixTrie& trie,
                                                const SemanticIdTable& ids,
                                                int width, Workspace<T>& ws) {
    require(width >= 1, "beam: width must be positive");
    int L = trie.L;
    TokenSpace space{ids.L, ids.K};
    std::vector<Hyp> beam(1);
    beam[0].node = 0;

    std::vector<int32_t> y_in;
    std::vector<double> lp;
    std::vector<Hyp> next;
    for (int depth = 0; depth < L; ++depth) {
        next.clear();
        for (const Hyp& h : beam) {
            y_in.resize(depth + 1);
            y_in[0] = space.bos();
            for (int d = 0; d < depth; ++d) y_in[d + 1] = space.token(d, h.codes[d]);
            model_next_logprobs(m, src, std::span<const int32_t>(y_in), ws, lp);
            const auto& children = trie.nodes[h.node].children;
            for (const auto& [code, child] : children) {
                Hyp nh;
                nh.node = child;
                nh.codes = h.codes;
                nh.codes.push_back(code);
                nh.score = h.score + lp[space.token(depth, code)];
                next.push_back(std::move(nh));
            }
        }
        std::sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) {
            return better(a.score, a.codes, b.score, b.codes);
        });
        if (static_cast<int>(next.size()) > width) next.resize(width);
        beam.swap(next);
    }

    std::vector<ScoredItem> out;
    out.reserve(beam.size());
    for (Hyp& h : beam) {
        const PrefixTrie::Node& node = trie.nodes[h.node];
        require(node.item_row >= 0, "beam: trie leaf without an item");
        out.push_back({node.item_row, h.score, std::move(h.codes)});
    }
    return out;
}

template <typename T>
std::vector<ScoredItem> exhaustive_rank(const Model<T>& m,
                                        const EncodedSource<T>& src,
                                        const SemanticIdTable& ids,
                                        Workspace<T>& ws) {
    int L = ids.L;
    TokenSpace space{ids.L, ids.K};
    size_t n = ids.items.size();
    std::vector<ScoredItem> out;
    out.reserve(n);
    std::vector<int32_t> y_in;
    std::vector<double> lp;
    for (size_t row = 0; row < n; ++row) {
        const int32_t* codes = ids.codes.data() + row * L;
        double score = 0.0;
        y_in.assign(1, space.bos());
        for (int d = 0; d < L; ++d) {
            model_next_logprobs(m, src, std::span<const int32_t>(y_in), ws, lp);
            int32_t tok = space.token(d, codes[d]);
            score += lp[tok];
            y_in.push_back(tok);
        }
        ScoredItem si;
        si.item_row = static_cast<int32_t>(row);
        si.logprob = score;
        si.codes.assign(codes, codes + L);
        out.push_back(std::move(si));
    }
    std::sort(out.begin(), out.end(), [](const ScoredItem& a, const ScoredItem& b) {
        return better(a.logprob, a.codes, b.logprob, b.codes);
    });
    return out;
}

template std::vector<ScoredItem> constrained_beam_search<float>(
    const Model<float>&, const EncodedSource<float>&, const PrefixTrie&,
    const SemanticIdTable&, int, Workspace<float>&);
template std::vector<ScoredItem> constrained_beam_search<double>(
    const Model<double>&, const EncodedSource<double>&, const PrefixTrie&,
    const SemanticIdTable&, int, Workspace<double>&);
template std::vector<ScoredItem> exhaustive_rank<float>(const Model<float>&,
                                                        const EncodedSource<float>&,
                                                        const SemanticIdTable&,
                                                        Workspace<float>&);
template std::vector<ScoredItem> exhaustive_rank<double>(
    const Model<double>&, const EncodedSource<double>&, const SemanticIdTable&,
    Workspace<double>&);

} // namespace tokrec
