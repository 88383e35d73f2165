// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tokrec/common.hpp"
#include "tokrec/types.hpp"

namespace tokrec {

// Toy encoder-decoder transformer over the token vocabulary. Pre-norm
// residual blocks, learned absolute positions, exact analytic gradients.
struct ModelConfig {
    int vocab = 0;        // token space size incl. pad and bos
    int embed_dim = 64;
    int ffn_dim = 256;
    int enc_layers = 2;
    int dec_layers = 2;
    int heads = 4;
    int max_positions = 256;
    double dropout = 0.0;
    bool tied_output = true; // logits = H * tok_embed^T when tied
    uint64_t seed = 1;

    void validate() const;
    int head_dim() const { return embed_dim / heads; }
};

struct TensorSpec {
    std::string name;
    size_t offset = 0;
    size_t rows = 0;
    size_t cols = 0;
    size_t size() const { return rows * cols; }
};

// Flat parameter vector with named tensor views. Layout order is fixed by
// the config, so initialization and checkpoints are reproducible.
struct ParamLayout {
    std::vector<TensorSpec> tensors;
    size_t total = 0;

    static ParamLayout build(const ModelConfig& cfg);
    const TensorSpec& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    template <typename T>
    std::span<T> view(std::span<T> flat, const std::string& name) const {
        const TensorSpec& t = at(name);
        return flat.subspan(t.offset, t.size());
    }

private:
    std::unordered_map<std::string, size_t> index_;
    friend struct LayoutBuilder;
};

size_t count_params(const ModelConfig& cfg);

template <typename T>
struct Model {
    ModelConfig cfg;
    ParamLayout layout;
    std::vector<T> params;

    // Scaled-uniform init for projections and embeddings, unit layer norm
    // gains, zero biases. Deterministic in cfg.seed.
    static Model init(const ModelConfig& cfg);
};

// Per-sequence activation caches kept for the backward pass. One workspace
// per concurrently processed sample; buffers are reused across calls.
template <typename T>
struct LnCache {
    std::vector<T> xhat;
    std::vector<T> rstd;
};

template <typename T>
struct AttnCache {
    std::vector<T> q, k, v;  // n_q x D, n_k x D, n_k x D
    std::vector<T> probs;    // heads x n_q x n_k
    std::vector<T> concat;   // n_q x D, input of the output projection
};

template <typename T>
struct BlockCache {
    LnCache<T> ln1;
    std::vector<T> norm1;
    AttnCache<T> attn;
    std::vector<uint8_t> drop_attn;
    LnCache<T> ln2;
    std::vector<T> norm2;
    AttnCache<T> cross; // decoder only
    std::vector<uint8_t> drop_cross;
    LnCache<T> ln3;     // decoder only
    std::vector<T> norm3;
    std::vector<T> ffn_u, ffn_a;
    std::vector<uint8_t> drop_ffn;
};

template <typename T>
struct Workspace {
    std::vector<int32_t> x, y_in;
    int n_x = 0, n_y = 0;
    int n_valid = 0; // non-pad prefix length of x

    std::vector<T> enc_in, dec_in;
    std::vector<uint8_t> drop_enc_in, drop_dec_in;
    std::vector<BlockCache<T>> enc, dec;
    LnCache<T> enc_final, dec_final;
    std::vector<T> enc_stream, dec_stream; // residual streams before final ln
    std::vector<T> memory;  // n_x x D
    std::vector<T> dec_out; // n_y x D
    std::vector<T> logits;  // n_y x vocab

    // scratch reused across calls
    std::vector<T> scratch;
    std::vector<T> d_sub, d_norm, d_x, d_concat, d_q, d_k, d_v;
    std::vector<T> d_ffn_u, d_ffn_a;
    std::vector<T> d_stream_x, d_stream_y, d_mem;
};

// Teacher-forced forward: x is the (possibly pad-suffixed) source, y_in the
// decoder input (bos followed by target tokens). Fills ws.logits with
// n_y x vocab rows. dropout_seed selects the dropout stream; pass 0 together
// with cfg.dropout == 0, or any seed during training.
template <typename T>
void model_forward(const Model<T>& m, std::span<const int32_t> x,
                   std::span<const int32_t> y_in, Workspace<T>& ws,
                   bool training = false, uint64_t dropout_seed = 0);

// Accumulates parameter gradients (+=) from d(loss)/d(logits). Must follow a
// model_forward on the same workspace.
template <typename T>
void model_backward(const Model<T>& m, Workspace<T>& ws,
                    std::span<const T> d_logits, std::span<T> grads);

// --- inference-only split used by beam search ---

// Encoder output plus per-layer cross-attention keys and values, computed
// once per source sequence and shared by every decode call.
template <typename T>
struct EncodedSource {
    int n_x = 0;
    int n_valid = 0;
    std::vector<T> memory;       // n_x x D
    std::vector<T> cross_k;      // dec_layers x n_valid x D
    std::vector<T> cross_v;      // dec_layers x n_valid x D
};

template <typename T>
EncodedSource<T> model_encode(const Model<T>& m, std::span<const int32_t> x,
                              Workspace<T>& ws);

// Log-probabilities (natural log) of the next token after feeding y_in.
// Returns the last-row log softmax over the vocabulary.
template <typename T>
void model_next_logprobs(const Model<T>& m, const EncodedSource<T>& src,
                         std::span<const int32_t> y_in, Workspace<T>& ws,
                         std::vector<double>& out);

} // namespace tokrec
