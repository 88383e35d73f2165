// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tokrec/rng.hpp"

namespace tokrec {

namespace {
constexpr double kLnEps = 1e-5;
} // namespace

void ModelConfig::validate() const {
    require(vocab >= 3, "model: vocab must cover codes plus pad and bos");
    require(embed_dim >= 1, "model: embed_dim must be positive");
    require(ffn_dim >= 1, "model: ffn_dim must be positive");
    require(enc_layers >= 1, "model: enc_layers must be positive");
    require(dec_layers >= 1, "model: dec_layers must be positive");
    require(heads >= 1, "model: heads must be positive");
    require(embed_dim % heads == 0, "model: heads must divide embed_dim");
    require(max_positions >= 1, "model: max_positions must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout outside [0, 1)");
}

struct LayoutBuilder {
    ParamLayout lay;
    void add(const std::string& name, size_t rows, size_t cols) {
        lay.index_[name] = lay.tensors.size();
        lay.tensors.push_back({name, lay.total, rows, cols});
        lay.total += rows * cols;
    }
    void add_attn(const std::string& p, size_t d) {
        for (const char* w : {"wq", "wk", "wv", "wo"}) add(p + "." + w, d, d);
        for (const char* b : {"bq", "bk", "bv", "bo"}) add(p + "." + b, d, 1);
    }
    void add_ln(const std::string& p, size_t d) {
        add(p + ".g", d, 1);
        add(p + ".b", d, 1);
    }
    void add_ffn(const std::string& p, size_t d, size_t f) {
        add(p + ".w1", d, f);
        add(p + ".b1", f, 1);
        add(p + ".w2", f, d);
        add(p + ".b2", d, 1);
    }
};

ParamLayout ParamLayout::build(const ModelConfig& cfg) {
    cfg.validate();
    size_t D = cfg.embed_dim, F = cfg.ffn_dim, V = cfg.vocab, P = cfg.max_positions;
    LayoutBuilder b;
    b.add("embed.tok", V, D);
    b.add("pos.enc", P, D);
    b.add("pos.dec", P, D);
    for (int i = 0; i < cfg.enc_layers; ++i) {
        std::string p = "enc." + std::to_string(i);
        b.add_ln(p + ".ln1", D);
        b.add_attn(p + ".attn", D);
        b.add_ln(p + ".ln2", D);
        b.add_ffn(p + ".ffn", D, F);
    }
    b.add_ln("enc.final", D);
    for (int i = 0; i < cfg.dec_layers; ++i) {
        std::string p = "dec." + std::to_string(i);
        b.add_ln(p + ".ln1", D);
        b.add_attn(p + ".self", D);
        b.add_ln(p + ".ln2", D);
        b.add_attn(p + ".cross", D);
        b.add_ln(p + ".ln3", D);
        b.add_ffn(p + ".ffn", D, F);
    }
    b.add_ln("dec.final", D);
    b.add("out.b", V, 1);
    if (!cfg.tied_output) b.add("out.w", V, D);
    return std::move(b.lay);
}

const TensorSpec& ParamLayout::at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "layout: unknown tensor " + name);
    return tensors[it->second];
}

size_t count_params(const ModelConfig& cfg) { return ParamLayout::build(cfg).total; }

template <typename T>
Model<T> Model<T>::init(const ModelConfig& cfg) {
    Model<T> m;
    m.cfg = cfg;
    m.layout = ParamLayout::build(cfg);
    m.params.assign(m.layout.total, T(0));
    Rng rng(cfg.seed);
    double d = cfg.embed_dim;
    for (const auto& t : m.layout.tensors) {
        T* p = m.params.data() + t.offset;
        bool is_gain = t.name.size() >= 2 && t.name.compare(t.name.size() - 2, 2, ".g") == 0;
        bool is_embed = t.name == "embed.tok" || t.name.rfind("pos.", 0) == 0;
        if (is_gain) {
            std::fill_n(p, t.size(), T(1));
        } else if (is_embed) {
            double a = 1.0 / std::sqrt(d);
            for (size_t i = 0; i < t.size(); ++i)
                p[i] = static_cast<T>(rng.uniform(-a, a));
        } else if (t.rows > 1 && t.cols > 1) {
            double a = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
            for (size_t i = 0; i < t.size(); ++i)
                p[i] = static_cast<T>(rng.uniform(-a, a));
        } // biases stay zero
    }
    return m;
}

namespace {

// ---- kernels ----

template <typename T>
void linear(const T* x, int n, int in, const T* w, const T* b, int out, T* y) {
    for (int i = 0; i < n; ++i) {
        T* yi = y + static_cast<size_t>(i) * out;
        if (b) std::copy_n(b, out, yi);
        else std::fill_n(yi, out, T(0));
        const T* xi = x + static_cast<size_t>(i) * in;
        for (int j = 0; j < in; ++j) {
            T a = xi[j];
            const T* wj = w + static_cast<size_t>(j) * out;
            for (int o = 0; o < out; ++o) yi[o] += a * wj[o];
        }
    }
}

// dx = dy W^T, dW += x^T dy, db += column sums of dy
template <typename T>
void linear_backward(const T* x, int n, int in, const T* w, int out, const T* dy,
                     T* dx, T* dw, T* db, bool accumulate_dx) {
    for (int i = 0; i < n; ++i) {
        const T* dyi = dy + static_cast<size_t>(i) * out;
        const T* xi = x + static_cast<size_t>(i) * in;
        if (dx) {
            T* dxi = dx + static_cast<size_t>(i) * in;
            for (int j = 0; j < in; ++j) {
                const T* wj = w + static_cast<size_t>(j) * out;
                T acc = T(0);
                for (int o = 0; o < out; ++o) acc += dyi[o] * wj[o];
                if (accumulate_dx) dxi[j] += acc;
                else dxi[j] = acc;
            }
        }
        for (int j = 0; j < in; ++j) {
            T a = xi[j];
            T* dwj = dw + static_cast<size_t>(j) * out;
            for (int o = 0; o < out; ++o) dwj[o] += a * dyi[o];
        }
        if (db)
            for (int o = 0; o < out; ++o) db[o] += dyi[o];
    }
}

template <typename T>
void layer_norm(const T* x, int n, int d, const T* g, const T* b, T* y,
                LnCache<T>& cache) {
    cache.xhat.resize(static_cast<size_t>(n) * d);
    cache.rstd.resize(n);
    for (int i = 0; i < n; ++i) {
        const T* xi = x + static_cast<size_t>(i) * d;
        T mean = T(0);
        for (int j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (int j = 0; j < d; ++j) {
            T diff = xi[j] - mean;
            var += diff * diff;
        }
        var /= static_cast<T>(d);
        T rstd = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
        cache.rstd[i] = rstd;
        T* xh = cache.xhat.data() + static_cast<size_t>(i) * d;
        T* yi = y + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mean) * rstd;
            yi[j] = g[j] * xh[j] + b[j];
        }
    }
}

// dx written (not accumulated); dg/db accumulated
template <typename T>
void layer_norm_backward(const LnCache<T>& cache, int n, int d, const T* g,
                         const T* dy, T* dx, T* dg, T* db) {
    for (int i = 0; i < n; ++i) {
        const T* dyi = dy + static_cast<size_t>(i) * d;
        const T* xh = cache.xhat.data() + static_cast<size_t>(i) * d;
        T rstd = cache.rstd[i];
        T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
        for (int j = 0; j < d; ++j) {
            T dxh = dyi[j] * g[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
            dg[j] += dyi[j] * xh[j];
            db[j] += dyi[j];
        }
        mean_dxhat /= static_cast<T>(d);
        mean_dxhat_xhat /= static_cast<T>(d);
        T* dxi = dx + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            T dxh = dyi[j] * g[j];
            dxi[j] = rstd * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
}

template <typename T>
T gelu(T x) {
    return static_cast<T>(0.5) * x *
           (static_cast<T>(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
    T cdf = static_cast<T>(0.5) *
            (static_cast<T>(1) + std::erf(x * static_cast<T>(M_SQRT1_2)));
    T pdf = std::exp(static_cast<T>(-0.5) * x * x) *
            static_cast<T>(0.3989422804014327); // 1/sqrt(2*pi)
    return cdf + x * pdf;
}

enum class MaskMode { KeysUpTo, Causal };

// Scaled dot-product attention over per-head column slices. KeysUpTo allows
// every query to see keys [0, nk_valid); Causal allows query i to see
// [0, i + 1). Disallowed probabilities stay exactly zero.
template <typename T>
void attention_core(const T* q, int nq, const T* k, const T* v, int nk_valid,
                    int heads, int head_dim, MaskMode mode, T* probs, T* concat) {
    int D = heads * head_dim;
    T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
    for (int h = 0; h < heads; ++h) {
        int off = h * head_dim;
        for (int i = 0; i < nq; ++i) {
            int allowed = mode == MaskMode::Causal ? std::min(i + 1, nk_valid) : nk_valid;
            T* prow = probs + (static_cast<size_t>(h) * nq + i) * nk_valid;
            const T* qi = q + static_cast<size_t>(i) * D + off;
            T mx = -std::numeric_limits<T>::infinity();
            for (int t = 0; t < allowed; ++t) {
                const T* kt = k + static_cast<size_t>(t) * D + off;
                T s = T(0);
                for (int c = 0; c < head_dim; ++c) s += qi[c] * kt[c];
                prow[t] = s * scale;
                mx = std::max(mx, prow[t]);
            }
            T denom = T(0);
            for (int t = 0; t < allowed; ++t) {
                prow[t] = std::exp(prow[t] - mx);
                denom += prow[t];
            }
            T inv = T(1) / denom;
            for (int t = 0; t < allowed; ++t) prow[t] *= inv;
            for (int t = allowed; t < nk_valid; ++t) prow[t] = T(0);
            T* ci = concat + static_cast<size_t>(i) * D + off;
            std::fill_n(ci, head_dim, T(0));
            for (int t = 0; t < allowed; ++t) {
                const T* vt = v + static_cast<size_t>(t) * D + off;
                T p = prow[t];
                for (int c = 0; c < head_dim; ++c) ci[c] += p * vt[c];
            }
        }
    }
}

// dq/dk/dv written from scratch (caller zeroes dk/dv shared across heads).
template <typename T>
void attention_core_backward(const T* q, int nq, const T* k, const T* v,
                             int nk_valid, int heads, int head_dim, MaskMode mode,
                             const T* probs, const T* dconcat, T* dq, T* dk, T* dv) {
    int D = heads * head_dim;
    T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
    std::vector<T> dp(nk_valid);
    for (int h = 0; h < heads; ++h) {
        int off = h * head_dim;
        for (int i = 0; i < nq; ++i) {
            int allowed = mode == MaskMode::Causal ? std::min(i + 1, nk_valid) : nk_valid;
            const T* prow = probs + (static_cast<size_t>(h) * nq + i) * nk_valid;
            const T* dci = dconcat + static_cast<size_t>(i) * D + off;
            const T* qi = q + static_cast<size_t>(i) * D + off;
            T* dqi = dq + static_cast<size_t>(i) * D + off;
            T dot = T(0);
            for (int t = 0; t < allowed; ++t) {
                const T* vt = v + static_cast<size_t>(t) * D + off;
                T acc = T(0);
                for (int c = 0; c < head_dim; ++c) acc += dci[c] * vt[c];
                dp[t] = acc;
                dot += acc * prow[t];
            }
            std::fill_n(dqi, head_dim, T(0));
            for (int t = 0; t < allowed; ++t) {
                T ds = prow[t] * (dp[t] - dot) * scale;
                const T* kt = k + static_cast<size_t>(t) * D + off;
                T* dkt = dk + static_cast<size_t>(t) * D + off;
                T* dvt = dv + static_cast<size_t>(t) * D + off;
                T p = prow[t];
                for (int c = 0; c < head_dim; ++c) {
                    dqi[c] += ds * kt[c];
                    dkt[c] += ds * qi[c];
                    dvt[c] += p * dci[c];
                }
            }
        }
    }
}

// ---- parameter views ----

template <typename T>
struct AttnView {
    std::span<const T> wq, wk, wv, wo, bq, bk, bv, bo;
};
template <typename T>
struct LnView {
    std::span<const T> g, b;
};
template <typename T>
struct FfnView {
    std::span<const T> w1, b1, w2, b2;
};

template <typename T>
AttnView<T> attn_view(const ParamLayout& lay, std::span<const T> p, const std::string& pre) {
    return {lay.view(p, pre + ".wq"), lay.view(p, pre + ".wk"),
            lay.view(p, pre + ".wv"), lay.view(p, pre + ".wo"),
            lay.view(p, pre + ".bq"), lay.view(p, pre + ".bk"),
            lay.view(p, pre + ".bv"), lay.view(p, pre + ".bo")};
}
template <typename T>
LnView<T> ln_view(const ParamLayout& lay, std::span<const T> p, const std::string& pre) {
    return {lay.view(p, pre + ".g"), lay.view(p, pre + ".b")};
}
template <typename T>
FfnView<T> ffn_view(const ParamLayout& lay, std::span<const T> p, const std::string& pre) {
    return {lay.view(p, pre + ".w1"), lay.view(p, pre + ".b1"),
            lay.view(p, pre + ".w2"), lay.view(p, pre + ".b2")};
}

// ---- dropout ----

template <typename T>
void apply_dropout(T* x, size_t count, double rate, Rng& rng,
                   std::vector<uint8_t>& mask) {
    mask.resize(count);
    T inv_keep = static_cast<T>(1.0 / (1.0 - rate));
    for (size_t i = 0; i < count; ++i) {
        if (rng.uniform() < rate) {
            mask[i] = 0;
            x[i] = T(0);
        } else {
            mask[i] = 1;
            x[i] *= inv_keep;
        }
    }
}

template <typename T>
void dropout_backward(T* dx, size_t count, double rate,
                      const std::vector<uint8_t>& mask) {
    T inv_keep = static_cast<T>(1.0 / (1.0 - rate));
    for (size_t i = 0; i < count; ++i) dx[i] = mask[i] ? dx[i] * inv_keep : T(0);
}

template <typename T>
void resize_zero(std::vector<T>& v, size_t n) {
    v.resize(n);
    std::fill(v.begin(), v.end(), T(0));
}

// first pad position; pads must form a suffix
inline int valid_prefix(std::span<const int32_t> x, int32_t pad) {
    int n = static_cast<int>(x.size());
    int v = n;
    for (int i = 0; i < n; ++i) {
        if (x[i] == pad) {
            v = i;
            break;
        }
    }
    for (int i = v; i < n; ++i)
        require(x[i] == pad, "model: pad tokens must form a suffix of x");
    return v;
}

} // namespace

// ---- forward ----

template <typename T>
static void embed_tokens(const Model<T>& m, std::span<const int32_t> toks,
                         const std::string& pos_name, std::vector<T>& out) {
    int D = m.cfg.embed_dim;
    int n = static_cast<int>(toks.size());
    require(n <= m.cfg.max_positions, "model: sequence longer than max_positions");
    auto emb = m.layout.view(std::span<const T>(m.params), "embed.tok");
    auto pos = m.layout.view(std::span<const T>(m.params), pos_name);
    out.resize(static_cast<size_t>(n) * D);
    for (int i = 0; i < n; ++i) {
        int32_t tok = toks[i];
        require(tok >= 0 && tok < m.cfg.vocab, "model: token out of range");
        const T* e = emb.data() + static_cast<size_t>(tok) * D;
        const T* p = pos.data() + static_cast<size_t>(i) * D;
        T* o = out.data() + static_cast<size_t>(i) * D;
        for (int d = 0; d < D; ++d) o[d] = e[d] + p[d];
    }
}

template <typename T>
struct ForwardCtx {
    const Model<T>& m;
    std::span<const T> p;
    bool training;
    double rate;
    Rng* drop;
};

// One encoder or decoder block; stream is updated in place. ext_k/ext_v, when
// given, replace the projections of xkv in the cross attention.
template <typename T>
static void block_forward(ForwardCtx<T>& ctx, const std::string& prefix,
                          bool decoder, T* stream, int n, const T* mem,
                          int n_mem_valid, const T* ext_k, const T* ext_v,
                          BlockCache<T>& bc, std::vector<T>& tmp) {
    const auto& lay = ctx.m.layout;
    int D = ctx.m.cfg.embed_dim;
    int F = ctx.m.cfg.ffn_dim;
    int H = ctx.m.cfg.heads;
    int hd = ctx.m.cfg.head_dim();
    size_t nd = static_cast<size_t>(n) * D;

    // self attention
    auto ln1 = ln_view(lay, ctx.p, prefix + ".ln1");
    bc.norm1.resize(nd);
    layer_norm(stream, n, D, ln1.g.data(), ln1.b.data(), bc.norm1.data(), bc.ln1);
    auto at = attn_view(lay, ctx.p, prefix + (decoder ? ".self" : ".attn"));
    bc.attn.q.resize(nd);
    bc.attn.k.resize(nd);
    bc.attn.v.resize(nd);
    linear(bc.norm1.data(), n, D, at.wq.data(), at.bq.data(), D, bc.attn.q.data());
    linear(bc.norm1.data(), n, D, at.wk.data(), at.bk.data(), D, bc.attn.k.data());
    linear(bc.norm1.data(), n, D, at.wv.data(), at.bv.data(), D, bc.attn.v.data());
    int nk = decoder ? n : n_mem_valid; // encoder masks its own pad suffix
    bc.attn.probs.resize(static_cast<size_t>(H) * n * nk);
    bc.attn.concat.resize(nd);
    attention_core(bc.attn.q.data(), n, bc.attn.k.data(), bc.attn.v.data(), nk, H,
                   hd, decoder ? MaskMode::Causal : MaskMode::KeysUpTo,
                   bc.attn.probs.data(), bc.attn.concat.data());
    tmp.resize(nd);
    linear(bc.attn.concat.data(), n, D, at.wo.data(), at.bo.data(), D, tmp.data());
    if (ctx.training && ctx.rate > 0.0)
        apply_dropout(tmp.data(), nd, ctx.rate, *ctx.drop, bc.drop_attn);
    for (size_t i = 0; i < nd; ++i) stream[i] += tmp[i];

    // cross attention (decoder only)
    if (decoder) {
        auto ln2 = ln_view(lay, ctx.p, prefix + ".ln2");
        bc.norm2.resize(nd);
        layer_norm(stream, n, D, ln2.g.data(), ln2.b.data(), bc.norm2.data(), bc.ln2);
        auto cr = attn_view(lay, ctx.p, prefix + ".cross");
        size_t md = static_cast<size_t>(n_mem_valid) * D;
        bc.cross.q.resize(nd);
        linear(bc.norm2.data(), n, D, cr.wq.data(), cr.bq.data(), D, bc.cross.q.data());
        const T* ck;
        const T* cv;
        if (ext_k) {
            ck = ext_k;
            cv = ext_v;
        } else {
            bc.cross.k.resize(md);
            bc.cross.v.resize(md);
            linear(mem, n_mem_valid, D, cr.wk.data(), cr.bk.data(), D, bc.cross.k.data());
            linear(mem, n_mem_valid, D, cr.wv.data(), cr.bv.data(), D, bc.cross.v.data());
            ck = bc.cross.k.data();
            cv = bc.cross.v.data();
        }
        bc.cross.probs.resize(static_cast<size_t>(H) * n * n_mem_valid);
        bc.cross.concat.resize(nd);
        attention_core(bc.cross.q.data(), n, ck, cv, n_mem_valid, H, hd,
                       MaskMode::KeysUpTo, bc.cross.probs.data(),
                       bc.cross.concat.data());
        linear(bc.cross.concat.data(), n, D, cr.wo.data(), cr.bo.data(), D, tmp.data());
        if (ctx.training && ctx.rate > 0.0)
            apply_dropout(tmp.data(), nd, ctx.rate, *ctx.drop, bc.drop_cross);
        for (size_t i = 0; i < nd; ++i) stream[i] += tmp[i];
    }

    // feed-forward
    std::string ln_name = decoder ? ".ln3" : ".ln2";
    auto lnf = ln_view(lay, ctx.p, prefix + ln_name);
    auto& norm_f = decoder ? bc.norm3 : bc.norm2;
    auto& ln_cache_f = decoder ? bc.ln3 : bc.ln2;
    norm_f.resize(nd);
    layer_norm(stream, n, D, lnf.g.data(), lnf.b.data(), norm_f.data(), ln_cache_f);
    auto ff = ffn_view(lay, ctx.p, prefix + ".ffn");
    size_t nf = static_cast<size_t>(n) * F;
    bc.ffn_u.resize(nf);
    bc.ffn_a.resize(nf);
    linear(norm_f.data(), n, D, ff.w1.data(), ff.b1.data(), F, bc.ffn_u.data());
    for (size_t i = 0; i < nf; ++i) bc.ffn_a[i] = gelu(bc.ffn_u[i]);
    linear(bc.ffn_a.data(), n, F, ff.w2.data(), ff.b2.data(), D, tmp.data());
    if (ctx.training && ctx.rate > 0.0)
        apply_dropout(tmp.data(), nd, ctx.rate, *ctx.drop, bc.drop_ffn);
    for (size_t i = 0; i < nd; ++i) stream[i] += tmp[i];
}

template <typename T>
void model_forward(const Model<T>& m, std::span<const int32_t> x,
                   std::span<const int32_t> y_in, Workspace<T>& ws, bool training,
                   uint64_t dropout_seed) {
    const auto& cfg = m.cfg;
    int D = cfg.embed_dim;
    int V = cfg.vocab;
    require(!y_in.empty(), "model: decoder input must not be empty");
    int32_t pad = static_cast<int32_t>(V - 2); // pad is vocab - 2 by construction
    int n_x = static_cast<int>(x.size());
    int n_y = static_cast<int>(y_in.size());
    int n_valid = valid_prefix(x, pad);
    require(n_valid >= 1, "model: x must contain at least one non-pad token");

    ws.x.assign(x.begin(), x.end());
    ws.y_in.assign(y_in.begin(), y_in.end());
    ws.n_x = n_x;
    ws.n_y = n_y;
    ws.n_valid = n_valid;

    Rng drop(dropout_seed);
    ForwardCtx<T> ctx{m, std::span<const T>(m.params), training, cfg.dropout, &drop};

    // encoder
    embed_tokens(m, x, "pos.enc", ws.enc_in);
    if (training && cfg.dropout > 0.0)
        apply_dropout(ws.enc_in.data(), ws.enc_in.size(), cfg.dropout, drop,
                      ws.drop_enc_in);
    ws.enc.resize(cfg.enc_layers);
    std::vector<T>& tmp = ws.scratch;
    std::vector<T> stream = std::move(ws.enc_stream);
    stream.assign(ws.enc_in.begin(), ws.enc_in.end());
    for (int l = 0; l < cfg.enc_layers; ++l)
        block_forward<T>(ctx, "enc." + std::to_string(l), false, stream.data(), n_x,
                      nullptr, n_valid, nullptr, nullptr, ws.enc[l], tmp);
    auto lnf = ln_view(m.layout, ctx.p, "enc.final");
    ws.memory.resize(stream.size());
    layer_norm(stream.data(), n_x, D, lnf.g.data(), lnf.b.data(), ws.memory.data(),
               ws.enc_final);
    ws.enc_stream = std::move(stream);

    // decoder
    embed_tokens(m, y_in, "pos.dec", ws.dec_in);
    if (training && cfg.dropout > 0.0)
        apply_dropout(ws.dec_in.data(), ws.dec_in.size(), cfg.dropout, drop,
                      ws.drop_dec_in);
    ws.dec.resize(cfg.dec_layers);
    std::vector<T> dstream = std::move(ws.dec_stream);
    dstream.assign(ws.dec_in.begin(), ws.dec_in.end());
    for (int l = 0; l < cfg.dec_layers; ++l)
        block_forward<T>(ctx, "dec." + std::to_string(l), true, dstream.data(), n_y,
                      ws.memory.data(), n_valid, nullptr, nullptr, ws.dec[l], tmp);
    auto lnd = ln_view(m.layout, ctx.p, "dec.final");
    ws.dec_out.resize(dstream.size());
    layer_norm(dstream.data(), n_y, D, lnd.g.data(), lnd.b.data(), ws.dec_out.data(),
               ws.dec_final);
    ws.dec_stream = std::move(dstream);

    // logits
    auto ob = m.layout.view(ctx.p, "out.b");
    std::span<const T> wout = cfg.tied_output ? m.layout.view(ctx.p, "embed.tok")
                                              : m.layout.view(ctx.p, "out.w");
    ws.logits.resize(static_cast<size_t>(n_y) * V);
    for (int i = 0; i < n_y; ++i) {
        const T* h = ws.dec_out.data() + static_cast<size_t>(i) * D;
        T* lrow = ws.logits.data() + static_cast<size_t>(i) * V;
        for (int v = 0; v < V; ++v) {
            const T* wv = wout.data() + static_cast<size_t>(v) * D;
            T acc = ob[v];
            for (int d = 0; d < D; ++d) acc += h[d] * wv[d];
            lrow[v] = acc;
        }
    }
}

// ---- backward ----

template <typename T>
static void block_backward(const Model<T>& m, const std::string& prefix,
                           bool decoder, BlockCache<T>& bc, int n, const T* mem,
                           int n_mem_valid, T* dstream, T* dmem,
                           std::span<T> grads, Workspace<T>& ws, double rate) {
    const auto& lay = m.layout;
    std::span<const T> p(m.params);
    int D = m.cfg.embed_dim;
    int F = m.cfg.ffn_dim;
    int H = m.cfg.heads;
    int hd = m.cfg.head_dim();
    size_t nd = static_cast<size_t>(n) * D;
    size_t nf = static_cast<size_t>(n) * F;

    auto g = [&](const std::string& name) { return lay.view(grads, name); };

    // feed-forward
    {
        std::string ln_name = decoder ? ".ln3" : ".ln2";
        auto lnf = ln_view(lay, p, prefix + ln_name);
        auto& norm_f = decoder ? bc.norm3 : bc.norm2;
        auto& cache_f = decoder ? bc.ln3 : bc.ln2;
        auto ff = ffn_view(lay, p, prefix + ".ffn");
        std::vector<T>& dsub = ws.d_sub;
        dsub.assign(dstream, dstream + nd);
        if (rate > 0.0 && !bc.drop_ffn.empty())
            dropout_backward(dsub.data(), nd, rate, bc.drop_ffn);
        std::vector<T>& da = ws.d_ffn_a;
        resize_zero(da, nf);
        linear_backward(bc.ffn_a.data(), n, F, ff.w2.data(), D, dsub.data(),
                        da.data(), g(prefix + ".ffn.w2").data(),
                        g(prefix + ".ffn.b2").data(), false);
        std::vector<T>& du = ws.d_ffn_u;
        du.resize(nf);
        for (size_t i = 0; i < nf; ++i) du[i] = da[i] * gelu_grad(bc.ffn_u[i]);
        std::vector<T>& dnorm = ws.d_norm;
        resize_zero(dnorm, nd);
        linear_backward(norm_f.data(), n, D, ff.w1.data(), F, du.data(),
                        dnorm.data(), g(prefix + ".ffn.w1").data(),
                        g(prefix + ".ffn.b1").data(), false);
        std::vector<T>& dx = ws.d_x;
        dx.resize(nd);
        layer_norm_backward(cache_f, n, D, lnf.g.data(), dnorm.data(), dx.data(),
                            g(prefix + ln_name + ".g").data(),
                            g(prefix + ln_name + ".b").data());
        for (size_t i = 0; i < nd; ++i) dstream[i] += dx[i];
    }

    // cross attention
    if (decoder) {
        auto cr = attn_view(lay, p, prefix + ".cross");
        size_t md = static_cast<size_t>(n_mem_valid) * D;
        std::vector<T>& dsub = ws.d_sub;
        dsub.assign(dstream, dstream + nd);
        if (rate > 0.0 && !bc.drop_cross.empty())
            dropout_backward(dsub.data(), nd, rate, bc.drop_cross);
        std::vector<T>& dconcat = ws.d_concat;
        resize_zero(dconcat, nd);
        linear_backward(bc.cross.concat.data(), n, D, cr.wo.data(), D, dsub.data(),
                        dconcat.data(), g(prefix + ".cross.wo").data(),
                        g(prefix + ".cross.bo").data(), false);
        std::vector<T>& dq = ws.d_q;
        std::vector<T>& dk = ws.d_k;
        std::vector<T>& dv = ws.d_v;
        dq.resize(nd);
        resize_zero(dk, md);
        resize_zero(dv, md);
        attention_core_backward(bc.cross.q.data(), n, bc.cross.k.data(),
                                bc.cross.v.data(), n_mem_valid, H, hd,
                                MaskMode::KeysUpTo, bc.cross.probs.data(),
                                dconcat.data(), dq.data(), dk.data(), dv.data());
        std::vector<T>& dnorm = ws.d_norm;
        resize_zero(dnorm, nd);
        linear_backward(bc.norm2.data(), n, D, cr.wq.data(), D, dq.data(),
                        dnorm.data(), g(prefix + ".cross.wq").data(),
                        g(prefix + ".cross.bq").data(), false);
        // keys and values come from the shared encoder memory
        linear_backward(mem, n_mem_valid, D, cr.wk.data(), D, dk.data(), dmem,
                        g(prefix + ".cross.wk").data(),
                        g(prefix + ".cross.bk").data(), true);
        linear_backward(mem, n_mem_valid, D, cr.wv.data(), D, dv.data(), dmem,
                        g(prefix + ".cross.wv").data(),
                        g(prefix + ".cross.bv").data(), true);
        std::vector<T>& dx = ws.d_x;
        dx.resize(nd);
        layer_norm_backward(bc.ln2, n, D, ln_view(lay, p, prefix + ".ln2").g.data(),
                            dnorm.data(), dx.data(), g(prefix + ".ln2.g").data(),
                            g(prefix + ".ln2.b").data());
        for (size_t i = 0; i < nd; ++i) dstream[i] += dx[i];
    }

    // self attention
    {
        auto at = attn_view(lay, p, prefix + (decoder ? ".self" : ".attn"));
        std::string ap = prefix + (decoder ? ".self" : ".attn");
        int nk = decoder ? n : n_mem_valid;
        size_t kd = static_cast<size_t>(nk) * D;
        std::vector<T>& dsub = ws.d_sub;
        dsub.assign(dstream, dstream + nd);
        if (rate > 0.0 && !bc.drop_attn.empty())
            dropout_backward(dsub.data(), nd, rate, bc.drop_attn);
        std::vector<T>& dconcat = ws.d_concat;
        resize_zero(dconcat, nd);
        linear_backward(bc.attn.concat.data(), n, D, at.wo.data(), D, dsub.data(),
                        dconcat.data(), g(ap + ".wo").data(), g(ap + ".bo").data(),
                        false);
        std::vector<T>& dq = ws.d_q;
        std::vector<T>& dk = ws.d_k;
        std::vector<T>& dv = ws.d_v;
        dq.resize(nd);
        resize_zero(dk, kd);
        resize_zero(dv, kd);
        attention_core_backward(bc.attn.q.data(), n, bc.attn.k.data(),
                                bc.attn.v.data(), nk, H, hd,
                                decoder ? MaskMode::Causal : MaskMode::KeysUpTo,
                                bc.attn.probs.data(), dconcat.data(), dq.data(),
                                dk.data(), dv.data());
        std::vector<T>& dnorm = ws.d_norm;
        resize_zero(dnorm, nd);
        linear_backward(bc.norm1.data(), n, D, at.wq.data(), D, dq.data(),
                        dnorm.data(), g(ap + ".wq").data(), g(ap + ".bq").data(),
                        false);
        linear_backward(bc.norm1.data(), nk, D, at.wk.data(), D, dk.data(),
                        dnorm.data(), g(ap + ".wk").data(), g(ap + ".bk").data(),
                        true);
        linear_backward(bc.norm1.data(), nk, D, at.wv.data(), D, dv.data(),
                        dnorm.data(), g(ap + ".wv").data(), g(ap + ".bv").data(),
                        true);
        std::vector<T>& dx = ws.d_x;
        dx.resize(nd);
        layer_norm_backward(bc.ln1, n, D, ln_view(lay, p, prefix + ".ln1").g.data(),
                            dnorm.data(), dx.data(), g(prefix + ".ln1.g").data(),
                            g(prefix + ".ln1.b").data());
        for (size_t i = 0; i < nd; ++i) dstream[i] += dx[i];
    }
}

template <typename T>
void model_backward(const Model<T>& m, Workspace<T>& ws, std::span<const T> d_logits,
                    std::span<T> grads) {
    const auto& cfg = m.cfg;
    const auto& lay = m.layout;
    require(grads.size() == lay.total, "model_backward: bad grads size");
    require(d_logits.size() == ws.logits.size(), "model_backward: bad d_logits size");
    int D = cfg.embed_dim;
    int V = cfg.vocab;
    int n_x = ws.n_x, n_y = ws.n_y, n_valid = ws.n_valid;
    double rate = cfg.dropout;
    std::span<const T> p(m.params);

    auto g = [&](const std::string& name) { return lay.view(grads, name); };

    // logits projection
    std::span<const T> wout = cfg.tied_output ? lay.view(p, "embed.tok")
                                              : lay.view(p, "out.w");
    std::span<T> dwout = cfg.tied_output ? g("embed.tok") : g("out.w");
    auto dob = g("out.b");
    std::vector<T>& dH = ws.d_sub;
    resize_zero(dH, static_cast<size_t>(n_y) * D);
    for (int i = 0; i < n_y; ++i) {
        const T* dl = d_logits.data() + static_cast<size_t>(i) * V;
        const T* h = ws.dec_out.data() + static_cast<size_t>(i) * D;
        T* dh = dH.data() + static_cast<size_t>(i) * D;
        for (int v = 0; v < V; ++v) {
            T dv = dl[v];
            if (dv == T(0)) continue;
            dob[v] += dv;
            const T* wv = wout.data() + static_cast<size_t>(v) * D;
            T* dwv = dwout.data() + static_cast<size_t>(v) * D;
            for (int d = 0; d < D; ++d) {
                dh[d] += dv * wv[d];
                dwv[d] += dv * h[d];
            }
        }
    }

    // decoder stack
    std::vector<T> dstream_y = std::move(ws.d_stream_y);
    dstream_y.resize(static_cast<size_t>(n_y) * D);
    layer_norm_backward(ws.dec_final, n_y, D, ln_view(lay, p, "dec.final").g.data(),
                        dH.data(), dstream_y.data(), g("dec.final.g").data(),
                        g("dec.final.b").data());
    std::vector<T> dmem = std::move(ws.d_mem);
    resize_zero(dmem, static_cast<size_t>(n_x) * D);
    for (int l = cfg.dec_layers - 1; l >= 0; --l)
        block_backward<T>(m, "dec." + std::to_string(l), true, ws.dec[l], n_y,
                       ws.memory.data(), n_valid, dstream_y.data(), dmem.data(),
                       grads, ws, rate);
    if (rate > 0.0 && !ws.drop_dec_in.empty())
        dropout_backward(dstream_y.data(), dstream_y.size(), rate, ws.drop_dec_in);
    auto demb = g("embed.tok");
    auto dpos_dec = g("pos.dec");
    for (int i = 0; i < n_y; ++i) {
        const T* src = dstream_y.data() + static_cast<size_t>(i) * D;
        T* de = demb.data() + static_cast<size_t>(ws.y_in[i]) * D;
        T* dp = dpos_dec.data() + static_cast<size_t>(i) * D;
        for (int d = 0; d < D; ++d) {
            de[d] += src[d];
            dp[d] += src[d];
        }
    }
    ws.d_stream_y = std::move(dstream_y);

    // encoder stack
    std::vector<T> dstream_x = std::move(ws.d_stream_x);
    dstream_x.resize(static_cast<size_t>(n_x) * D);
    layer_norm_backward(ws.enc_final, n_x, D, ln_view(lay, p, "enc.final").g.data(),
                        dmem.data(), dstream_x.data(), g("enc.final.g").data(),
                        g("enc.final.b").data());
    ws.d_mem = std::move(dmem);
    for (int l = cfg.enc_layers - 1; l >= 0; --l)
        block_backward<T>(m, "enc." + std::to_string(l), false, ws.enc[l], n_x, nullptr,
                       n_valid, dstream_x.data(), nullptr, grads, ws, rate);
    if (rate > 0.0 && !ws.drop_enc_in.empty())
        dropout_backward(dstream_x.data(), dstream_x.size(), rate, ws.drop_enc_in);
    auto dpos_enc = g("pos.enc");
    for (int i = 0; i < n_x; ++i) {
        const T* src = dstream_x.data() + static_cast<size_t>(i) * D;
        T* de = demb.data() + static_cast<size_t>(ws.x[i]) * D;
        T* dp = dpos_enc.data() + static_cast<size_t>(i) * D;
        for (int d = 0; d < D; ++d) {
            de[d] += src[d];
            dp[d] += src[d];
        }
    }
    ws.d_stream_x = std::move(dstream_x);
}

// ---- inference split ----

template <typename T>
EncodedSource<T> model_encode(const Model<T>& m, std::span<const int32_t> x,
                              Workspace<T>& ws) {
    const auto& cfg = m.cfg;
    int D = cfg.embed_dim;
    int32_t pad = static_cast<int32_t>(cfg.vocab - 2);
    int n_x = static_cast<int>(x.size());
    int n_valid = valid_prefix(x, pad);
    require(n_valid >= 1, "model: x must contain at least one non-pad token");

    Rng drop(0);
    ForwardCtx<T> ctx{m, std::span<const T>(m.params), false, 0.0, &drop};
    embed_tokens(m, x, "pos.enc", ws.enc_in);
    ws.enc.resize(cfg.enc_layers);
    std::vector<T>& tmp = ws.scratch;
    std::vector<T> stream(ws.enc_in.begin(), ws.enc_in.end());
    for (int l = 0; l < cfg.enc_layers; ++l)
        block_forward<T>(ctx, "enc." + std::to_string(l), false, stream.data(), n_x,
                      nullptr, n_valid, nullptr, nullptr, ws.enc[l], tmp);
    auto lnf = ln_view(m.layout, ctx.p, "enc.final");

    EncodedSource<T> src;
    src.n_x = n_x;
    src.n_valid = n_valid;
    src.memory.resize(stream.size());
    layer_norm(stream.data(), n_x, D, lnf.g.data(), lnf.b.data(), src.memory.data(),
               ws.enc_final);

    size_t md = static_cast<size_t>(n_valid) * D;
    src.cross_k.resize(static_cast<size_t>(cfg.dec_layers) * md);
    src.cross_v.resize(static_cast<size_t>(cfg.dec_layers) * md);
    for (int l = 0; l < cfg.dec_layers; ++l) {
        auto cr = attn_view(m.layout, ctx.p, "dec." + std::to_string(l) + ".cross");
        linear(src.memory.data(), n_valid, D, cr.wk.data(), cr.bk.data(), D,
               src.cross_k.data() + static_cast<size_t>(l) * md);
        linear(src.memory.data(), n_valid, D, cr.wv.data(), cr.bv.data(), D,
               src.cross_v.data() + static_cast<size_t>(l) * md);
    }
    return src;
}

template <typename T>
void model_next_logprobs(const Model<T>& m, const EncodedSource<T>& src,
                         std::span<const int32_t> y_in, Workspace<T>& ws,
                         std::vector<double>& out) {
    const auto& cfg = m.cfg;
    int D = cfg.embed_dim;
    int V = cfg.vocab;
    int n_y = static_cast<int>(y_in.size());
    require(n_y >= 1, "model: decoder input must not be empty");

    Rng drop(0);
    ForwardCtx<T> ctx{m, std::span<const T>(m.params), false, 0.0, &drop};
    embed_tokens(m, y_in, "pos.dec", ws.dec_in);
    ws.dec.resize(cfg.dec_layers);
    std::vector<T>& tmp = ws.scratch;
    std::vector<T> dstream(ws.dec_in.begin(), ws.dec_in.end());
    size_t md = static_cast<size_t>(src.n_valid) * D;
    for (int l = 0; l < cfg.dec_layers; ++l)
        block_forward<T>(ctx, "dec." + std::to_string(l), true, dstream.data(), n_y,
                      src.memory.data(), src.n_valid,
                      src.cross_k.data() + static_cast<size_t>(l) * md,
                      src.cross_v.data() + static_cast<size_t>(l) * md, ws.dec[l],
                      tmp);
    auto lnd = ln_view(m.layout, ctx.p, "dec.final");
    ws.dec_out.resize(dstream.size());
    layer_norm(dstream.data(), n_y, D, lnd.g.data(), lnd.b.data(), ws.dec_out.data(),
               ws.dec_final);

    // last-row logits then log softmax in double
    auto ob = m.layout.view(ctx.p, "out.b");
    std::span<const T> wout = cfg.tied_output ? m.layout.view(ctx.p, "embed.tok")
                                              : m.layout.view(ctx.p, "out.w");
    const T* h = ws.dec_out.data() + static_cast<size_t>(n_y - 1) * D;
    out.resize(V);
    double mx = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < V; ++v) {
        const T* wv = wout.data() + static_cast<size_t>(v) * D;
        double acc = static_cast<double>(ob[v]);
        for (int d = 0; d < D; ++d)
            acc += static_cast<double>(h[d]) * static_cast<double>(wv[d]);
        out[v] = acc;
        mx = std::max(mx, acc);
    }
    double denom = 0.0;
    for (int v = 0; v < V; ++v) denom += std::exp(out[v] - mx);
    double lse = mx + std::log(denom);
    for (int v = 0; v < V; ++v) out[v] -= lse;
}

template struct Model<float>;
template struct Model<double>;
template void model_forward<float>(const Model<float>&, std::span<const int32_t>,
                                   std::span<const int32_t>, Workspace<float>&,
                                   bool, uint64_t);
template void model_forward<double>(const Model<double>&, std::span<const int32_t>,
                                    std::span<const int32_t>, Workspace<double>&,
                                    bool, uint64_t);
template void model_backward<float>(const Model<float>&, Workspace<float>&,
                                    std::span<const float>, std::span<float>);
template void model_backward<double>(const Model<double>&, Workspace<double>&,
                                     std::span<const double>, std::span<double>);
template EncodedSource<float> model_encode<float>(const Model<float>&,
                                                  std::span<const int32_t>,
                                                  Workspace<float>&);
template EncodedSource<double> model_encode<double>(const Model<double>&,
                                                    std::span<const int32_t>,
                                                    Workspace<double>&);
template void model_next_logprobs<float>(const Model<float>&,
                                         const EncodedSource<float>&,
                                         std::span<const int32_t>,
                                         Workspace<float>&, std::vector<double>&);
template void model_next_logprobs<double>(const Model<double>&,
                                          const EncodedSource<double>&,
                                          std::span<const int32_t>,
                                          Workspace<double>&, std::vector<double>&);

} // namespace tokrec
