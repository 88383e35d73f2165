// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "tokrec/rng.hpp"

namespace tokrec {

namespace {

constexpr int kChunks = 8; // fixed reduction fan-in, independent of threads
constexpr uint64_t kPermTag = 0xE50C;
constexpr uint64_t kDropTag = 0xD209;

std::array<double, 3> mode_alphas(WeightingMode mode, const CurriculumState& state) {
    switch (mode) {
    case WeightingMode::None: return {0.0, 0.0, 1.0};
    case WeightingMode::Fg: return {1.0, 0.0, 0.0};
    case WeightingMode::Fr: return {0.0, 1.0, 0.0};
    case WeightingMode::Multi: return mixture_alphas(state, false);
    case WeightingMode::MultiCurriculum: return mixture_alphas(state, true);
    }
    throw ContractError("train: unknown weighting mode");
}

// Per-row negative log-likelihoods in double, straight off the logits.
template <typename T>
void nll_rows(std::span<const T> logits, int rows, int vocab,
              std::span<const int32_t> targets, double* out) {
    for (int i = 0; i < rows; ++i) {
        const T* row = logits.data() + static_cast<size_t>(i) * vocab;
        T mx = row[0];
        for (int v = 1; v < vocab; ++v) mx = std::max(mx, row[v]);
        double sum = 0.0;
        for (int v = 0; v < vocab; ++v)
            sum += std::exp(static_cast<double>(row[v] - mx));
        double lse = static_cast<double>(mx) + std::log(sum);
        out[i] = lse - static_cast<double>(row[targets[i]]);
    }
}

template <typename T>
struct ChunkResult {
    std::array<double, 3> loss_sum = {0.0, 0.0, 0.0};
    std::vector<T> grads;
};

} // namespace

void TrainConfig::validate() const {
    require(batch >= 1, "train: batch must be positive");
    require(steps >= 0, "train: steps must be non-negative");
    require(lr > 0.0, "train: lr must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0, "train: beta1 outside [0, 1)");
    require(beta2 >= 0.0 && beta2 < 1.0, "train: beta2 outside [0, 1)");
    require(eps > 0.0, "train: eps must be positive");
    require(weight_decay >= 0.0, "train: weight_decay must be non-negative");
    require(curriculum_c >= 0.0, "train: curriculum_c must be non-negative");
    require(threads >= 1, "train: threads must be positive");
    require(log_every >= 1, "train: log_every must be positive");
}

template <typename T>
LossBreakdown batch_loss(const Model<T>& m, const TrainData& data,
                         std::span<const size_t> batch,
                         const CurriculumState& state, WeightingMode mode,
                         std::span<T> grads, std::array<double, 3>* d_lambda,
                         int threads, uint64_t dropout_seed) {
    require(!batch.empty(), "batch_loss: empty batch");
    int L = data.space.L;
    int V = m.cfg.vocab;
    std::array<double, 3> alpha = mode_alphas(mode, state);
    bool want_grads = !grads.empty();
    if (want_grads)
        require(grads.size() == m.layout.total, "batch_loss: bad grads size");
    double inv_b = 1.0 / static_cast<double>(batch.size());

    std::array<ChunkResult<T>, kChunks> results;
    size_t n = batch.size();

    auto run_chunk = [&](int c) {
        size_t lo = n * c / kChunks;
        size_t hi = n * (c + 1) / kChunks;
        if (lo == hi) return;
        ChunkResult<T>& res = results[c];
        if (want_grads) res.grads.assign(m.layout.total, T(0));
        Workspace<T> ws;
        std::vector<int32_t> y_in(L);
        std::vector<double> nll(L);
        std::vector<double> w(L);
        std::vector<T> d_logits;
        for (size_t pos = lo; pos < hi; ++pos) {
            const TrainSample& s = data.samples[batch[pos]];
            y_in[0] = data.space.bos();
            for (int i = 0; i + 1 < L; ++i) y_in[i + 1] = s.y[i];
            model_forward(m, std::span<const int32_t>(s.x),
                          std::span<const int32_t>(y_in), ws, true,
                          derive_seed(dropout_seed, pos));
            nll_rows(std::span<const T>(ws.logits), L, V,
                     std::span<const int32_t>(s.y), nll.data());
            for (int i = 0; i < L; ++i) {
                res.loss_sum[kObjFg] += data.w_fg[i] * nll[i];
                res.loss_sum[kObjFr] += s.w_fr[i] * nll[i];
                res.loss_sum[kObjOr] += nll[i];
            }
            if (!want_grads) continue;
            for (int i = 0; i < L; ++i)
                w[i] = (alpha[kObjFg] * data.w_fg[i] + alpha[kObjFr] * s.w_fr[i] +
                        alpha[kObjOr]) *
                       inv_b;
            d_logits.resize(ws.logits.size());
            weighted_nll(std::span<const T>(ws.logits), L, V,
                         std::span<const int32_t>(s.y), std::span<const double>(w),
                         std::span<T>(d_logits));
            model_backward(m, ws, std::span<const T>(d_logits),
                           std::span<T>(res.grads));
        }
    };

    int workers = std::min(threads, kChunks);
    if (workers <= 1) {
        for (int c = 0; c < kChunks; ++c) run_chunk(c);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int wkr = 0; wkr < workers; ++wkr)
            pool.emplace_back([&, wkr] {
                for (int c = wkr; c < kChunks; c += workers) run_chunk(c);
            });
        for (auto& th : pool) th.join();
    }

    LossBreakdown out;
    out.alpha = alpha;
    for (int c = 0; c < kChunks; ++c) {
        for (int j = 0; j < 3; ++j) out.loss[j] += results[c].loss_sum[j];
        if (want_grads && !results[c].grads.empty())
            for (size_t i = 0; i < grads.size(); ++i) grads[i] += results[c].grads[i];
    }
    for (int j = 0; j < 3; ++j) out.loss[j] *= inv_b;
    out.combined = alpha[0] * out.loss[0] + alpha[1] * out.loss[1] +
                   alpha[2] * out.loss[2];
    if (d_lambda) {
        bool multi = mode == WeightingMode::Multi || mode == WeightingMode::MultiCurriculum;
        *d_lambda = multi ? lambda_gradient(state, mode == WeightingMode::MultiCurriculum, out)
                          : std::array<double, 3>{0.0, 0.0, 0.0};
    }
    return out;
}

template LossBreakdown batch_loss<float>(const Model<float>&, const TrainData&,
                                         std::span<const size_t>,
                                         const CurriculumState&, WeightingMode,
                                         std::span<float>, std::array<double, 3>*,
                                         int, uint64_t);
template LossBreakdown batch_loss<double>(const Model<double>&, const TrainData&,
                                          std::span<const size_t>,
                                          const CurriculumState&, WeightingMode,
                                          std::span<double>, std::array<double, 3>*,
                                          int, uint64_t);

namespace {

template <typename T>
TrainResult train_impl(const ModelConfig& model_cfg, const TrainConfig& cfg,
                       const TrainData& data,
                       const std::function<void(const TrainLogEntry&)>& sink,
                       const Checkpoint* resume) {
    model_cfg.validate();
    cfg.validate();
    require(!data.samples.empty(), "train: no training samples");
    int L = data.space.L;
    require(static_cast<int>(data.w_fg.size()) == L, "train: w_fg size mismatch");
    for (const auto& s : data.samples) {
        require(static_cast<int>(s.y.size()) == L, "train: target size mismatch");
        require(static_cast<int>(s.w_fr.size()) == L, "train: w_fr size mismatch");
    }

    Model<T> m;
    std::vector<T> adam_m, adam_v;
    CurriculumState state;
    state.c = cfg.curriculum_c;
    std::array<double, 3> lambda_m = {0, 0, 0}, lambda_v = {0, 0, 0};
    int64_t start = 0;

    if (resume) {
        m.cfg = model_cfg;
        m.layout = ParamLayout::build(model_cfg);
        require(resume->params.size() == m.layout.total,
                "train: resume checkpoint does not match the model config");
        require(resume->step <= cfg.steps, "train: resume step beyond cfg.steps");
        m.params.resize(m.layout.total);
        adam_m.resize(m.layout.total);
        adam_v.resize(m.layout.total);
        for (size_t i = 0; i < m.layout.total; ++i) {
            m.params[i] = static_cast<T>(resume->params[i]);
            adam_m[i] = static_cast<T>(resume->adam_m[i]);
            adam_v[i] = static_cast<T>(resume->adam_v[i]);
        }
        state.log_lambda = resume->log_lambda;
        lambda_m = resume->lambda_m;
        lambda_v = resume->lambda_v;
        start = resume->step;
    } else {
        m = Model<T>::init(model_cfg);
        adam_m.assign(m.layout.total, T(0));
        adam_v.assign(m.layout.total, T(0));
    }

    bool lambda_free = !cfg.freeze_lambda &&
                       (cfg.mode == WeightingMode::Multi ||
                        cfg.mode == WeightingMode::MultiCurriculum);

    size_t n = data.samples.size();
    size_t b = std::min<size_t>(cfg.batch, n);
    int64_t batches_per_epoch = static_cast<int64_t>((n + b - 1) / b);

    std::vector<uint32_t> perm;
    int64_t perm_epoch = -1;
    std::vector<T> grads(m.layout.total);
    std::vector<size_t> batch_idx;
    TrainResult result;

    for (int64_t t = start; t < cfg.steps; ++t) {
        state.t = t;
        int64_t epoch = t / batches_per_epoch;
        int64_t slot = t % batches_per_epoch;
        if (epoch != perm_epoch) {
            Rng rng(derive_seed(derive_seed(cfg.seed, kPermTag),
                                static_cast<uint64_t>(epoch)));
            perm = rng.permutation(n);
            perm_epoch = epoch;
        }
        size_t lo = static_cast<size_t>(slot) * b;
        size_t hi = std::min(lo + b, n);
        batch_idx.assign(perm.begin() + lo, perm.begin() + hi);

        std::fill(grads.begin(), grads.end(), T(0));
        std::array<double, 3> d_lambda = {0, 0, 0};
        uint64_t drop_seed = derive_seed(derive_seed(cfg.seed, kDropTag),
                                         static_cast<uint64_t>(t));
        LossBreakdown bd =
            batch_loss(m, data, std::span<const size_t>(batch_idx), state,
                       cfg.mode, std::span<T>(grads),
                       lambda_free ? &d_lambda : nullptr, cfg.threads, drop_seed);
        if (!std::isfinite(bd.combined))
            throw std::runtime_error("train: non-finite loss at step " +
                                     std::to_string(t));

        // AdamW, decoupled decay on the model group only
        double t1 = static_cast<double>(t) + 1.0;
        double bc1 = 1.0 - std::pow(cfg.beta1, t1);
        double bc2 = 1.0 - std::pow(cfg.beta2, t1);
        T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
        T lr = static_cast<T>(cfg.lr), wd = static_cast<T>(cfg.weight_decay);
        T eps = static_cast<T>(cfg.eps);
        T ibc1 = static_cast<T>(1.0 / bc1), ibc2 = static_cast<T>(1.0 / bc2);
        for (size_t i = 0; i < m.layout.total; ++i) {
            T g = grads[i];
            adam_m[i] = b1 * adam_m[i] + (T(1) - b1) * g;
            adam_v[i] = b2 * adam_v[i] + (T(1) - b2) * g * g;
            T mhat = adam_m[i] * ibc1;
            T vhat = adam_v[i] * ibc2;
            m.params[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * m.params[i]);
        }
        if (lambda_free) {
            for (int j = 0; j < 3; ++j) {
                double g = d_lambda[j];
                lambda_m[j] = cfg.beta1 * lambda_m[j] + (1.0 - cfg.beta1) * g;
                lambda_v[j] = cfg.beta2 * lambda_v[j] + (1.0 - cfg.beta2) * g * g;
                double mhat = lambda_m[j] / bc1;
                double vhat = lambda_v[j] / bc2;
                state.log_lambda[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }

        if (t % cfg.log_every == 0 || t + 1 == cfg.steps) {
            TrainLogEntry e{t, bd.alpha, bd.loss, bd.combined};
            result.log.push_back(e);
            if (sink) sink(e);
        }
    }

    Checkpoint& ck = result.checkpoint;
    ck.model_cfg = model_cfg;
    ck.train_cfg = cfg;
    ck.step = cfg.steps;
    ck.log_lambda = state.log_lambda;
    ck.params.assign(m.params.begin(), m.params.end());
    ck.adam_m.assign(adam_m.begin(), adam_m.end());
    ck.adam_v.assign(adam_v.begin(), adam_v.end());
    ck.lambda_m = lambda_m;
    ck.lambda_v = lambda_v;
    return result;
}

} // namespace

TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& cfg,
                        const TrainData& data,
                        const std::function<void(const TrainLogEntry&)>& sink,
                        const Checkpoint* resume) {
    if (cfg.f64) return train_impl<double>(model_cfg, cfg, data, sink, resume);
    return train_impl<float>(model_cfg, cfg, data, sink, resume);
}

} // namespace tokrec
