// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tokrec/model.hpp"
#include "tokrec/objective.hpp"
#include "tokrec/types.hpp"

namespace tokrec {

struct TrainConfig {
    WeightingMode mode = WeightingMode::MultiCurriculum;
    int batch = 32;
    int64_t steps = 2000;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double curriculum_c = 2e-5;
    bool freeze_lambda = false;
    bool f64 = false; // train in double instead of float
    int threads = 1;
    int64_t log_every = 1;
    uint64_t seed = 1;

    void validate() const;
};

// One flattened training pair plus its per-position weight vectors. w_fg is
// shared across samples and lives in TrainData.
struct TrainSample {
    std::vector<int32_t> x;
    std::vector<int32_t> y;     // L code tokens
    std::vector<double> w_fr;   // L weights, sum L
    int32_t item_row = -1;      // target row in the id table
};

struct TrainData {
    TokenSpace space;
    std::vector<TrainSample> samples;
    std::vector<double> w_fg; // L weights, sum L
};

struct TrainLogEntry {
    int64_t t = 0;
    std::array<double, 3> alpha = {0, 0, 0}; // [fg, fr, or]
    std::array<double, 3> loss = {0, 0, 0};
    double combined = 0.0;
};

// Everything needed to restart or evaluate a run. Parameters and Adam
// moments are held widened to double; narrowing back to f32 is exact because
// they were computed in f32.
struct Checkpoint {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    int64_t step = 0;
    std::array<double, 3> log_lambda = {0, 0, 0};
    std::vector<double> params;
    std::vector<double> adam_m, adam_v;
    std::array<double, 3> lambda_m = {0, 0, 0}, lambda_v = {0, 0, 0};
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogEntry> log;
};

// Mixture loss and gradients for an explicit list of sample indices.
// grads, when non-empty, receives d(combined)/d(params) accumulated over the
// batch mean. d_lambda, when non-null, receives d(combined)/d(log lambda).
// Per-objective losses are always all computed; the mode only selects the
// mixture. Chunked fixed-order reduction keeps results identical for any
// thread count.
template <typename T>
LossBreakdown batch_loss(const Model<T>& m, const TrainData& data,
                         std::span<const size_t> batch,
                         const CurriculumState& state, WeightingMode mode,
                         std::span<T> grads, std::array<double, 3>* d_lambda,
                         int threads, uint64_t dropout_seed);

// AdamW with decoupled weight decay on the model parameters; the three log
// lambdas form a second group without decay, frozen in single-objective
// modes or when cfg.freeze_lambda is set. Batch order at step t depends only
// on (seed, t), so a resumed run replays the uninterrupted one bit for bit.
// Throws on non-finite loss.
TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& cfg,
                        const TrainData& data,
                        const std::function<void(const TrainLogEntry&)>& sink = {},
                        const Checkpoint* resume = nullptr);

} // namespace tokrec
