// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tokrec/common.hpp"

namespace tokrec {

// Objective order everywhere: [front-greater, frequency, original].
inline constexpr int kObjFg = 0;
inline constexpr int kObjFr = 1;
inline constexpr int kObjOr = 2;

enum class WeightingMode { None, Fg, Fr, Multi, MultiCurriculum };

std::string to_string(WeightingMode m);
WeightingMode weighting_mode_from_string(const std::string& s);

// Position-weighted cross entropy over one sequence: rows x vocab logits,
// loss = sum_i w[i] * -log softmax(logits[i])[target[i]]. d_logits, when
// given, receives w[i] * (softmax - onehot) rows (not averaged).
template <typename T>
double weighted_nll(std::span<const T> logits, int rows, int vocab,
                    std::span<const int32_t> targets,
                    std::span<const double> weights, std::span<T> d_logits = {});

// Exact residual between the loss of alpha-scaled logits and alpha times the
// unscaled loss, for one row with weight w:
//   residual = w * (logsumexp(alpha * f) - alpha * logsumexp(f)).
// Zero at alpha = 1; w * ln(vocab) at alpha = 0.
template <typename T>
double scaled_softmax_residual(std::span<const T> logits_row, double alpha,
                               double w);

// Mixing state for the three objectives. Lambdas are stored as logs so they
// stay positive under gradient updates; t counts optimizer steps; c is the
// curriculum rate. The curriculum multiplies [fg, fr, or] by
// [e^-ct, 1 - e^-ct, e^-ct] before normalizing.
struct CurriculumState {
    std::array<double, 3> log_lambda = {0.0, 0.0, 0.0};
    double c = 2e-5;
    int64_t t = 0;

    std::array<double, 3> lambdas() const {
        return {std::exp(log_lambda[0]), std::exp(log_lambda[1]),
                std::exp(log_lambda[2])};
    }
    std::array<double, 3> gates(bool curriculum) const {
        if (!curriculum) return {1.0, 1.0, 1.0};
        double g = std::exp(-c * static_cast<double>(t));
        return {g, 1.0 - g, g};
    }
};

// alpha'_j = gate_j * lambda_j / sum_k gate_k * lambda_k. Sums to one.
std::array<double, 3> mixture_alphas(const CurriculumState& state,
                                     bool curriculum);

// Per-objective batch losses and their mixture.
struct LossBreakdown {
    std::array<double, 3> alpha = {0.0, 0.0, 0.0};
    std::array<double, 3> loss = {0.0, 0.0, 0.0}; // [fg, fr, or]
    double combined = 0.0;
};

// d(combined)/d(log lambda) for fixed per-objective losses:
//   dL/dlambda_j = gate_j * (loss_j - combined) / sum_k gate_k * lambda_k,
// then scaled by lambda_j for the log parameterization.
std::array<double, 3> lambda_gradient(const CurriculumState& state,
                                      bool curriculum,
                                      const LossBreakdown& breakdown);

} // namespace tokrec
