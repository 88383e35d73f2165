// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include "tokrec/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace tokrec {

std::string to_string(WeightingMode m) {
    switch (m) {
        case WeightingMode::None: return "none";
        case WeightingMode::Fg: return "fg";
        case WeightingMode::Fr: return "fr";
        case WeightingMode::Multi: return "multi";
        case WeightingMode::MultiCurriculum: return "multi+curriculum";
    }
    throw ContractError("unknown weighting mode");
}

WeightingMode weighting_mode_from_string(const std::string& s) {
    if (s == "none") return WeightingMode::None;
    if (s == "fg") return WeightingMode::Fg;
    if (s == "fr") return WeightingMode::Fr;
    if (s == "multi") return WeightingMode::Multi;
    if (s == "multi+curriculum") return WeightingMode::MultiCurriculum;
    throw ContractError("unknown weighting mode \"" + s +
                        "\" (expected none|fg|fr|multi|multi+curriculum)");
}

namespace {

// max then shifted sum, accumulated in double
template <typename T>
double logsumexp(std::span<const T> row) {
    double m = -std::numeric_limits<double>::infinity();
    for (T v : row) m = std::max(m, static_cast<double>(v));
    double s = 0.0;
    for (T v : row) s += std::exp(static_cast<double>(v) - m);
    return m + std::log(s);
}

} // namespace

template <typename T>
double weighted_nll(std::span<const T> logits, int rows, int vocab,
                    std::span<const int32_t> targets,
                    std::span<const double> weights, std::span<T> d_logits) {
    require(rows >= 1 && vocab >= 2, "weighted_nll: need rows >= 1, vocab >= 2");
    require(logits.size() == static_cast<size_t>(rows) * vocab,
            "weighted_nll: logits size mismatch");
    require(targets.size() == static_cast<size_t>(rows),
            "weighted_nll: one target per row required");
    require(weights.size() == static_cast<size_t>(rows),
            "weighted_nll: one weight per row required");
    require(d_logits.empty() || d_logits.size() == logits.size(),
            "weighted_nll: d_logits size mismatch");

    double loss = 0.0;
    for (int i = 0; i < rows; ++i) {
        int32_t y = targets[i];
        require(y >= 0 && y < vocab, "weighted_nll: target out of range");
        auto row = logits.subspan(static_cast<size_t>(i) * vocab, vocab);
        double lse = logsumexp(row);
        double w = weights[i];
        loss += w * (lse - static_cast<double>(row[y]));
        if (!d_logits.empty()) {
            auto drow = d_logits.subspan(static_cast<size_t>(i) * vocab, vocab);
            for (int v = 0; v < vocab; ++v) {
                double p = std::exp(static_cast<double>(row[v]) - lse);
                drow[v] = static_cast<T>(w * (p - (v == y ? 1.0 : 0.0)));
            }
        }
    }
    return loss;
}

template <typename T>
double scaled_softmax_residual(std::span<const T> logits_row, double alpha,
                               double w) {
    require(!logits_row.empty(), "scaled_softmax_residual: empty row");
    std::vector<T> scaled(logits_row.size());
    for (size_t i = 0; i < logits_row.size(); ++i)
        scaled[i] = static_cast<T>(alpha * static_cast<double>(logits_row[i]));
    double lse_scaled = logsumexp(std::span<const T>(scaled));
    double lse = logsumexp(logits_row);
    return w * (lse_scaled - alpha * lse);
}

template double weighted_nll<float>(std::span<const float>, int, int,
                                    std::span<const int32_t>,
                                    std::span<const double>, std::span<float>);
template double weighted_nll<double>(std::span<const double>, int, int,
                                     std::span<const int32_t>,
                                     std::span<const double>, std::span<double>);
template double scaled_softmax_residual<float>(std::span<const float>, double,
                                               double);
template double scaled_softmax_residual<double>(std::span<const double>, double,
                                                double);

std::array<double, 3> mixture_alphas(const CurriculumState& state,
                                     bool curriculum) {
    auto g = state.gates(curriculum);
    auto lam = state.lambdas();
    double s = 0.0;
    std::array<double, 3> a{};
    for (int j = 0; j < 3; ++j) {
        a[j] = g[j] * lam[j];
        s += a[j];
    }
    require(s > 0.0, "mixture_alphas: degenerate mixture, all gated lambdas zero");
    for (auto& v : a) v /= s;
    return a;
}

std::array<double, 3> lambda_gradient(const CurriculumState& state,
                                      bool curriculum,
                                      const LossBreakdown& breakdown) {
    auto g = state.gates(curriculum);
    auto lam = state.lambdas();
    double s = 0.0;
    for (int j = 0; j < 3; ++j) s += g[j] * lam[j];
    require(s > 0.0, "lambda_gradient: degenerate mixture");
    std::array<double, 3> d{};
    for (int j = 0; j < 3; ++j)
        d[j] = lam[j] * g[j] * (breakdown.loss[j] - breakdown.combined) / s;
    return d;
}

} // namespace tokrec
