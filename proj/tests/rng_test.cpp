// Copyright (c) 2026 tokrec contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "tokrec/common.hpp"
#include "tokrec/rng.hpp"

using namespace tokrec;

TEST_SUITE("rng") {

TEST_CASE("identical seeds give identical streams") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
        CHECK(a.uniform() == b.uniform());
        CHECK(a.normal() == b.normal());
    }
}

TEST_CASE("uniform stays in [0, 1) and covers the range") {
    Rng rng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("uniform_index is unbiased across a small range") {
    Rng rng(11);
    std::vector<int> counts(5, 0);
    const int draws = 50000;
    for (int i = 0; i < draws; ++i) ++counts[rng.uniform_index(5)];
    for (int c : counts) {
        // 5 sigma around draws/5 with sigma = sqrt(n p (1-p))
        double sigma = std::sqrt(draws * 0.2 * 0.8);
        CHECK(std::abs(c - draws / 5.0) < 5.0 * sigma);
    }
    CHECK_THROWS_AS(rng.uniform_index(0), ContractError);
}

TEST_CASE("normal moments are sane") {
    Rng rng(5);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
    Rng a(17), b(17);
    CHECK(a.normal(3.0, 2.0) == doctest::Approx(3.0 + 2.0 * b.normal()));
}

TEST_CASE("permutation contains every index exactly once") {
    Rng rng(9);
    auto p = rng.permutation(257);
    std::vector<uint32_t> sorted(p.begin(), p.end());
    std::sort(sorted.begin(), sorted.end());
    for (uint32_t i = 0; i < 257; ++i) CHECK(sorted[i] == i);
    CHECK(Rng(9).permutation(257) == p);
    CHECK(Rng(10).permutation(257) != p);
}

TEST_CASE("discrete respects zero weights and rejects degenerate input") {
    Rng rng(3);
    std::vector<double> w = {0.0, 1.0, 0.0, 2.0};
    for (int i = 0; i < 1000; ++i) {
        size_t idx = rng.discrete(w);
        CHECK((idx == 1 || idx == 3));
    }
    std::vector<double> zeros = {0.0, 0.0};
    CHECK_THROWS_AS(rng.discrete(zeros), ContractError);
    std::vector<double> neg = {1.0, -0.5};
    CHECK_THROWS_AS(rng.discrete(neg), ContractError);
}

TEST_CASE("derive_seed splits streams stably") {
    CHECK(derive_seed(42, 1) == derive_seed(42, 1));
    CHECK(derive_seed(42, 1) != derive_seed(42, 2));
    CHECK(derive_seed(42, 1) != derive_seed(43, 1));
    // Derived streams behave independently of the base stream.
    Rng base(42);
    Rng derived(derive_seed(42, 7));
    CHECK(base.next_u64() != derived.next_u64());
}

} // TEST_SUITE
