//*****************************************************************************
// Copyright 2026 The momentum_sync Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//*****************************************************************************

#include <cmath>
#include <numbers>
#include <thread>
#include <vector>

#include "gtest/gtest.h"
#include "momentum_sync/numerics.hpp"
#include "momentum_sync/parallel.hpp"

namespace ms = momentum_sync;

namespace
{
ms::Mat random_symmetric(ms::RngStream& rng, std::size_t n)
{
    ms::Mat m(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j)
        {
            const double v = 2.0 * rng.uniform() - 1.0;
            m(i, j) = v;
            m(j, i) = v;
        }
    return m;
}
}  // namespace

TEST(Philox, KnownAnswerVectors)
{
    using ms::detail::philox4x32_10;
    EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}),
              (ms::detail::PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
    EXPECT_EQ(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                            {0xffffffff, 0xffffffff}),
              (ms::detail::PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
    EXPECT_EQ(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                            {0xa4093822, 0x299f31d0}),
              (ms::detail::PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(RngStream, SameCoordinatesSameDraws)
{
    ms::RngStream a(42, 3, 17);
    ms::RngStream b(42, 3, 17);
    EXPECT_EQ(ms::gaussian_vector(a, 9, 1.5), ms::gaussian_vector(b, 9, 1.5));
    EXPECT_EQ(a.counter(), b.counter());
    EXPECT_EQ(a.counter(), 17u + 5u);  // ceil(9/2) blocks
}

TEST(RngStream, WorkersDiffer)
{
    ms::RngStream a(42, 0);
    ms::RngStream b(42, 1);
    EXPECT_NE(a.next_block(), b.next_block());
}

TEST(RngStream, UniformIndexInRange)
{
    ms::RngStream s(1, 0);
    std::vector<int> hits(7, 0);
    for (int k = 0; k < 7000; ++k)
        ++hits[s.uniform_index(7)];
    for (int h : hits)
        EXPECT_GT(h, 800);
}

TEST(GaussianVector, ZeroScaleGivesZero)
{
    ms::RngStream s(5, 0);
    EXPECT_EQ(ms::gaussian_vector(s, 3, 0.0), ms::Vec(3));
}

TEST(GaussianVector, SecondMomentMatchesScale)
{
    ms::RngStream s(2024, 0);
    double acc = 0.0;
    constexpr int kDraws = 100000;
    for (int k = 0; k < kDraws; ++k)
        acc += ms::norm_sq(ms::gaussian_vector(s, 16, 1.0));
    EXPECT_NEAR(acc / kDraws, 1.0, 0.02);
}

TEST(GaussianVector, RejectsBadArguments)
{
    ms::RngStream s(5, 0);
    EXPECT_THROW(ms::gaussian_vector(s, 0, 1.0), ms::DimensionError);
    EXPECT_THROW(ms::gaussian_vector(s, 2, -1.0), std::invalid_argument);
}

TEST(FixedOrderMean, Examples)
{
    const ms::Vec v{0.1, -7.25, 3.0};
    EXPECT_EQ(ms::fixed_order_mean(std::vector<ms::Vec>{v}), v);
    EXPECT_EQ(ms::fixed_order_mean(std::vector<ms::Vec>{{1, 0}, {-1, 0}}), (ms::Vec{0, 0}));
    EXPECT_EQ(ms::fixed_order_mean(std::vector<ms::Vec>{{1, 2}, {3, 4}, {5, 0}}), (ms::Vec{3, 2}));
}

TEST(FixedOrderMean, CopiesReturnExactInput)
{
    ms::RngStream s(9, 0);
    for (std::size_t k = 1; k <= 64; ++k)
    {
        const ms::Vec v = ms::gaussian_vector(s, 5, 100.0);
        EXPECT_EQ(ms::fixed_order_mean(std::vector<ms::Vec>(k, v)), v) << "K=" << k;
    }
}

TEST(FixedOrderMean, Errors)
{
    EXPECT_THROW(ms::fixed_order_mean(std::vector<ms::Vec>{}), std::invalid_argument);
    EXPECT_THROW(ms::fixed_order_mean(std::vector<ms::Vec>{{1, 2}, {1}}), ms::DimensionError);
}

TEST(SymmetricEigenvalues, Examples)
{
    const auto id = ms::symmetric_eigenvalues(ms::Mat::identity(3));
    for (double v : id)
        EXPECT_NEAR(v, 1.0, 1e-15);

    const auto q = ms::symmetric_eigenvalues(ms::Mat(4, 0.25));
    const std::vector<double> q_want{1, 0, 0, 0};
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_NEAR(q[i], q_want[i], 1e-14);

    ms::Mat ring(4);
    for (std::size_t i = 0; i < 4; ++i)
    {
        ring(i, i) = 0.5;
        ring(i, (i + 1) % 4) = 0.25;
        ring(i, (i + 3) % 4) = 0.25;
    }
    const auto r = ms::symmetric_eigenvalues(ring);
    const std::vector<double> r_want{1, 0.5, 0.5, 0};
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_NEAR(r[i], r_want[i], 1e-14);
}

TEST(SymmetricEigenvalues, RejectsNonSymmetric)
{
    ms::Mat m(2);
    m(0, 1) = 1.0;
    EXPECT_THROW(ms::symmetric_eigenvalues(m), std::invalid_argument);
}

// Circulant oracle: a symmetric circulant with first row c has eigenvalues
// sum_j c_j cos(2 pi j k / n).
TEST(SymmetricEigenvalues, MatchesCirculantFormula)
{
    ms::RngStream rng(11, 0);
    for (std::size_t n : {5u, 8u, 13u, 32u})
    {
        std::vector<double> c(n);
        for (std::size_t j = 0; j <= n / 2; ++j)
        {
            c[j] = rng.uniform();
            c[(n - j) % n] = c[j];
        }
        ms::Mat m(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                m(i, j) = c[(j + n - i) % n];
        std::vector<double> want(n);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t j = 0; j < n; ++j)
                want[k] += c[j] * std::cos(2.0 * std::numbers::pi * double(j * k) / double(n));
        std::sort(want.rbegin(), want.rend());
        const auto got = ms::symmetric_eigenvalues(m);
        for (std::size_t k = 0; k < n; ++k)
            EXPECT_NEAR(got[k], want[k], 1e-10 * std::max(1.0, std::abs(want[k])));
    }
}

TEST(SymmetricEigen, RandomMatricesProperties)
{
    ms::RngStream rng(7, 0);
    for (int trial = 0; trial < 30; ++trial)
    {
        const std::size_t n = 1 + rng.uniform_index(24);
        const ms::Mat m = random_symmetric(rng, n);
        const auto eig = ms::symmetric_eigen(m);
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            sum += eig.values[k];
            if (k > 0)
            {
                EXPECT_GE(eig.values[k - 1], eig.values[k]);
            }
            ms::Vec v(n);
            for (std::size_t i = 0; i < n; ++i)
                v[i] = eig.vectors(i, k);
            const ms::Vec resid = m * v - eig.values[k] * v;
            EXPECT_LT(ms::max_abs(resid), 1e-12);
        }
        EXPECT_NEAR(sum, m.trace(), 1e-9);
    }
}

TEST(SymmetricEigenvalues, DoublyStochasticLeadingEigenvalueIsOne)
{
    ms::RngStream rng(3, 0);
    for (int trial = 0; trial < 20; ++trial)
    {
        const std::size_t n = 2 + rng.uniform_index(15);
        // Convex combination of symmetrized permutations.
        ms::Mat w(n);
        double total = 0.0;
        for (int p = 0; p < 4; ++p)
        {
            std::vector<std::size_t> perm(n);
            for (std::size_t i = 0; i < n; ++i)
                perm[i] = i;
            for (std::size_t i = n - 1; i > 0; --i)
                std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
            const double a = rng.uniform() + 0.1;
            total += a;
            for (std::size_t i = 0; i < n; ++i)
            {
                w(i, perm[i]) += 0.5 * a;
                w(perm[i], i) += 0.5 * a;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                w(i, j) /= total;
        EXPECT_NEAR(ms::symmetric_eigenvalues(w).front(), 1.0, 1e-10);
    }
}

TEST(WorkerPool, ResultsIndependentOfThreadCount)
{
    auto compute = [](std::size_t threads) {
        ms::WorkerPool pool(threads);
        std::vector<ms::Vec> out(37);
        for (int round = 0; round < 5; ++round)
            pool.for_each(out.size(), [&](std::size_t i) {
                ms::RngStream s(99, i, static_cast<std::uint64_t>(round) * 10);
                out[i] = ms::gaussian_vector(s, 6, 1.0);
            });
        return out;
    };
    EXPECT_EQ(compute(1), compute(4));
    EXPECT_EQ(compute(1), compute(8));
}

TEST(WorkerPool, PropagatesLowestIndexException)
{
    ms::WorkerPool pool(3);
    try
    {
        pool.for_each(10, [](std::size_t i) {
            if (i == 4 || i == 7)
                throw std::runtime_error(std::to_string(i));
        });
        FAIL() << "expected exception";
    }
    catch (const std::runtime_error& e)
    {
        EXPECT_STREQ(e.what(), "4");
    }
}
