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

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "momentum_sync/numerics.hpp"

namespace momentum_sync
{

class AssumptionViolation : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

/// Symmetric doubly stochastic W with rho = max(|lambda_2|, |lambda_N|)^2.
struct MixingMatrix
{
    Mat W;
    double rho = 0.0;

    std::size_t n() const noexcept { return W.n(); }
};

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kLeadingEigenTol = 1e-10;
inline constexpr double kSpectralSlack = 1e-9;

/// Q = (1/N) 1 1^T
inline Mat averaging_projector(std::size_t n)
{
    return Mat(n, 1.0 / static_cast<double>(n));
}

/*!
 * Checks symmetry, double stochasticity, lambda_1 = 1 and
 * max(|lambda_2|, |lambda_N|) < 1; returns rho. Each failure names the
 * violated condition.
 */
inline double validate_assumption2(const Mat& w)
{
    const std::size_t n = w.n();
    if (n == 0)
        throw AssumptionViolation("mixing matrix is empty");
    if (!w.all_finite())
        throw AssumptionViolation("mixing matrix has non-finite entries");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
        {
            if (std::abs(w(i, j) - w(j, i)) > kStochasticTol)
                throw AssumptionViolation("not symmetric: W(" + std::to_string(i) + ","
                                          + std::to_string(j) + ") != W(" + std::to_string(j)
                                          + "," + std::to_string(i) + ")");
            if (w(i, j) < 0.0 || w(i, j) > 1.0)
                throw AssumptionViolation("not stochastic: entry W(" + std::to_string(i) + ","
                                          + std::to_string(j) + ") outside [0,1]");
        }
    for (std::size_t i = 0; i < n; ++i)
    {
        double s = 0.0;
        for (double v : w.row(i))
            s += v;
        if (std::abs(s - 1.0) > kStochasticTol)
            throw AssumptionViolation("not stochastic: row " + std::to_string(i)
                                      + " does not sum to 1");
    }
    const auto lambda = symmetric_eigenvalues(w);
    if (std::abs(lambda.front() - 1.0) > kLeadingEigenTol)
        throw AssumptionViolation("lambda_1(W) = " + std::to_string(lambda.front())
                                  + " is not 1");
    if (n == 1)
        return 0.0;
    double second = std::max(std::abs(lambda[1]), std::abs(lambda.back()));
    if (second <= kSpectralSlack)
        second = 0.0;
    if (second >= 1.0 - kSpectralSlack)
        throw AssumptionViolation("max(|lambda_2|, |lambda_N|) = " + std::to_string(second)
                                  + " is not < 1 (graph disconnected or bipartite)");
    return second * second;
}

inline MixingMatrix make_mixing_matrix(const Mat& w) { return {w, validate_assumption2(w)}; }

/// W = Q: every step is an exact global average.
inline MixingMatrix complete_graph(std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("complete_graph: N must be >= 1");
    return {averaging_projector(n), 0.0};
}

/// Ring with W_ii = self_weight and (1 - self_weight)/2 to each neighbor.
inline MixingMatrix ring_graph(std::size_t n, double self_weight)
{
    if (n < 3)
        throw std::invalid_argument("ring_graph: N must be >= 3");
    if (!(self_weight > 0.0 && self_weight < 1.0))
        throw std::invalid_argument("ring_graph: self_weight must lie in (0,1)");
    const double side = 0.5 * (1.0 - self_weight);
    Mat w(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        w(i, i) = self_weight;
        w(i, (i + 1) % n) += side;
        w(i, (i + n - 1) % n) += side;
    }
    // Circulant spectrum: self_weight + (1 - self_weight) cos(2 pi k / N).
    double second = 0.0;
    for (std::size_t k = 1; k < n; ++k)
    {
        const double lam = self_weight
                           + (1.0 - self_weight)
                                 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k)
                                            / static_cast<double>(n));
        second = std::max(second, std::abs(lam));
    }
    if (second <= kSpectralSlack)
        second = 0.0;
    validate_assumption2(w);
    return {w, second * second};
}

/// Spectral norm of (I - Q) W^k, formed from the eigendecomposition of W.
inline double projector_mix_norm(const Mat& w, int k)
{
    validate_assumption2(w);
    if (k < 0)
        throw std::invalid_argument("projector_mix_norm: k must be >= 0");
    const std::size_t n = w.n();
    const auto eig = symmetric_eigen(w);
    Mat wk(n);
    for (std::size_t c = 0; c < n; ++c)
    {
        const double lk = std::pow(eig.values[c], k);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                wk(i, j) += lk * eig.vectors(i, c) * eig.vectors(j, c);
    }
    Mat m = (Mat::identity(n) - averaging_projector(n)) * wk;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
        {
            const double avg = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = avg;
            m(j, i) = avg;
        }
    double out = 0.0;
    for (double lam : symmetric_eigenvalues(m))
        out = std::max(out, std::abs(lam));
    return out;
}

struct CommutationResiduals
{
    double q;           // ||QW - WQ||_max
    double complement;  // ||(I-Q)W - W(I-Q)||_max
};

inline CommutationResiduals commutation_residuals(const Mat& w)
{
    const Mat q = averaging_projector(w.n());
    const Mat c = Mat::identity(w.n()) - q;
    return {max_abs(q * w - w * q), max_abs(c * w - w * c)};
}

inline nlohmann::json to_json(const MixingMatrix& m)
{
    return {{"n", m.n()}, {"rows", m.W.rows()}, {"rho", m.rho}};
}

/// Loads {"n": N, "rows": [[...]]}; Assumption 2 is always re-validated.
inline MixingMatrix mixing_matrix_from_json(const nlohmann::json& j)
{
    const auto n = j.at("n").get<std::size_t>();
    const auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
    if (rows.size() != n)
        throw DimensionError("mixing matrix: 'n' is " + std::to_string(n) + " but "
                             + std::to_string(rows.size()) + " rows given");
    return make_mixing_matrix(Mat::from_rows(rows));
}

}  // namespace momentum_sync
