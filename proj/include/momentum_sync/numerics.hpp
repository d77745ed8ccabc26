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
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace momentum_sync
{

class DimensionError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

//---------------------------------------------------------------------------//
// Dense real vector in R^m.
//---------------------------------------------------------------------------//
class Vec
{
  public:
    Vec() = default;
    explicit Vec(std::size_t m, double fill = 0.0) : data_(m, fill) {}
    Vec(std::initializer_list<double> values) : data_(values) {}
    explicit Vec(std::vector<double> values) : data_(std::move(values)) {}

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> span() noexcept { return data_; }
    std::span<const double> span() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    bool operator==(const Vec&) const = default;

    Vec& operator+=(const Vec& rhs)
    {
        check_same(rhs);
        for (std::size_t i = 0; i < size(); ++i)
            data_[i] += rhs.data_[i];
        return *this;
    }
    Vec& operator-=(const Vec& rhs)
    {
        check_same(rhs);
        for (std::size_t i = 0; i < size(); ++i)
            data_[i] -= rhs.data_[i];
        return *this;
    }
    Vec& operator*=(double s) noexcept
    {
        for (double& v : data_)
            v *= s;
        return *this;
    }

    void check_same(const Vec& rhs) const
    {
        if (rhs.size() != size())
        {
            throw DimensionError("vector dimension mismatch: "
                                 + std::to_string(size()) + " vs "
                                 + std::to_string(rhs.size()));
        }
    }

  private:
    std::vector<double> data_;
};

inline Vec operator+(Vec lhs, const Vec& rhs)
{
    lhs += rhs;
    return lhs;
}
inline Vec operator-(Vec lhs, const Vec& rhs)
{
    lhs -= rhs;
    return lhs;
}
inline Vec operator*(double s, Vec v)
{
    v *= s;
    return v;
}

inline double dot(const Vec& a, const Vec& b)
{
    a.check_same(b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += a[i] * b[i];
    return acc;
}

inline double norm_sq(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(norm_sq(a)); }

inline double max_abs(const Vec& a)
{
    double m = 0.0;
    for (double v : a)
        m = std::max(m, std::abs(v));
    return m;
}

inline bool all_finite(const Vec& a)
{
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// y <- y + s * x
inline void axpy(double s, const Vec& x, Vec& y)
{
    y.check_same(x);
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += s * x[i];
}

//---------------------------------------------------------------------------//
// Dense square matrix, row-major.
//---------------------------------------------------------------------------//
class Mat
{
  public:
    Mat() = default;
    explicit Mat(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

    static Mat identity(std::size_t n)
    {
        Mat m(n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    static Mat from_rows(const std::vector<std::vector<double>>& rows)
    {
        Mat m(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
        {
            if (rows[i].size() != rows.size())
                throw DimensionError("matrix is not square: row "
                                     + std::to_string(i) + " has "
                                     + std::to_string(rows[i].size())
                                     + " entries, expected "
                                     + std::to_string(rows.size()));
            for (std::size_t j = 0; j < rows.size(); ++j)
                m(i, j) = rows[i][j];
        }
        return m;
    }

    std::size_t n() const noexcept { return n_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * n_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }

    std::span<const double> row(std::size_t i) const noexcept
    {
        return {data_.data() + i * n_, n_};
    }

    std::vector<std::vector<double>> rows() const
    {
        std::vector<std::vector<double>> out(n_);
        for (std::size_t i = 0; i < n_; ++i)
            out[i].assign(row(i).begin(), row(i).end());
        return out;
    }

    Mat transpose() const
    {
        Mat t(n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                t(j, i) = (*this)(i, j);
        return t;
    }

    double trace() const noexcept
    {
        double s = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            s += (*this)(i, i);
        return s;
    }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(),
                           [](double v) { return std::isfinite(v); });
    }

    bool operator==(const Mat&) const = default;

  private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

inline Mat operator*(const Mat& a, const Mat& b)
{
    if (a.n() != b.n())
        throw DimensionError("matrix dimension mismatch");
    const std::size_t n = a.n();
    Mat c(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
        {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < n; ++j)
                c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Mat operator-(const Mat& a, const Mat& b)
{
    if (a.n() != b.n())
        throw DimensionError("matrix dimension mismatch");
    Mat c(a.n());
    for (std::size_t i = 0; i < a.n(); ++i)
        for (std::size_t j = 0; j < a.n(); ++j)
            c(i, j) = a(i, j) - b(i, j);
    return c;
}

inline Vec operator*(const Mat& a, const Vec& x)
{
    if (a.n() != x.size())
        throw DimensionError("matrix-vector dimension mismatch");
    Vec y(a.n());
    for (std::size_t i = 0; i < a.n(); ++i)
    {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.n(); ++j)
            acc += a(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

inline double max_abs(const Mat& a)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.n(); ++i)
        for (double v : a.row(i))
            m = std::max(m, std::abs(v));
    return m;
}

//---------------------------------------------------------------------------//
// Philox4x32-10 block cipher (Salmon et al., SC'11), used as a counter-based
// generator: the output is a pure function of (key, counter).
//---------------------------------------------------------------------------//
namespace detail
{
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

constexpr PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept
{
    constexpr std::uint64_t m0 = 0xD2511F53u;
    constexpr std::uint64_t m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u;
    constexpr std::uint32_t w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round)
    {
        const std::uint64_t p0 = m0 * ctr[0];
        const std::uint64_t p1 = m1 * ctr[2];
        ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
               static_cast<std::uint32_t>(p1),
               static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
               static_cast<std::uint32_t>(p0)};
        key[0] += w0;
        key[1] += w1;
    }
    return ctr;
}

// Uniform in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) noexcept
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}
}  // namespace detail

//---------------------------------------------------------------------------//
/*!
 * Counter-based random stream owned by one worker.
 *
 * Each block (seed, worker_id, counter) maps to 128 random bits; the stream
 * advances `counter` by one per block. Distinct worker ids occupy disjoint
 * counter spaces, so worker streams never overlap.
 */
class RngStream
{
  public:
    RngStream(std::uint64_t seed, std::uint64_t worker_id, std::uint64_t counter = 0) noexcept
        : seed_(seed), worker_id_(worker_id), counter_(counter)
    {
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t worker_id() const noexcept { return worker_id_; }
    std::uint64_t counter() const noexcept { return counter_; }

    // Next 128-bit block as two 64-bit words.
    std::array<std::uint64_t, 2> next_block() noexcept
    {
        const detail::PhiloxCounter ctr{
            static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
            static_cast<std::uint32_t>(worker_id_), static_cast<std::uint32_t>(worker_id_ >> 32)};
        const detail::PhiloxKey key{static_cast<std::uint32_t>(seed_),
                                    static_cast<std::uint32_t>(seed_ >> 32)};
        const auto out = detail::philox4x32_10(ctr, key);
        ++counter_;
        return {(static_cast<std::uint64_t>(out[0]) << 32) | out[1],
                (static_cast<std::uint64_t>(out[2]) << 32) | out[3]};
    }

    // Two uniforms in [0, 1) from one block.
    std::pair<double, double> uniform_pair() noexcept
    {
        const auto b = next_block();
        return {detail::to_unit(b[0]), detail::to_unit(b[1])};
    }

    double uniform() noexcept { return uniform_pair().first; }

    // Uniform integer in [0, n); n >= 1. Rejection keeps it exactly uniform.
    std::uint64_t uniform_index(std::uint64_t n)
    {
        if (n == 0)
            throw std::invalid_argument("uniform_index: empty range");
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
        for (;;)
        {
            const std::uint64_t r = next_block()[0];
            if (r < limit)
                return r % n;
        }
    }

    // Box-Muller: one block yields exactly two standard normals.
    std::pair<double, double> normal_pair() noexcept
    {
        const auto [a, b] = uniform_pair();
        const double radius = std::sqrt(-2.0 * std::log(1.0 - a));
        const double angle = 2.0 * std::numbers::pi * b;
        return {radius * std::cos(angle), radius * std::sin(angle)};
    }

  private:
    std::uint64_t seed_;
    std::uint64_t worker_id_;
    std::uint64_t counter_;
};

/// m independent N(0, scale^2/m) draws, so E||v||^2 = scale^2.
inline Vec gaussian_vector(RngStream& stream, std::size_t m, double scale)
{
    if (m == 0)
        throw DimensionError("gaussian_vector: dimension must be >= 1");
    if (!(scale >= 0.0) || !std::isfinite(scale))
        throw std::invalid_argument("gaussian_vector: scale must be finite and >= 0");
    Vec v(m);
    const double sd = scale / std::sqrt(static_cast<double>(m));
    for (std::size_t i = 0; i < m; i += 2)
    {
        const auto [z0, z1] = stream.normal_pair();
        v[i] = sd * z0;
        if (i + 1 < m)
            v[i + 1] = sd * z1;
    }
    return v;
}

/*!
 * Arithmetic mean accumulated in ascending index order.
 *
 * Computed as v_0 + (1/K) sum_j (v_j - v_0): the result does not depend on
 * thread count and K identical inputs return that input bit-for-bit.
 */
inline Vec fixed_order_mean(std::span<const Vec> vectors)
{
    if (vectors.empty())
        throw std::invalid_argument("fixed_order_mean: empty list");
    const Vec& base = vectors.front();
    Vec acc(base.size());
    for (const Vec& v : vectors)
    {
        base.check_same(v);
        for (std::size_t i = 0; i < acc.size(); ++i)
            acc[i] += v[i] - base[i];
    }
    const double inv = 1.0 / static_cast<double>(vectors.size());
    Vec mean = base;
    for (std::size_t i = 0; i < mean.size(); ++i)
        mean[i] += acc[i] * inv;
    return mean;
}

inline Vec fixed_order_mean(const std::vector<Vec>& vectors)
{
    return fixed_order_mean(std::span<const Vec>(vectors));
}

/// (1/K) sum_j ||v_j - mean||^2
inline double dispersion(std::span<const Vec> vectors, const Vec& mean)
{
    double acc = 0.0;
    for (const Vec& v : vectors)
        acc += norm_sq(v - mean);
    return acc / static_cast<double>(vectors.size());
}

//---------------------------------------------------------------------------//
// Symmetric eigensolver (cyclic Jacobi).
//---------------------------------------------------------------------------//
struct SymmetricEigen
{
    std::vector<double> values;  // descending
    Mat vectors;                 // column k is the eigenvector of values[k]
};

inline constexpr std::size_t kMaxEigenDimension = 256;

inline void require_symmetric(const Mat& m, double tol = 1e-12)
{
    for (std::size_t i = 0; i < m.n(); ++i)
        for (std::size_t j = i + 1; j < m.n(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol)
                throw std::invalid_argument(
                    "matrix is not symmetric: |M(" + std::to_string(i) + "," + std::to_string(j)
                    + ") - M(" + std::to_string(j) + "," + std::to_string(i)
                    + ")| exceeds tolerance");
}

inline SymmetricEigen symmetric_eigen(const Mat& input)
{
    require_symmetric(input);
    if (!input.all_finite())
        throw std::invalid_argument("matrix has non-finite entries");
    const std::size_t n = input.n();
    if (n > kMaxEigenDimension)
        throw DimensionError("symmetric_eigen: dimension above 256");

    // Work on the exactly symmetrized matrix.
    Mat a(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            a(i, j) = 0.5 * (input(i, j) + input(j, i));
    Mat v = Mat::identity(n);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                s += a(i, j) * a(i, j);
        return s;
    };
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            scale += a(i, j) * a(i, j);

    for (int sweep = 0; sweep < 100; ++sweep)
    {
        if (off_norm() <= 1e-30 * scale || scale == 0.0)
            break;
        for (std::size_t p = 0; p + 1 < n; ++p)
        {
            for (std::size_t q = p + 1; q < n; ++q)
            {
                const double apq = a(p, q);
                if (apq == 0.0)
                    continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta)
                                 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k)
                {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k)
                {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k)
                {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymmetricEigen out{std::vector<double>(n), Mat(n)};
    for (std::size_t k = 0; k < n; ++k)
    {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r)
            out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

/// All eigenvalues of a symmetric matrix, descending.
inline std::vector<double> symmetric_eigenvalues(const Mat& m)
{
    return symmetric_eigen(m).values;
}

}  // namespace momentum_sync
