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
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "momentum_sync/numerics.hpp"

namespace momentum_sync
{

enum class ProblemKind
{
    HeterogeneousQuadratic,
    RationalNonconvex,
};

inline std::string to_string(ProblemKind kind)
{
    return kind == ProblemKind::HeterogeneousQuadratic ? "heterogeneous_quadratic"
                                                       : "rational_nonconvex";
}

inline ProblemKind problem_kind_from_string(const std::string& s)
{
    if (s == "heterogeneous_quadratic" || s == "quadratic")
        return ProblemKind::HeterogeneousQuadratic;
    if (s == "rational_nonconvex" || s == "nonconvex")
        return ProblemKind::RationalNonconvex;
    throw std::invalid_argument("unknown problem kind '" + s + "'");
}

/*!
 * Stochastic objective f(x) = (1/N) sum_i f_i(x) with certified constants.
 *
 * Quadratic kind:  f_i(x) = 1/2 (x - c_i)^T A (x - c_i)
 * Nonconvex kind:  f_i(x) = (1/m) sum_j phi(x_j - c_ij),  phi(u) = u^2/(1+u^2)
 *
 * Stochastic gradients add isotropic Gaussian noise with E||noise||^2 = sigma^2.
 */
struct ProblemSpec
{
    ProblemKind kind = ProblemKind::HeterogeneousQuadratic;
    std::size_t dimension = 0;
    std::size_t num_workers = 0;
    std::vector<Vec> centers;
    Vec center_mean;
    Mat curvature;  // quadratic kind only
    double noise_sigma = 0.0;
    double certified_L = 0.0;
    double certified_kappa = 0.0;
    double f_star = 0.0;
    Vec minimizer;
    // Sampling box for the nonconvex certificates; empty for the quadratic kind.
    Vec box_lo;
    Vec box_hi;
};

struct GradSample
{
    Vec g;
    std::size_t worker_id = 0;
    std::uint64_t iteration = 0;
};

namespace detail
{
inline double phi(double u) { return u * u / (1.0 + u * u); }

inline double phi_prime(double u)
{
    const double d = 1.0 + u * u;
    return 2.0 * u / (d * d);
}

inline double phi_second(double u)
{
    const double d = 1.0 + u * u;
    return (2.0 - 6.0 * u * u) / (d * d * d);
}

inline void check_worker(const ProblemSpec& spec, std::size_t worker)
{
    if (worker >= spec.num_workers)
        throw std::out_of_range("unknown worker id " + std::to_string(worker) + " (N = "
                                + std::to_string(spec.num_workers) + ")");
}

inline void check_point(const ProblemSpec& spec, const Vec& x)
{
    if (x.size() != spec.dimension)
        throw DimensionError("point has dimension " + std::to_string(x.size()) + ", problem has "
                             + std::to_string(spec.dimension));
}

// Uniform draw from the ball of radius r in R^m.
inline Vec uniform_in_ball(RngStream& stream, std::size_t m, double r)
{
    Vec dir = gaussian_vector(stream, m, 1.0);
    const double len = norm(dir);
    if (len == 0.0 || r == 0.0)
        return Vec(m);
    const double radius = r * std::pow(stream.uniform(), 1.0 / static_cast<double>(m));
    dir *= radius / len;
    return dir;
}

// Random orthogonal matrix (columns) by Gram-Schmidt on Gaussian columns.
inline Mat random_orthogonal(RngStream& stream, std::size_t m)
{
    std::vector<Vec> cols;
    while (cols.size() < m)
    {
        Vec c = gaussian_vector(stream, m, 1.0);
        for (int pass = 0; pass < 2; ++pass)
            for (const Vec& q : cols)
                axpy(-dot(q, c), q, c);
        const double len = norm(c);
        if (len < 1e-8)
            continue;
        c *= 1.0 / len;
        cols.push_back(std::move(c));
    }
    Mat q(m);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < m; ++i)
            q(i, j) = cols[j][i];
    return q;
}

inline std::vector<double> coordinate(const ProblemSpec& spec, std::size_t j)
{
    std::vector<double> c(spec.num_workers);
    for (std::size_t i = 0; i < spec.num_workers; ++i)
        c[i] = spec.centers[i][j];
    return c;
}

// m^2 times the j-th coordinate's share of (1/N) sum_i ||grad f_i - grad f||^2.
inline double coordinate_deviation(const std::vector<double>& c, double s)
{
    double mean = 0.0;
    for (double ci : c)
        mean += phi_prime(s - ci);
    mean /= static_cast<double>(c.size());
    double acc = 0.0;
    for (double ci : c)
    {
        const double d = phi_prime(s - ci) - mean;
        acc += d * d;
    }
    return acc / static_cast<double>(c.size());
}

inline double coordinate_value(const std::vector<double>& c, double s)
{
    double acc = 0.0;
    for (double ci : c)
        acc += phi(s - ci);
    return acc / static_cast<double>(c.size());
}

inline double coordinate_slope(const std::vector<double>& c, double s)
{
    double acc = 0.0;
    for (double ci : c)
        acc += phi_prime(s - ci);
    return acc / static_cast<double>(c.size());
}

inline double coordinate_curvature(const std::vector<double>& c, double s)
{
    double acc = 0.0;
    for (double ci : c)
        acc += phi_second(s - ci);
    return acc / static_cast<double>(c.size());
}

// Gradient descent from `s` on a 1-D function with |h''| <= 2, then Newton polish.
inline double descend_coordinate(const std::vector<double>& c, double s)
{
    for (int it = 0; it < 20000; ++it)
    {
        const double g = coordinate_slope(c, s);
        if (std::abs(g) < 1e-15)
            break;
        s -= 0.5 * g;
    }
    for (int it = 0; it < 20; ++it)
    {
        const double h = coordinate_curvature(c, s);
        if (h <= 0.0)
            break;
        const double next = s - coordinate_slope(c, s) / h;
        if (!(coordinate_value(c, next) <= coordinate_value(c, s)))
            break;
        s = next;
    }
    return s;
}
}  // namespace detail

//---------------------------------------------------------------------------//
// Construction
//---------------------------------------------------------------------------//

/// Quadratic problem from an explicit curvature matrix and centers.
inline ProblemSpec make_quadratic_from(const Mat& curvature, std::vector<Vec> centers, double sigma)
{
    if (centers.empty())
        throw std::invalid_argument("make_quadratic: need at least one worker");
    if (!(sigma >= 0.0))
        throw std::invalid_argument("make_quadratic: sigma must be >= 0");
    const std::size_t m = curvature.n();
    for (const Vec& c : centers)
        if (c.size() != m)
            throw DimensionError("make_quadratic: center dimension does not match curvature");
    const auto spectrum = symmetric_eigenvalues(curvature);
    if (spectrum.back() < -1e-12)
        throw std::invalid_argument("make_quadratic: curvature is not positive semidefinite");

    ProblemSpec spec;
    spec.kind = ProblemKind::HeterogeneousQuadratic;
    spec.dimension = m;
    spec.num_workers = centers.size();
    spec.centers = std::move(centers);
    spec.center_mean = fixed_order_mean(spec.centers);
    spec.curvature = curvature;
    spec.noise_sigma = sigma;
    spec.certified_L = std::max(spectrum.front(), 0.0);

    double dev = 0.0;
    double fstar = 0.0;
    for (const Vec& c : spec.centers)
    {
        const Vec d = spec.center_mean - c;
        dev += norm_sq(curvature * d);
        fstar += dot(d, curvature * d);
    }
    const auto n = static_cast<double>(spec.num_workers);
    spec.certified_kappa = std::sqrt(dev / n);
    spec.f_star = fstar / (2.0 * n);
    spec.minimizer = spec.center_mean;
    return spec;
}

/*!
 * Heterogeneous quadratic with A = Q diag(spectrum) Q^T for a seeded random
 * rotation Q, and centers drawn uniformly from a ball of radius center_spread.
 * certified_L = max(spectrum); minimizer is the center mean.
 */
inline ProblemSpec make_quadratic(std::size_t m, std::size_t num_workers, double center_spread,
                                  const std::vector<double>& curvature_spectrum, double sigma,
                                  std::uint64_t seed)
{
    if (m == 0 || num_workers == 0)
        throw std::invalid_argument("make_quadratic: m and N must be >= 1");
    if (curvature_spectrum.size() != m)
        throw DimensionError("make_quadratic: curvature spectrum has "
                             + std::to_string(curvature_spectrum.size()) + " entries, expected "
                             + std::to_string(m));
    for (double lam : curvature_spectrum)
        if (!(lam >= 0.0) || !std::isfinite(lam))
            throw std::invalid_argument("make_quadratic: curvature spectrum entries must be >= 0");
    if (!(center_spread >= 0.0))
        throw std::invalid_argument("make_quadratic: center_spread must be >= 0");

    RngStream rotation_stream(seed, 0xA11CE);
    const Mat q = detail::random_orthogonal(rotation_stream, m);
    Mat a(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
        {
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k)
                acc += q(i, k) * curvature_spectrum[k] * q(j, k);
            a(i, j) = acc;
        }
    // Exact symmetry.
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            a(j, i) = a(i, j);

    RngStream center_stream(seed, 0xCE17E5);
    std::vector<Vec> centers;
    centers.reserve(num_workers);
    for (std::size_t i = 0; i < num_workers; ++i)
        centers.push_back(detail::uniform_in_ball(center_stream, m, center_spread));

    ProblemSpec spec = make_quadratic_from(a, std::move(centers), sigma);
    spec.certified_L = *std::max_element(curvature_spectrum.begin(), curvature_spectrum.end());
    return spec;
}

/*!
 * Nonconvex problem from explicit centers.
 *
 * certified_L = 2 bounds |phi''|. kappa is the maximum of the deviation over
 * a grid of the sampling box, inflated by 10%; f_star is the best of >= 64
 * gradient-descent starts per coordinate minus 1e-9. The objective separates
 * across coordinates, so both searches run one coordinate at a time.
 */
inline ProblemSpec make_rational_nonconvex_from(std::vector<Vec> centers, double sigma)
{
    if (centers.empty())
        throw std::invalid_argument("make_rational_nonconvex: need at least one worker");
    if (!(sigma >= 0.0))
        throw std::invalid_argument("make_rational_nonconvex: sigma must be >= 0");
    const std::size_t m = centers.front().size();
    if (m == 0)
        throw DimensionError("make_rational_nonconvex: m must be >= 1");
    for (const Vec& c : centers)
        if (c.size() != m)
            throw DimensionError("make_rational_nonconvex: center dimensions differ");

    ProblemSpec spec;
    spec.kind = ProblemKind::RationalNonconvex;
    spec.dimension = m;
    spec.num_workers = centers.size();
    spec.centers = std::move(centers);
    spec.center_mean = fixed_order_mean(spec.centers);
    spec.noise_sigma = sigma;
    spec.certified_L = 2.0;

    constexpr double kBoxInflation = 3.0;
    constexpr double kBoxMargin = 2.0;
    constexpr std::size_t kGridPoints = 8193;
    constexpr std::size_t kStarts = 64;

    spec.box_lo = Vec(m);
    spec.box_hi = Vec(m);
    spec.minimizer = Vec(m);
    double kappa_sq = 0.0;
    double fsum = 0.0;
    for (std::size_t j = 0; j < m; ++j)
    {
        const auto c = detail::coordinate(spec, j);
        const auto [cmin, cmax] = std::minmax_element(c.begin(), c.end());
        const double mid = 0.5 * (*cmin + *cmax);
        const double half = 0.5 * (*cmax - *cmin) * kBoxInflation + kBoxMargin;
        const double lo = mid - half;
        const double hi = mid + half;
        spec.box_lo[j] = lo;
        spec.box_hi[j] = hi;

        double best_dev = 0.0;
        for (std::size_t k = 0; k < kGridPoints; ++k)
        {
            const double s = lo + (hi - lo) * static_cast<double>(k)
                                      / static_cast<double>(kGridPoints - 1);
            best_dev = std::max(best_dev, detail::coordinate_deviation(c, s));
        }
        kappa_sq += best_dev;

        std::vector<double> starts(c);
        for (std::size_t k = 0; k < kStarts; ++k)
            starts.push_back(lo + (hi - lo) * static_cast<double>(k)
                                      / static_cast<double>(kStarts - 1));
        double best_val = std::numeric_limits<double>::infinity();
        double best_at = mid;
        for (double s0 : starts)
        {
            const double s = detail::descend_coordinate(c, s0);
            const double val = detail::coordinate_value(c, s);
            if (val < best_val)
            {
                best_val = val;
                best_at = s;
            }
        }
        fsum += best_val;
        spec.minimizer[j] = best_at;
    }
    const auto md = static_cast<double>(m);
    spec.certified_kappa = 1.1 * std::sqrt(kappa_sq) / md;
    spec.f_star = fsum / md - 1e-9;
    return spec;
}

inline ProblemSpec make_rational_nonconvex(std::size_t m, std::size_t num_workers,
                                           double center_spread, double sigma,
                                           std::uint64_t seed)
{
    if (m == 0 || num_workers == 0)
        throw std::invalid_argument("make_rational_nonconvex: m and N must be >= 1");
    if (!(center_spread >= 0.0))
        throw std::invalid_argument("make_rational_nonconvex: center_spread must be >= 0");
    RngStream center_stream(seed, 0xCE17E5);
    std::vector<Vec> centers;
    centers.reserve(num_workers);
    for (std::size_t i = 0; i < num_workers; ++i)
        centers.push_back(detail::uniform_in_ball(center_stream, m, center_spread));
    return make_rational_nonconvex_from(std::move(centers), sigma);
}

/// Parameters that regenerate a problem family at any worker count.
struct ProblemRecipe
{
    ProblemKind kind = ProblemKind::HeterogeneousQuadratic;
    std::size_t dimension = 1;
    double center_spread = 0.0;
    std::vector<double> curvature_spectrum;  // quadratic kind only
    double sigma = 0.0;
    std::uint64_t seed = 0;

    ProblemSpec build(std::size_t num_workers) const
    {
        if (kind == ProblemKind::HeterogeneousQuadratic)
            return make_quadratic(dimension, num_workers, center_spread, curvature_spectrum, sigma,
                                  seed);
        return make_rational_nonconvex(dimension, num_workers, center_spread, sigma, seed);
    }
};

//---------------------------------------------------------------------------//
// Oracles
//---------------------------------------------------------------------------//

/// Exact local gradient of f_i.
inline Vec mean_gradient(const ProblemSpec& spec, std::size_t worker, const Vec& x)
{
    detail::check_worker(spec, worker);
    detail::check_point(spec, x);
    const Vec& c = spec.centers[worker];
    if (spec.kind == ProblemKind::HeterogeneousQuadratic)
        return spec.curvature * (x - c);
    Vec g(spec.dimension);
    const double inv_m = 1.0 / static_cast<double>(spec.dimension);
    for (std::size_t j = 0; j < spec.dimension; ++j)
        g[j] = inv_m * detail::phi_prime(x[j] - c[j]);
    return g;
}

/// Exact global gradient of f = (1/N) sum_i f_i.
inline Vec mean_gradient(const ProblemSpec& spec, const Vec& x)
{
    detail::check_point(spec, x);
    if (spec.kind == ProblemKind::HeterogeneousQuadratic)
        return spec.curvature * (x - spec.center_mean);
    std::vector<Vec> parts;
    parts.reserve(spec.num_workers);
    for (std::size_t i = 0; i < spec.num_workers; ++i)
        parts.push_back(mean_gradient(spec, i, x));
    return fixed_order_mean(parts);
}

inline double worker_objective(const ProblemSpec& spec, std::size_t worker, const Vec& x)
{
    detail::check_worker(spec, worker);
    detail::check_point(spec, x);
    const Vec d = x - spec.centers[worker];
    if (spec.kind == ProblemKind::HeterogeneousQuadratic)
        return 0.5 * dot(d, spec.curvature * d);
    double acc = 0.0;
    for (std::size_t j = 0; j < spec.dimension; ++j)
        acc += detail::phi(d[j]);
    return acc / static_cast<double>(spec.dimension);
}

inline double objective_value(const ProblemSpec& spec, const Vec& x)
{
    detail::check_point(spec, x);
    if (spec.kind == ProblemKind::HeterogeneousQuadratic)
    {
        // f(x) = 1/2 (x - cbar)^T A (x - cbar) + f_star, exactly.
        const Vec d = x - spec.center_mean;
        return 0.5 * dot(d, spec.curvature * d) + spec.f_star;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.num_workers; ++i)
        acc += worker_objective(spec, i, x);
    return acc / static_cast<double>(spec.num_workers);
}

/// (1/N) sum_i ||grad f_i(x) - grad f(x)||^2
inline double deviation_norm(const ProblemSpec& spec, const Vec& x)
{
    std::vector<Vec> grads;
    grads.reserve(spec.num_workers);
    for (std::size_t i = 0; i < spec.num_workers; ++i)
        grads.push_back(mean_gradient(spec, i, x));
    const Vec mean = fixed_order_mean(grads);
    return dispersion(grads, mean);
}

/// grad f_i(x) plus isotropic Gaussian noise with E||noise||^2 = sigma^2.
inline GradSample sample_gradient(const ProblemSpec& spec, std::size_t worker, const Vec& x,
                                  RngStream& stream, std::uint64_t iteration = 0)
{
    GradSample out{mean_gradient(spec, worker, x), worker, iteration};
    if (spec.noise_sigma > 0.0)
        out.g += gaussian_vector(stream, spec.dimension, spec.noise_sigma);
    return out;
}

//---------------------------------------------------------------------------//
// JSON
//---------------------------------------------------------------------------//

inline nlohmann::json vec_to_json(const Vec& v) { return v.values(); }

inline Vec vec_from_json(const nlohmann::json& j)
{
    return Vec(j.get<std::vector<double>>());
}

inline nlohmann::json to_json(const ProblemSpec& spec)
{
    nlohmann::json centers = nlohmann::json::array();
    for (const Vec& c : spec.centers)
        centers.push_back(vec_to_json(c));
    nlohmann::json j{
        {"kind", to_string(spec.kind)},
        {"dimension", spec.dimension},
        {"num_workers", spec.num_workers},
        {"centers", centers},
        {"center_mean", vec_to_json(spec.center_mean)},
        {"noise_sigma", spec.noise_sigma},
        {"certified_L", spec.certified_L},
        {"certified_kappa", spec.certified_kappa},
        {"f_star", spec.f_star},
        {"minimizer", vec_to_json(spec.minimizer)},
    };
    if (spec.kind == ProblemKind::HeterogeneousQuadratic)
        j["curvature"] = spec.curvature.rows();
    else
    {
        j["box_lo"] = vec_to_json(spec.box_lo);
        j["box_hi"] = vec_to_json(spec.box_hi);
    }
    return j;
}

inline ProblemSpec problem_from_json(const nlohmann::json& j)
{
    ProblemSpec spec;
    spec.kind = problem_kind_from_string(j.at("kind").get<std::string>());
    spec.dimension = j.at("dimension").get<std::size_t>();
    spec.num_workers = j.at("num_workers").get<std::size_t>();
    for (const auto& c : j.at("centers"))
        spec.centers.push_back(vec_from_json(c));
    if (spec.dimension == 0 || spec.centers.size() != spec.num_workers)
        throw std::invalid_argument("problem: centers do not match num_workers");
    for (const Vec& c : spec.centers)
        if (c.size() != spec.dimension)
            throw DimensionError("problem: center dimension mismatch");
    spec.center_mean = vec_from_json(j.at("center_mean"));
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.certified_L = j.at("certified_L").get<double>();
    spec.certified_kappa = j.at("certified_kappa").get<double>();
    spec.f_star = j.at("f_star").get<double>();
    spec.minimizer = vec_from_json(j.at("minimizer"));
    if (spec.kind == ProblemKind::HeterogeneousQuadratic)
    {
        spec.curvature = Mat::from_rows(j.at("curvature").get<std::vector<std::vector<double>>>());
        if (spec.curvature.n() != spec.dimension)
            throw DimensionError("problem: curvature dimension mismatch");
    }
    else
    {
        spec.box_lo = vec_from_json(j.at("box_lo"));
        spec.box_hi = vec_from_json(j.at("box_hi"));
    }
    if (spec.noise_sigma < 0.0)
        throw std::invalid_argument("problem: noise_sigma must be >= 0");
    return spec;
}

/// FNV-1a over the canonical JSON text.
inline std::string content_hash(const nlohmann::json& j)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : j.dump())
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i)
    {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
        h >>= 4;
    }
    return out;
}

inline std::string problem_hash(const ProblemSpec& spec) { return content_hash(to_json(spec)); }

}  // namespace momentum_sync
