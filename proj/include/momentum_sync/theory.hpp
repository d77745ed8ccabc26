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
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "momentum_sync/momentum_rules.hpp"

namespace momentum_sync
{

class GateViolation : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

class ThresholdViolation : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

enum class MomentumOption
{
    Polyak,
    Nesterov,
    ClearedMomentumBaseline,
};

struct GateReport
{
    bool ok = true;
    std::vector<std::string> violations;
    double gamma_max = 0.0;
    // Real-valued interval bound; +inf when no interval condition applies.
    double interval_max = std::numeric_limits<double>::infinity();

    std::string summary() const
    {
        if (ok)
            return "ok";
        std::string s;
        for (const auto& v : violations)
            s += (s.empty() ? "" : "; ") + v;
        return s;
    }
};

namespace detail
{
// Floor that tolerates rounding just below an exact integer.
inline std::int64_t safe_floor(double x)
{
    return static_cast<std::int64_t>(std::floor(x * (1.0 + 1e-12)));
}

// Gate comparisons forgive relative rounding of this size at the boundary.
inline constexpr double kGateRelTol = 1e-12;

inline bool exceeds(double value, double limit) { return value > limit * (1.0 + kGateRelTol); }

inline void require_positive_L(double L)
{
    if (!(L > 0.0))
        throw std::invalid_argument("smoothness L must be > 0");
}

inline void check_interval(GateReport& r, const HyperParams& hp, double L)
{
    r.interval_max = (1.0 - hp.beta) / (6.0 * L * hp.gamma);
    if (exceeds(static_cast<double>(hp.interval), r.interval_max))
    {
        r.ok = false;
        r.violations.push_back("interval exceeds (1-beta)/(6 L gamma)");
    }
}
}  // namespace detail

/// gamma <= (1-beta)^2/((1+beta)L) and I <= (1-beta)/(6 L gamma).
inline GateReport gate_polyak(const HyperParams& hp, double L)
{
    detail::require_positive_L(L);
    const double b = hp.beta;
    GateReport r;
    r.gamma_max = (1.0 - b) * (1.0 - b) / ((1.0 + b) * L);
    if (detail::exceeds(hp.gamma, r.gamma_max))
    {
        r.ok = false;
        r.violations.push_back("gamma exceeds (1-beta)^2/((1+beta)L)");
    }
    detail::check_interval(r, hp, L);
    return r;
}

/// gamma <= (1-beta)^2/(L(1+beta^3)) and I <= (1-beta)/(6 L gamma).
inline GateReport gate_nesterov(const HyperParams& hp, double L)
{
    detail::require_positive_L(L);
    const double b = hp.beta;
    GateReport r;
    r.gamma_max = (1.0 - b) * (1.0 - b) / (L * (1.0 + b * b * b));
    if (detail::exceeds(hp.gamma, r.gamma_max))
    {
        r.ok = false;
        r.violations.push_back("gamma exceeds (1-beta)^2/(L(1+beta^3))");
    }
    detail::check_interval(r, hp, L);
    return r;
}

/// gamma <= min{(1-beta)^2 (1-sqrt(rho))^2/(6L), (1-beta)(1-sqrt(rho))/(4L)}.
inline GateReport gate_decentralized(const HyperParams& hp, double L, double rho)
{
    detail::require_positive_L(L);
    if (!(rho >= 0.0 && rho < 1.0))
        throw std::invalid_argument("rho must lie in [0, 1)");
    const double b = hp.beta;
    const double gap = 1.0 - std::sqrt(rho);
    GateReport r;
    r.gamma_max = std::min((1.0 - b) * (1.0 - b) * gap * gap / (6.0 * L),
                           (1.0 - b) * gap / (4.0 * L));
    if (detail::exceeds(hp.gamma, r.gamma_max))
    {
        r.ok = false;
        r.violations.push_back(
            "gamma exceeds min{(1-beta)^2(1-sqrt(rho))^2/(6L), (1-beta)(1-sqrt(rho))/(4L)}");
    }
    return r;
}

/// Largest integer I allowed by the interval gate at the given gamma.
inline std::int64_t interval_limit(double gamma, double beta, double L)
{
    detail::require_positive_L(L);
    return detail::safe_floor((1.0 - beta) / (6.0 * L * gamma));
}

struct BoundInputs
{
    double L = 1.0;
    double sigma = 0.0;
    double kappa = 0.0;
    std::size_t num_workers = 1;
    double f0_minus_fstar = 0.0;
};

struct BoundReport
{
    GateReport gate;
    double bound_value = 0.0;
    std::array<double, 4> terms{};
    std::int64_t comm_rounds_formula = 0;
};

/*!
 * Right-hand side of the restarted-momentum rate bound:
 *   2(1-b)/(g T) (f0 - f*) + L g/(1-b)^2 sigma^2/N
 *     + 4 L^2 g^2 I sigma^2/(1-b)^2 + 9 L^2 g^2 I^2 kappa^2/(1-b)^2.
 * The same bound covers Polyak and Nesterov; only the gate differs.
 */
inline BoundReport bound_polyak(const HyperParams& hp, const BoundInputs& in,
                                MomentumOption option = MomentumOption::Polyak)
{
    hp.validate();
    BoundReport r;
    r.gate = option == MomentumOption::Nesterov ? gate_nesterov(hp, in.L) : gate_polyak(hp, in.L);
    if (!r.gate.ok)
        throw GateViolation(r.gate.summary());
    const double b1 = 1.0 - hp.beta;
    const double g = hp.gamma;
    const double L = in.L;
    const auto T = static_cast<double>(hp.horizon);
    const auto I = static_cast<double>(hp.interval);
    const auto N = static_cast<double>(in.num_workers);
    const double s2 = in.sigma * in.sigma;
    const double k2 = in.kappa * in.kappa;
    r.terms = {2.0 * b1 / (g * T) * in.f0_minus_fstar, L * g / (b1 * b1) * s2 / N,
               4.0 * L * L * g * g * I * s2 / (b1 * b1), 9.0 * L * L * g * g * I * I * k2 / (b1 * b1)};
    r.bound_value = r.terms[0] + r.terms[1] + r.terms[2] + r.terms[3];
    r.comm_rounds_formula = (hp.horizon - 1) / hp.interval;
    return r;
}

/*!
 * Decentralized rate bound with explicit constants:
 *   2(1-b)/(g T) (f0 - f*) + L g/(1-b)^2 sigma^2/N
 *     + 4 L^2 g^2 sigma^2/((1-b)^2 (1-rho)) + 4 L^2 g^2 kappa^2/((1-b)^2 (1-sqrt(rho))^2).
 */
inline BoundReport bound_decentralized(const HyperParams& hp, const BoundInputs& in, double rho)
{
    hp.validate();
    BoundReport r;
    r.gate = gate_decentralized(hp, in.L, rho);
    if (!r.gate.ok)
        throw GateViolation(r.gate.summary());
    const double b1 = 1.0 - hp.beta;
    const double g = hp.gamma;
    const double L = in.L;
    const auto T = static_cast<double>(hp.horizon);
    const auto N = static_cast<double>(in.num_workers);
    const double s2 = in.sigma * in.sigma;
    const double k2 = in.kappa * in.kappa;
    const double gap = 1.0 - std::sqrt(rho);
    r.terms = {2.0 * b1 / (g * T) * in.f0_minus_fstar, L * g / (b1 * b1) * s2 / N,
               4.0 * L * L * g * g * s2 / (b1 * b1 * (1.0 - rho)),
               4.0 * L * L * g * g * k2 / (b1 * b1 * gap * gap)};
    r.bound_value = r.terms[0] + r.terms[1] + r.terms[2] + r.terms[3];
    r.comm_rounds_formula = hp.horizon - 1;
    return r;
}

/// T >= 36 L^2 N/(1-beta)^2 (linear speedup at I = 1).
inline double corollary1_threshold(std::size_t N, double L, double beta)
{
    return 36.0 * L * L * static_cast<double>(N) / ((1.0 - beta) * (1.0 - beta));
}

/// T >= (1+beta)^2 L^2 N/(1-beta)^4 (linear speedup with reduced communication).
inline double corollary2_threshold(std::size_t N, double L, double beta)
{
    const double b1 = 1.0 - beta;
    return (1.0 + beta) * (1.0 + beta) * L * L * static_cast<double>(N) / (b1 * b1 * b1 * b1);
}

/// T >= max{36 N L^2/((1-b)^4 (1-sqrt(rho))^4), 32 N L^2/((1-b)^2 (1-sqrt(rho))^2)}.
inline double decentralized_threshold(std::size_t N, double L, double beta, double rho)
{
    const double b1 = 1.0 - beta;
    const double gap = 1.0 - std::sqrt(rho);
    const auto n = static_cast<double>(N);
    return std::max(36.0 * n * L * L / (b1 * b1 * b1 * b1 * gap * gap * gap * gap),
                    32.0 * n * L * L / (b1 * b1 * gap * gap));
}

/*!
 * Largest synchronization interval keeping the O(1/sqrt(NT)) rate:
 *   kappa = 0:  (1-beta)/(6L) sqrt(T)/N^{3/2}
 *   kappa != 0: (1-beta)/(6L) T^{1/4}/N^{3/4}
 * floored; throws if T is below the threshold or the floor is < 1.
 */
inline std::int64_t max_interval(std::size_t N, std::int64_t T, double L, double beta,
                                 bool kappa_is_zero)
{
    detail::require_positive_L(L);
    if (N == 0 || T < 1)
        throw std::invalid_argument("max_interval: N and T must be >= 1");
    const double threshold = corollary2_threshold(N, L, beta);
    const auto t = static_cast<double>(T);
    const auto n = static_cast<double>(N);
    if (t < threshold)
        throw ThresholdViolation("T = " + std::to_string(T) + " is below (1+beta)^2 L^2 N/(1-beta)^4 = "
                                 + std::to_string(threshold));
    const double lead = (1.0 - beta) / (6.0 * L);
    const double value = kappa_is_zero ? lead * std::sqrt(t) / std::pow(n, 1.5)
                                       : lead * std::pow(t, 0.25) / std::pow(n, 0.75);
    const std::int64_t interval = detail::safe_floor(value);
    if (interval < 1)
        throw ThresholdViolation("interval formula gives " + std::to_string(value)
                                 + " < 1 for N = " + std::to_string(N));
    return interval;
}

enum class CommRegime
{
    KappaZero,
    KappaNonzero,
    Decentralized,
    EveryStep,
};

struct CommRounds
{
    std::string order;       // symbolic order in N and T
    double order_value = 0;  // the order expression evaluated without constants
    std::int64_t interval = 1;
    std::int64_t count = 0;  // floor((T-1)/I)
};

inline CommRounds comm_rounds(std::size_t N, std::int64_t T, CommRegime regime, double L = 1.0,
                              double beta = 0.0)
{
    const auto n = static_cast<double>(N);
    const auto t = static_cast<double>(T);
    switch (regime)
    {
        case CommRegime::KappaZero:
        {
            const auto I = max_interval(N, T, L, beta, true);
            return {"O(N^{3/2} T^{1/2})", std::pow(n, 1.5) * std::sqrt(t), I, (T - 1) / I};
        }
        case CommRegime::KappaNonzero:
        {
            const auto I = max_interval(N, T, L, beta, false);
            return {"O(N^{3/4} T^{3/4})", std::pow(n, 0.75) * std::pow(t, 0.75), I, (T - 1) / I};
        }
        case CommRegime::Decentralized:
        case CommRegime::EveryStep:
            return {"O(T)", t, 1, T - 1};
    }
    throw std::invalid_argument("unknown communication regime");
}

inline nlohmann::json to_json(const GateReport& g)
{
    return {{"ok", g.ok},
            {"violations", g.violations},
            {"gamma_max", g.gamma_max},
            {"interval_max", std::isfinite(g.interval_max) ? nlohmann::json(g.interval_max)
                                                           : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const BoundReport& r)
{
    return {{"gate", to_json(r.gate)},
            {"bound_value", r.bound_value},
            {"terms", r.terms},
            {"comm_rounds_formula", r.comm_rounds_formula}};
}

}  // namespace momentum_sync
