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

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "momentum_sync/numerics.hpp"

namespace momentum_sync
{

struct HyperParams
{
    double gamma = 0.01;     // learning rate
    double beta = 0.0;       // momentum coefficient, [0, 1)
    std::int64_t interval = 1;  // synchronization interval I
    std::int64_t horizon = 1;   // T; the loop runs t = 1..T-1

    void validate() const
    {
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw std::invalid_argument("gamma must be finite and > 0");
        if (!(beta >= 0.0 && beta < 1.0))
            throw std::invalid_argument("beta must satisfy 0 <= beta < 1");
        if (interval < 1)
            throw std::invalid_argument("interval must be >= 1");
        if (horizon < 1)
            throw std::invalid_argument("horizon T must be >= 1");
    }
};

/// Local solution x, momentum buffer u, Nesterov scratch v (zero under Polyak).
struct WorkerState
{
    Vec x;
    Vec u;
    Vec v;

    static WorkerState at(const Vec& x0) { return {x0, Vec(x0.size()), Vec(x0.size())}; }

    bool operator==(const WorkerState&) const = default;
};

namespace detail
{
inline void check_step(const WorkerState& s, const Vec& g)
{
    if (s.u.size() != s.x.size() || s.v.size() != s.x.size() || g.size() != s.x.size())
        throw DimensionError("worker state and gradient dimensions differ");
}
}  // namespace detail

/// Heavy ball: u' = beta u + g;  x' = x - gamma u'.
inline WorkerState polyak_step(WorkerState s, const Vec& g, const HyperParams& hp)
{
    detail::check_step(s, g);
    for (std::size_t k = 0; k < s.x.size(); ++k)
    {
        s.u[k] = hp.beta * s.u[k] + g[k];
        s.x[k] -= hp.gamma * s.u[k];
    }
    return s;
}

/// Nesterov: u' = beta u + g;  v' = beta u' + g;  x' = x - gamma v'.
inline WorkerState nesterov_step(WorkerState s, const Vec& g, const HyperParams& hp)
{
    detail::check_step(s, g);
    for (std::size_t k = 0; k < s.x.size(); ++k)
    {
        s.u[k] = hp.beta * s.u[k] + g[k];
        s.v[k] = hp.beta * s.u[k] + g[k];
        s.x[k] -= hp.gamma * s.v[k];
    }
    return s;
}

// Single-variable heavy ball: x' = x - gamma g + beta (x - x_prev).
// Equivalence oracle for polyak_step, started with x_prev = x.
inline Vec polyak_step_single_variable(const Vec& x, const Vec& x_prev, const Vec& g,
                                       const HyperParams& hp)
{
    x.check_same(x_prev);
    x.check_same(g);
    Vec out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
        out[k] = x[k] - hp.gamma * g[k] + hp.beta * (x[k] - x_prev[k]);
    return out;
}

// Two-sequence Nesterov: y' = x - gamma g;  x' = y' + beta (y' - y_prev).
// Returns (y', x'). Equivalence oracle for nesterov_step.
inline std::pair<Vec, Vec> nesterov_step_two_sequence(const Vec& y_prev, const Vec& x,
                                                      const Vec& g, const HyperParams& hp)
{
    x.check_same(y_prev);
    x.check_same(g);
    Vec y(x.size());
    Vec out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k)
    {
        y[k] = x[k] - hp.gamma * g[k];
        out[k] = y[k] + hp.beta * (y[k] - y_prev[k]);
    }
    return {std::move(y), std::move(out)};
}

namespace detail
{
inline void check_states(std::span<const WorkerState> states)
{
    if (states.empty())
        throw std::invalid_argument("restart: empty worker list");
    const std::size_t m = states.front().x.size();
    for (const auto& s : states)
        if (s.x.size() != m || s.u.size() != m || s.v.size() != m)
            throw DimensionError("restart: worker state dimensions differ");
}

inline std::pair<Vec, Vec> node_averages(std::span<const WorkerState> states)
{
    std::vector<Vec> xs;
    std::vector<Vec> us;
    xs.reserve(states.size());
    us.reserve(states.size());
    for (const auto& s : states)
    {
        xs.push_back(s.x);
        us.push_back(s.u);
    }
    return {fixed_order_mean(xs), fixed_order_mean(us)};
}
}  // namespace detail

/// Reset every worker's x and u to the node averages. v is left as is; it is
/// recomputed from u and g at the next Nesterov step.
inline std::vector<WorkerState> restart_average(std::vector<WorkerState> states)
{
    detail::check_states(states);
    auto [xhat, uhat] = detail::node_averages(states);
    for (auto& s : states)
    {
        s.x = xhat;
        s.u = uhat;
    }
    return states;
}

/// Model averaging with cleared momentum: x to the node average, u to zero.
inline std::vector<WorkerState> restart_average_cleared(std::vector<WorkerState> states)
{
    detail::check_states(states);
    auto xhat = detail::node_averages(states).first;
    for (auto& s : states)
    {
        s.x = xhat;
        s.u = Vec(xhat.size());
    }
    return states;
}

}  // namespace momentum_sync
