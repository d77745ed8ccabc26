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
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "momentum_sync/momentum_rules.hpp"
#include "momentum_sync/numerics.hpp"
#include "momentum_sync/parallel.hpp"
#include "momentum_sync/problems.hpp"
#include "momentum_sync/theory.hpp"
#include "momentum_sync/topology.hpp"

namespace momentum_sync
{

enum class Algorithm
{
    ParallelRestarted,
    Decentralized,
};

inline std::string to_string(Algorithm a)
{
    return a == Algorithm::ParallelRestarted ? "parallel_restarted" : "decentralized";
}

inline std::string to_string(MomentumOption o)
{
    switch (o)
    {
        case MomentumOption::Polyak: return "polyak";
        case MomentumOption::Nesterov: return "nesterov";
        case MomentumOption::ClearedMomentumBaseline: return "cleared_momentum";
    }
    return "unknown";
}

class ConfigError : public std::invalid_argument
{
  public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig
{
    Algorithm algorithm = Algorithm::ParallelRestarted;
    MomentumOption option = MomentumOption::Polyak;
    HyperParams hp;
    ProblemSpec problem;
    std::optional<MixingMatrix> topology;  // Decentralized only
    std::uint64_t seed = 0;
    Vec x_init;  // empty means the origin
    std::int64_t eval_every = 1;
    bool check_lemmas = false;
    // Execution only; never changes results.
    std::size_t threads = 1;

    std::size_t num_workers() const noexcept { return problem.num_workers; }

    Vec initial_point() const { return x_init.empty() ? Vec(problem.dimension) : x_init; }

    void validate() const
    {
        try
        {
            hp.validate();
        }
        catch (const std::invalid_argument& e)
        {
            throw ConfigError(e.what());
        }
        if (problem.num_workers == 0 || problem.dimension == 0)
            throw ConfigError("problem has no workers or zero dimension");
        if (!x_init.empty() && x_init.size() != problem.dimension)
            throw ConfigError("x_init dimension does not match the problem");
        if (eval_every < 1)
            throw ConfigError("eval_every must be >= 1");
        if (algorithm == Algorithm::Decentralized)
        {
            if (option == MomentumOption::ClearedMomentumBaseline)
                throw ConfigError("the cleared-momentum baseline is only defined for the "
                                  "parallel restarted algorithm");
            if (!topology)
                throw ConfigError("decentralized run requires a mixing matrix");
            if (topology->n() != problem.num_workers)
                throw ConfigError("mixing matrix size does not match the worker count");
            try
            {
                validate_assumption2(topology->W);
            }
            catch (const AssumptionViolation& e)
            {
                throw ConfigError(std::string("mixing matrix violates Assumption 2: ") + e.what());
            }
        }
    }
};

struct TraceRow
{
    std::int64_t t = 0;
    double grad_norm_sq = 0.0;
    double objective = 0.0;
    double consensus_x = 0.0;
    double consensus_u = 0.0;
    std::int64_t comm_rounds = 0;
    double lemma_residual = 0.0;  // max so far, 0 when checks are off
};

using Trace = std::vector<TraceRow>;

struct LemmaResiduals
{
    double node_average = 0.0;  // ubar/xbar recursions and averaging conservation
    double auxiliary = 0.0;     // zbar (Polyak) / ybar (Nesterov) increments
    bool auxiliary_checked = false;
};

struct RunResult
{
    Trace trace;
    double avg_grad_norm_sq = 0.0;
    std::int64_t random_iterate_index = 0;
    Vec random_iterate;
    std::vector<WorkerState> final_states;
    std::int64_t comm_rounds = 0;
    LemmaResiduals residuals;
};

class DivergenceError : public std::runtime_error
{
  public:
    DivergenceError(std::int64_t iteration, Trace partial)
        : std::runtime_error("divergence at iteration " + std::to_string(iteration)),
          iteration_(iteration), partial_(std::move(partial))
    {
    }

    std::int64_t iteration() const noexcept { return iteration_; }
    const Trace& partial_trace() const noexcept { return partial_; }

  private:
    std::int64_t iteration_;
    Trace partial_;
};

inline constexpr double kDivergenceNorm = 1e12;
inline constexpr std::uint64_t kRunStreamId = ~std::uint64_t{0};

namespace detail
{
inline double scaled_residual(const Vec& got, const Vec& want)
{
    return max_abs(got - want) / std::max(1.0, max_abs(want));
}
}  // namespace detail

//---------------------------------------------------------------------------//
/*!
 * Node-average recursions. With gbar the mean stochastic gradient of the
 * iteration, the pre-communication averages satisfy
 *   ubar_pre = beta ubar_prev + gbar
 *   xbar_pre = xbar_prev - gamma ubar_pre               (Polyak)
 *   xbar_pre = xbar_prev - gamma (beta ubar_pre + gbar) (Nesterov)
 * and averaging/mixing preserves both means (the cleared baseline zeroes u).
 */
class NodeAverageChecker
{
  public:
    NodeAverageChecker(MomentumOption option, const HyperParams& hp) : option_(option), hp_(hp) {}

    void reset(const Vec& xbar0)
    {
        xbar_ = xbar0;
        ubar_ = Vec(xbar0.size());
    }

    double observe_local(const Vec& xbar_pre, const Vec& ubar_pre, const Vec& gbar)
    {
        Vec u_want = hp_.beta * ubar_;
        u_want += gbar;
        Vec step = option_ == MomentumOption::Nesterov ? hp_.beta * ubar_pre + gbar : ubar_pre;
        Vec x_want = xbar_;
        axpy(-hp_.gamma, step, x_want);
        xbar_pre_ = xbar_pre;
        ubar_pre_ = ubar_pre;
        return std::max(detail::scaled_residual(ubar_pre, u_want),
                        detail::scaled_residual(xbar_pre, x_want));
    }

    double observe_communicated(const Vec& xbar, const Vec& ubar, bool momentum_cleared)
    {
        double r = detail::scaled_residual(xbar, xbar_pre_);
        if (!momentum_cleared)
            r = std::max(r, detail::scaled_residual(ubar, ubar_pre_));
        xbar_ = xbar;
        ubar_ = ubar;
        return r;
    }

  private:
    MomentumOption option_;
    HyperParams hp_;
    Vec xbar_;
    Vec ubar_;
    Vec xbar_pre_;
    Vec ubar_pre_;
};

//---------------------------------------------------------------------------//
/*!
 * Auxiliary sequence increments.
 *   zbar^(0) = xbar^(0),  zbar^(t) = (xbar^(t) - beta xbar^(t-1))/(1-beta)
 *   ybar^(t) = zbar^(t) + gamma beta/(1-beta) gbar^(t-1)           (Nesterov)
 * Both satisfy  s^(t) - s^(t-1) = -gamma/(1-beta) gbar^(t-1)  for every
 * realization; observe() returns the residual of that identity.
 */
class AuxiliarySequenceChecker
{
  public:
    AuxiliarySequenceChecker(MomentumOption option, const HyperParams& hp)
        : option_(option), hp_(hp)
    {
    }

    void reset(const Vec& xbar0)
    {
        xbar_prev_ = xbar0;
        aux_ = xbar0;
    }

    const Vec& value() const noexcept { return aux_; }

    /// xbar is xbar^(t); gbar is the mean gradient that produced it.
    double observe(const Vec& xbar, const Vec& gbar)
    {
        const double b = hp_.beta;
        Vec next = xbar;
        axpy(-b, xbar_prev_, next);
        if (option_ == MomentumOption::Nesterov)
            axpy(hp_.gamma * b, gbar, next);
        next *= 1.0 / (1.0 - b);
        Vec want = aux_;
        axpy(-hp_.gamma / (1.0 - b), gbar, want);
        const double r = detail::scaled_residual(next, want);
        xbar_prev_ = xbar;
        aux_ = std::move(next);
        return r;
    }

  private:
    MomentumOption option_;
    HyperParams hp_;
    Vec xbar_prev_;
    Vec aux_;
};

namespace detail
{
inline std::vector<Vec> collect_x(const std::vector<WorkerState>& states)
{
    std::vector<Vec> out;
    out.reserve(states.size());
    for (const auto& s : states)
        out.push_back(s.x);
    return out;
}

inline std::vector<Vec> collect_u(const std::vector<WorkerState>& states)
{
    std::vector<Vec> out;
    out.reserve(states.size());
    for (const auto& s : states)
        out.push_back(s.u);
    return out;
}

// sum_j src_j W_ji for every i, in ascending j.
inline std::vector<Vec> mix(const std::vector<Vec>& src, const Mat& w, WorkerPool& pool)
{
    std::vector<Vec> out(src.size(), Vec(src.front().size()));
    pool.for_each(src.size(), [&](std::size_t i) {
        Vec& acc = out[i];
        for (std::size_t j = 0; j < src.size(); ++j)
        {
            const double wji = w(j, i);
            if (wji != 0.0)
                axpy(wji, src[j], acc);
        }
    });
    return out;
}

inline bool diverged(const WorkerState& s)
{
    return !all_finite(s.x) || !all_finite(s.u) || norm(s.x) > kDivergenceNorm;
}

inline RunResult run_engine(const RunConfig& cfg)
{
    cfg.validate();
    const ProblemSpec& spec = cfg.problem;
    const HyperParams& hp = cfg.hp;
    const std::size_t n = spec.num_workers;
    const std::int64_t T = hp.horizon;
    const bool decentralized = cfg.algorithm == Algorithm::Decentralized;
    const bool cleared = cfg.option == MomentumOption::ClearedMomentumBaseline;

    WorkerPool pool(cfg.threads);
    const Vec x0 = cfg.initial_point();
    std::vector<WorkerState> states(n, WorkerState::at(x0));
    std::vector<RngStream> streams;
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        streams.emplace_back(cfg.seed, i);
    std::vector<Vec> grads(n);

    RngStream run_stream(cfg.seed, kRunStreamId);
    RunResult result;
    result.random_iterate_index = static_cast<std::int64_t>(
        run_stream.uniform_index(static_cast<std::uint64_t>(T)));

    NodeAverageChecker node_check(cfg.option, hp);
    AuxiliarySequenceChecker aux_check(cfg.option, hp);
    result.residuals.auxiliary_checked = cfg.check_lemmas && !cleared;

    Vec xbar = x0;
    Vec ubar(x0.size());
    node_check.reset(xbar);
    aux_check.reset(xbar);

    double residual_so_far = 0.0;
    double grad_sum = 0.0;
    auto record = [&](std::int64_t t, double gn) {
        const auto xs = collect_x(states);
        const auto us = collect_u(states);
        result.trace.push_back({t, gn, objective_value(spec, xbar), dispersion(xs, xbar),
                                dispersion(us, ubar), result.comm_rounds, residual_so_far});
    };

    {
        const double gn = norm_sq(mean_gradient(spec, xbar));
        grad_sum += gn;
        if (result.random_iterate_index == 0)
            result.random_iterate = xbar;
        record(0, gn);
    }

    for (std::int64_t t = 1; t < T; ++t)
    {
        pool.for_each(n, [&](std::size_t i) {
            grads[i] = sample_gradient(spec, i, states[i].x, streams[i],
                                       static_cast<std::uint64_t>(t - 1))
                           .g;
            states[i] = cfg.option == MomentumOption::Nesterov ? nesterov_step(states[i], grads[i], hp)
                                                               : polyak_step(states[i], grads[i], hp);
        });
        for (const auto& s : states)
            if (diverged(s))
                throw DivergenceError(t, result.trace);

        Vec gbar;
        if (cfg.check_lemmas)
        {
            gbar = fixed_order_mean(grads);
            const double r = node_check.observe_local(fixed_order_mean(collect_x(states)),
                                                      fixed_order_mean(collect_u(states)), gbar);
            result.residuals.node_average = std::max(result.residuals.node_average, r);
        }

        bool momentum_cleared = false;
        if (decentralized)
        {
            const auto xs = mix(collect_x(states), cfg.topology->W, pool);
            const auto us = mix(collect_u(states), cfg.topology->W, pool);
            for (std::size_t i = 0; i < n; ++i)
            {
                states[i].x = xs[i];
                states[i].u = us[i];
            }
            ++result.comm_rounds;
        }
        else if (t % hp.interval == 0)
        {
            states = cleared ? restart_average_cleared(std::move(states))
                             : restart_average(std::move(states));
            momentum_cleared = cleared;
            ++result.comm_rounds;
        }

        xbar = fixed_order_mean(collect_x(states));
        ubar = fixed_order_mean(collect_u(states));

        if (cfg.check_lemmas)
        {
            double r = node_check.observe_communicated(xbar, ubar, momentum_cleared);
            result.residuals.node_average = std::max(result.residuals.node_average, r);
            if (result.residuals.auxiliary_checked)
                result.residuals.auxiliary =
                    std::max(result.residuals.auxiliary, aux_check.observe(xbar, gbar));
            residual_so_far = std::max(result.residuals.node_average, result.residuals.auxiliary);
        }

        const double gn = norm_sq(mean_gradient(spec, xbar));
        grad_sum += gn;
        if (t == result.random_iterate_index)
            result.random_iterate = xbar;
        if (t % cfg.eval_every == 0 || t == T - 1)
            record(t, gn);
    }

    result.avg_grad_norm_sq = grad_sum / static_cast<double>(T);
    result.final_states = std::move(states);
    return result;
}
}  // namespace detail

/// Parallel restarted momentum SGD: local steps, node averaging every I iterations.
inline RunResult run_parallel_restarted(const RunConfig& cfg)
{
    if (cfg.algorithm != Algorithm::ParallelRestarted)
        throw ConfigError("run_parallel_restarted: config selects another algorithm");
    return detail::run_engine(cfg);
}

/// Decentralized momentum SGD: local steps followed by mixing with W every iteration.
inline RunResult run_decentralized(const RunConfig& cfg)
{
    if (cfg.algorithm != Algorithm::Decentralized)
        throw ConfigError("run_decentralized: config selects another algorithm");
    return detail::run_engine(cfg);
}

inline RunResult run(const RunConfig& cfg) { return detail::run_engine(cfg); }

/// f(x_init) - f_star from the certified problem constants.
inline double initial_gap(const RunConfig& cfg)
{
    return objective_value(cfg.problem, cfg.initial_point()) - cfg.problem.f_star;
}

/// Theorem bound matching the configured algorithm; throws GateViolation.
inline BoundReport theory_bound(const RunConfig& cfg)
{
    const BoundInputs in{cfg.problem.certified_L, cfg.problem.noise_sigma,
                         cfg.problem.certified_kappa, cfg.problem.num_workers, initial_gap(cfg)};
    if (cfg.algorithm == Algorithm::Decentralized)
        return bound_decentralized(cfg.hp, in, cfg.topology->rho);
    return bound_polyak(cfg.hp, in, cfg.option);
}

//---------------------------------------------------------------------------//
// Ledgers
//---------------------------------------------------------------------------//

inline constexpr const char* kTraceHeader = "t,grad_norm_sq,objective,consensus_x,consensus_u,comm_rounds";
inline constexpr int kLedgerVersion = 1;

inline std::string format_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV: one comment line carrying version and hashes, then the fixed header.
inline void write_trace_csv(std::ostream& os, const Trace& trace, const std::string& config_hash,
                            const std::string& problem_hash)
{
    os << "# momentum_sync trace v" << kLedgerVersion << " config_hash=" << config_hash
       << " problem_hash=" << problem_hash << '\n';
    os << kTraceHeader << '\n';
    for (const auto& r : trace)
    {
        os << r.t << ',' << format_real(r.grad_norm_sq) << ',' << format_real(r.objective) << ','
           << format_real(r.consensus_x) << ',' << format_real(r.consensus_u) << ','
           << r.comm_rounds << '\n';
    }
}

inline nlohmann::json to_json(const RunResult& r)
{
    nlohmann::json states = nlohmann::json::array();
    for (const auto& s : r.final_states)
        states.push_back({{"x", s.x.values()}, {"u", s.u.values()}});
    return {{"avg_grad_norm_sq", r.avg_grad_norm_sq},
            {"random_iterate_index", r.random_iterate_index},
            {"random_iterate", r.random_iterate.values()},
            {"comm_rounds", r.comm_rounds},
            {"lemma_residuals",
             {{"node_average", r.residuals.node_average},
              {"auxiliary", r.residuals.auxiliary_checked ? nlohmann::json(r.residuals.auxiliary)
                                                          : nlohmann::json(nullptr)}}},
            {"final_states", states},
            {"trace_rows", r.trace.size()}};
}

//---------------------------------------------------------------------------//
// Speedup sweeps
//---------------------------------------------------------------------------//

/// Interval choice for a sweep: a fixed value, or max_interval(...) per N.
struct IntervalChoice
{
    std::optional<std::int64_t> fixed;  // empty means "max"

    std::string label() const { return fixed ? std::to_string(*fixed) : "max"; }
};

struct SweepPlan
{
    RunConfig base;  // algorithm, option, beta, T, seed, x_init, eval cadence
    ProblemRecipe recipe;
    std::vector<std::size_t> worker_counts;
    std::vector<IntervalChoice> intervals{{1}, {std::nullopt}};
    std::size_t seed_count = 20;
    bool force = false;
};

struct SpeedupRow
{
    std::size_t num_workers = 0;
    std::string interval_label;
    std::int64_t interval = 1;
    std::uint64_t seed = 0;
    double gamma = 0.0;
    double avg_grad_norm_sq = 0.0;
    std::int64_t comm_rounds = 0;
    std::optional<double> bound_value;  // empty when the gate fails
};

struct SpeedupFit
{
    std::string interval_label;
    std::vector<std::size_t> worker_counts;
    std::vector<double> mean_avg_grad_norm_sq;
    std::vector<double> stderr_avg_grad_norm_sq;
    std::vector<std::int64_t> intervals;
    std::optional<double> exponent;  // slope of log mean vs log N
    std::optional<double> exponent_stderr;
};

struct SpeedupTable
{
    std::vector<SpeedupRow> rows;
    std::vector<SpeedupFit> fits;
};

namespace detail
{
// Least-squares slope of y on x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}
}  // namespace detail

/// Threshold problems for every (N, interval) of the plan; empty when all pass.
inline std::vector<std::string> sweep_threshold_violations(const SweepPlan& plan)
{
    std::vector<std::string> out;
    const double beta = plan.base.hp.beta;
    const std::int64_t T = plan.base.hp.horizon;
    for (std::size_t n : plan.worker_counts)
    {
        const double L = plan.recipe.build(n).certified_L;
        for (const auto& choice : plan.intervals)
        {
            if (choice.fixed)
            {
                const double need = *choice.fixed == 1 ? corollary1_threshold(n, L, beta)
                                                       : corollary2_threshold(n, L, beta);
                if (static_cast<double>(T) < need)
                    out.push_back("N=" + std::to_string(n) + " I=" + choice.label() + ": T="
                                  + std::to_string(T) + " below threshold " + format_real(need));
            }
            else
            {
                try
                {
                    max_interval(n, T, L, beta, plan.recipe.center_spread == 0.0);
                }
                catch (const ThresholdViolation& e)
                {
                    out.push_back("N=" + std::to_string(n) + " I=max: " + e.what());
                }
            }
        }
    }
    return out;
}

/*!
 * Runs gamma = sqrt(N)/sqrt(T) for every worker count, interval choice and
 * seed, and fits the exponent of the seed-averaged avg_grad_norm_sq against N.
 * Runs execute in parallel across base.threads; each run is single-threaded.
 */
inline SpeedupTable sweep_speedup(const SweepPlan& plan)
{
    if (plan.base.algorithm != Algorithm::ParallelRestarted)
        throw ConfigError("sweep_speedup: only the parallel restarted algorithm is swept");
    if (plan.worker_counts.empty() || plan.intervals.empty() || plan.seed_count == 0)
        throw ConfigError("sweep_speedup: empty worker_counts, interval list or seed count");
    if (!plan.force)
    {
        const auto bad = sweep_threshold_violations(plan);
        if (!bad.empty())
        {
            std::string msg = "threshold violations:";
            for (const auto& b : bad)
                msg += "\n  " + b;
            throw ThresholdViolation(msg);
        }
    }

    const std::int64_t T = plan.base.hp.horizon;
    const bool kappa_zero = plan.recipe.center_spread == 0.0;

    struct Job
    {
        RunConfig cfg;
        SpeedupRow row;
    };
    std::vector<Job> jobs;
    for (std::size_t n : plan.worker_counts)
    {
        const ProblemSpec problem = plan.recipe.build(n);
        for (const auto& choice : plan.intervals)
        {
            std::int64_t interval = 1;
            if (choice.fixed)
                interval = *choice.fixed;
            else
            {
                try
                {
                    interval = max_interval(n, T, problem.certified_L, plan.base.hp.beta, kappa_zero);
                }
                catch (const ThresholdViolation&)
                {
                    interval = 1;  // forced past the threshold
                }
            }
            for (std::size_t k = 0; k < plan.seed_count; ++k)
            {
                RunConfig cfg = plan.base;
                cfg.problem = problem;
                cfg.hp.gamma = std::sqrt(static_cast<double>(n)) / std::sqrt(static_cast<double>(T));
                cfg.hp.interval = interval;
                cfg.seed = plan.base.seed + k;
                cfg.threads = 1;
                cfg.check_lemmas = false;
                cfg.eval_every = std::max<std::int64_t>(T, 1);
                SpeedupRow row{n, choice.label(), interval, cfg.seed, cfg.hp.gamma, 0.0, 0, {}};
                jobs.push_back({std::move(cfg), std::move(row)});
            }
        }
    }

    WorkerPool pool(plan.base.threads);
    pool.for_each(jobs.size(), [&](std::size_t j) {
        auto& job = jobs[j];
        const RunResult r = run(job.cfg);
        job.row.avg_grad_norm_sq = r.avg_grad_norm_sq;
        job.row.comm_rounds = r.comm_rounds;
        try
        {
            job.row.bound_value = theory_bound(job.cfg).bound_value;
        }
        catch (const GateViolation&)
        {
        }
    });

    SpeedupTable table;
    for (auto& job : jobs)
        table.rows.push_back(job.row);

    for (const auto& choice : plan.intervals)
    {
        SpeedupFit fit;
        fit.interval_label = choice.label();
        std::vector<std::vector<double>> per_seed(plan.seed_count);
        for (std::size_t n : plan.worker_counts)
        {
            double sum = 0.0;
            double sum_sq = 0.0;
            std::int64_t interval = 1;
            std::size_t k = 0;
            for (const auto& row : table.rows)
            {
                if (row.num_workers != n || row.interval_label != fit.interval_label)
                    continue;
                sum += row.avg_grad_norm_sq;
                sum_sq += row.avg_grad_norm_sq * row.avg_grad_norm_sq;
                interval = row.interval;
                per_seed[k++].push_back(std::log(row.avg_grad_norm_sq));
            }
            const auto s = static_cast<double>(plan.seed_count);
            const double mean = sum / s;
            const double var = s > 1 ? std::max(0.0, (sum_sq - s * mean * mean) / (s - 1.0)) : 0.0;
            fit.worker_counts.push_back(n);
            fit.mean_avg_grad_norm_sq.push_back(mean);
            fit.stderr_avg_grad_norm_sq.push_back(std::sqrt(var / s));
            fit.intervals.push_back(interval);
        }
        std::vector<double> log_n;
        for (std::size_t n : fit.worker_counts)
            log_n.push_back(std::log(static_cast<double>(n)));
        const bool distinct = std::adjacent_find(fit.worker_counts.begin(), fit.worker_counts.end(),
                                                 std::not_equal_to<>()) != fit.worker_counts.end();
        if (fit.worker_counts.size() >= 2 && distinct)
        {
            std::vector<double> log_mean;
            for (double m : fit.mean_avg_grad_norm_sq)
                log_mean.push_back(std::log(m));
            fit.exponent = detail::ls_slope(log_n, log_mean);
            if (plan.seed_count >= 2)
            {
                double sum = 0.0;
                double sum_sq = 0.0;
                for (const auto& ys : per_seed)
                {
                    const double slope = detail::ls_slope(log_n, ys);
                    sum += slope;
                    sum_sq += slope * slope;
                }
                const auto s = static_cast<double>(plan.seed_count);
                const double mean = sum / s;
                const double var = std::max(0.0, (sum_sq - s * mean * mean) / (s - 1.0));
                fit.exponent_stderr = std::sqrt(var / s);
            }
        }
        table.fits.push_back(std::move(fit));
    }
    return table;
}

}  // namespace momentum_sync
