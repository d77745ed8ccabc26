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
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "momentum_sync/engine.hpp"

namespace momentum_sync::cli
{

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int
{
    kExitOk = 0,
    kExitValidation = 2,
    kExitDivergence = 3,
    kExitIo = 4,
};

/// Experiment file does not match the schema.
class SchemaError : public ConfigError
{
  public:
    using ConfigError::ConfigError;
};

class IoError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kOutEnv = "MOMENTUM_SYNC_OUT";
inline constexpr const char* kResultFormat = "momentum_sync.result";

struct Options
{
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> out;
    std::optional<std::size_t> threads;
};

struct SweepSection
{
    std::vector<std::size_t> worker_counts;
    std::vector<IntervalChoice> intervals;
    std::size_t seed_count = 20;
};

/// A parsed experiment file.
struct Experiment
{
    RunConfig run;
    json normalized;             // canonical form, hashed
    std::string config_hash;
    std::string problem_family;  // recipe hash, or problem hash for explicit problems
    std::optional<ProblemRecipe> recipe;
    bool sqrt_step = false;  // gamma = sqrt(N/T)
    bool compare_cleared = false;
    std::optional<fs::path> output_dir;
    std::optional<SweepSection> sweep;
};

//---------------------------------------------------------------------------//
// Schema
//---------------------------------------------------------------------------//

namespace detail
{
inline void require_object(const json& j, const std::string& where)
{
    if (!j.is_object())
        throw SchemaError(where + ": expected a JSON object");
}

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where)
{
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw SchemaError(where + ": unknown key '" + key + "'");
}

inline double number(const json& j, const std::string& key, const std::string& where)
{
    if (!j.contains(key))
        throw SchemaError(where + ": missing required key '" + key + "'");
    if (!j.at(key).is_number())
        throw SchemaError(where + "." + key + ": expected a number");
    return j.at(key).get<double>();
}

inline double number_or(const json& j, const std::string& key, const std::string& where,
                        double fallback)
{
    return j.contains(key) ? number(j, key, where) : fallback;
}

inline std::int64_t integer(const json& j, const std::string& key, const std::string& where)
{
    if (!j.contains(key))
        throw SchemaError(where + ": missing required key '" + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number_integer())
        throw SchemaError(where + "." + key + ": expected an integer");
    return v.get<std::int64_t>();
}

inline std::int64_t integer_or(const json& j, const std::string& key, const std::string& where,
                               std::int64_t fallback)
{
    return j.contains(key) ? integer(j, key, where) : fallback;
}

inline bool boolean_or(const json& j, const std::string& key, const std::string& where,
                       bool fallback)
{
    if (!j.contains(key))
        return fallback;
    if (!j.at(key).is_boolean())
        throw SchemaError(where + "." + key + ": expected true or false");
    return j.at(key).get<bool>();
}

inline std::string string_or(const json& j, const std::string& key, const std::string& where,
                             const std::string& fallback)
{
    if (!j.contains(key))
        return fallback;
    if (!j.at(key).is_string())
        throw SchemaError(where + "." + key + ": expected a string");
    return j.at(key).get<std::string>();
}

inline std::vector<double> number_list(const json& j, const std::string& where)
{
    if (!j.is_array())
        throw SchemaError(where + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : j)
    {
        if (!v.is_number())
            throw SchemaError(where + ": expected an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + path.string());
    try
    {
        return json::parse(in);
    }
    catch (const json::parse_error& e)
    {
        throw IoError(path.string() + ": malformed JSON: " + e.what());
    }
}

inline Algorithm parse_algorithm(const std::string& s)
{
    if (s == "parallel_restarted")
        return Algorithm::ParallelRestarted;
    if (s == "decentralized")
        return Algorithm::Decentralized;
    throw SchemaError("algorithm: expected 'parallel_restarted' or 'decentralized', got '" + s
                      + "'");
}

inline MomentumOption parse_option(const std::string& s)
{
    if (s == "polyak")
        return MomentumOption::Polyak;
    if (s == "nesterov")
        return MomentumOption::Nesterov;
    if (s == "cleared_momentum")
        return MomentumOption::ClearedMomentumBaseline;
    throw SchemaError("option: expected 'polyak', 'nesterov' or 'cleared_momentum', got '" + s
                      + "'");
}

inline ProblemRecipe parse_recipe(const json& j, std::size_t& workers)
{
    const std::string where = "problem";
    require_object(j, where);
    check_keys(j, {"kind", "dimension", "workers", "center_spread", "curvature_spectrum", "sigma",
                   "seed"},
               where);
    ProblemRecipe r;
    try
    {
        r.kind = problem_kind_from_string(string_or(j, "kind", where, "heterogeneous_quadratic"));
    }
    catch (const std::invalid_argument& e)
    {
        throw SchemaError(where + ".kind: " + e.what());
    }
    const auto m = integer(j, "dimension", where);
    const auto n = integer(j, "workers", where);
    if (m < 1 || n < 1)
        throw SchemaError(where + ": dimension and workers must be >= 1");
    r.dimension = static_cast<std::size_t>(m);
    workers = static_cast<std::size_t>(n);
    r.center_spread = number_or(j, "center_spread", where, 0.0);
    r.sigma = number_or(j, "sigma", where, 1.0);
    const auto seed = integer_or(j, "seed", where, 0);
    if (r.center_spread < 0.0 || r.sigma < 0.0 || seed < 0)
        throw SchemaError(where + ": center_spread, sigma and seed must be >= 0");
    r.seed = static_cast<std::uint64_t>(seed);
    if (r.kind == ProblemKind::HeterogeneousQuadratic)
    {
        r.curvature_spectrum = j.contains("curvature_spectrum")
                                   ? number_list(j.at("curvature_spectrum"),
                                                 where + ".curvature_spectrum")
                                   : std::vector<double>(r.dimension, 1.0);
        if (r.curvature_spectrum.size() != r.dimension)
            throw SchemaError(where + ".curvature_spectrum: needs 'dimension' entries");
        for (double s : r.curvature_spectrum)
            if (!(s > 0.0))
                throw SchemaError(where + ".curvature_spectrum: entries must be > 0");
    }
    else if (j.contains("curvature_spectrum"))
        throw SchemaError(where + ".curvature_spectrum: only used by the quadratic kind");
    return r;
}

inline json recipe_json(const ProblemRecipe& r)
{
    json j{{"kind", to_string(r.kind)},
           {"dimension", r.dimension},
           {"center_spread", r.center_spread},
           {"sigma", r.sigma},
           {"seed", r.seed}};
    if (r.kind == ProblemKind::HeterogeneousQuadratic)
        j["curvature_spectrum"] = r.curvature_spectrum;
    return j;
}

inline MixingMatrix parse_topology(const json& j, std::size_t n, const fs::path& base)
{
    const std::string where = "topology";
    require_object(j, where);
    try
    {
        if (j.contains("file"))
        {
            check_keys(j, {"file"}, where);
            return mixing_matrix_from_json(read_json_file(base / j.at("file").get<std::string>()));
        }
        const auto kind = string_or(j, "kind", where, "");
        if (kind == "ring")
        {
            check_keys(j, {"kind", "self_weight"}, where);
            return ring_graph(n, number_or(j, "self_weight", where, 1.0 / 3.0));
        }
        if (kind == "complete")
        {
            check_keys(j, {"kind"}, where);
            return complete_graph(n);
        }
        if (kind == "matrix")
        {
            check_keys(j, {"kind", "n", "rows"}, where);
            return mixing_matrix_from_json(j);
        }
    }
    catch (const AssumptionViolation& e)
    {
        throw SchemaError(where + ": Assumption 2 violated: " + e.what());
    }
    catch (const json::exception& e)
    {
        throw SchemaError(where + ": " + e.what());
    }
    catch (const IoError&)
    {
        throw;
    }
    catch (const std::invalid_argument& e)
    {
        throw SchemaError(where + ": " + e.what());
    }
    throw SchemaError(where + ".kind: expected 'ring', 'complete', 'matrix' or a 'file' key");
}

inline SweepSection parse_sweep(const json& j)
{
    const std::string where = "sweep";
    require_object(j, where);
    check_keys(j, {"worker_counts", "interval_list", "seed_count"}, where);
    SweepSection s;
    if (!j.contains("worker_counts") || !j.at("worker_counts").is_array()
        || j.at("worker_counts").empty())
        throw SchemaError(where + ".worker_counts: expected a nonempty array of integers");
    for (const auto& v : j.at("worker_counts"))
    {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 1)
            throw SchemaError(where + ".worker_counts: entries must be integers >= 1");
        s.worker_counts.push_back(v.get<std::size_t>());
    }
    if (j.contains("interval_list"))
    {
        if (!j.at("interval_list").is_array() || j.at("interval_list").empty())
            throw SchemaError(where + ".interval_list: expected a nonempty array");
        for (const auto& v : j.at("interval_list"))
        {
            if (v.is_string() && v.get<std::string>() == "max")
                s.intervals.push_back({std::nullopt});
            else if (v.is_number_integer() && v.get<std::int64_t>() >= 1)
                s.intervals.push_back({v.get<std::int64_t>()});
            else
                throw SchemaError(where + ".interval_list: entries must be integers >= 1 or \"max\"");
        }
    }
    else
        s.intervals = {{1}, {std::nullopt}};
    const auto seeds = integer_or(j, "seed_count", where, 20);
    if (seeds < 1)
        throw SchemaError(where + ".seed_count: must be >= 1");
    s.seed_count = static_cast<std::size_t>(seeds);
    return s;
}

inline json sweep_json(const SweepSection& s)
{
    json intervals = json::array();
    for (const auto& c : s.intervals)
        intervals.push_back(c.fixed ? json(*c.fixed) : json("max"));
    return {{"worker_counts", s.worker_counts},
            {"interval_list", intervals},
            {"seed_count", s.seed_count}};
}
}  // namespace detail

/*!
 * Parses an experiment document. Relative file references resolve against
 * base_dir; seed_override replaces the document's seed before hashing.
 */
inline Experiment parse_experiment(const json& doc, const fs::path& base_dir,
                                   std::optional<std::uint64_t> seed_override = std::nullopt)
{
    using namespace detail;
    const std::string where = "config";
    require_object(doc, where);
    check_keys(doc,
               {"algorithm", "option", "gamma", "beta", "interval", "T", "seed", "eval_every",
                "check_lemmas", "x_init", "problem", "problem_file", "topology", "output_dir",
                "compare_cleared_baseline", "sweep"},
               where);
    Experiment ex;
    RunConfig& cfg = ex.run;
    cfg.algorithm = parse_algorithm(string_or(doc, "algorithm", where, "parallel_restarted"));
    cfg.option = parse_option(string_or(doc, "option", where, "polyak"));

    cfg.hp.beta = number(doc, "beta", where);
    if (!(cfg.hp.beta >= 0.0 && cfg.hp.beta < 1.0))
        throw SchemaError("beta: must satisfy 0 <= beta < 1");
    cfg.hp.horizon = integer(doc, "T", where);
    if (cfg.hp.horizon < 1)
        throw SchemaError("T: must be >= 1");
    cfg.hp.interval = integer_or(doc, "interval", where, 1);
    if (cfg.hp.interval < 1)
        throw SchemaError("interval: must be >= 1");
    const auto seed = integer_or(doc, "seed", where, 0);
    if (seed < 0)
        throw SchemaError("seed: must be >= 0");
    cfg.seed = seed_override.value_or(static_cast<std::uint64_t>(seed));
    cfg.eval_every = integer_or(doc, "eval_every", where, 1);
    if (cfg.eval_every < 1)
        throw SchemaError("eval_every: must be >= 1");
    cfg.check_lemmas = boolean_or(doc, "check_lemmas", where, false);
    ex.compare_cleared = boolean_or(doc, "compare_cleared_baseline", where, false);

    if (doc.contains("problem") == doc.contains("problem_file"))
        throw SchemaError(where + ": give exactly one of 'problem' or 'problem_file'");
    json problem_norm;
    if (doc.contains("problem"))
    {
        std::size_t workers = 0;
        ex.recipe = parse_recipe(doc.at("problem"), workers);
        try
        {
            cfg.problem = ex.recipe->build(workers);
        }
        catch (const std::invalid_argument& e)
        {
            throw SchemaError(std::string("problem: ") + e.what());
        }
        problem_norm = recipe_json(*ex.recipe);
        ex.problem_family = content_hash(problem_norm);
        problem_norm["workers"] = workers;
    }
    else
    {
        const auto& pf = doc.at("problem_file");
        if (!pf.is_string())
            throw SchemaError("problem_file: expected a path string");
        const json pj = read_json_file(base_dir / pf.get<std::string>());
        try
        {
            cfg.problem = problem_from_json(pj);
        }
        catch (const std::exception& e)
        {
            throw SchemaError("problem_file: " + std::string(e.what()));
        }
        ex.problem_family = problem_hash(cfg.problem);
        problem_norm = {{"problem_hash", ex.problem_family}};
    }
    const std::size_t m = cfg.problem.dimension;

    if (doc.contains("x_init"))
    {
        const auto& xi = doc.at("x_init");
        if (xi.is_number())
            cfg.x_init = Vec(m, xi.get<double>());
        else
        {
            cfg.x_init = Vec(number_list(xi, "x_init"));
            if (cfg.x_init.size() != m)
                throw SchemaError("x_init: expected " + std::to_string(m) + " entries");
        }
    }

    if (doc.contains("gamma"))
    {
        const auto& g = doc.at("gamma");
        if (g.is_string() && g.get<std::string>() == "sqrt_n_over_t")
            ex.sqrt_step = true;
        else if (g.is_number())
            cfg.hp.gamma = g.get<double>();
        else
            throw SchemaError("gamma: expected a number or \"sqrt_n_over_t\"");
    }
    else
        ex.sqrt_step = true;
    if (ex.sqrt_step)
        cfg.hp.gamma = std::sqrt(static_cast<double>(cfg.problem.num_workers))
                       / std::sqrt(static_cast<double>(cfg.hp.horizon));
    if (!(cfg.hp.gamma > 0.0) || !std::isfinite(cfg.hp.gamma))
        throw SchemaError("gamma: must be finite and > 0");

    if (doc.contains("topology"))
    {
        if (cfg.algorithm != Algorithm::Decentralized)
            throw SchemaError("topology: only used by the decentralized algorithm");
        cfg.topology = parse_topology(doc.at("topology"), cfg.problem.num_workers, base_dir);
    }
    else if (cfg.algorithm == Algorithm::Decentralized)
        throw SchemaError("topology: required by the decentralized algorithm");

    if (doc.contains("output_dir"))
    {
        if (!doc.at("output_dir").is_string())
            throw SchemaError("output_dir: expected a path string");
        ex.output_dir = fs::path(doc.at("output_dir").get<std::string>());
    }
    if (doc.contains("sweep"))
    {
        ex.sweep = parse_sweep(doc.at("sweep"));
        if (!ex.recipe)
            throw SchemaError("sweep: needs an inline 'problem' recipe to rebuild it per N");
        if (!ex.sqrt_step)
            throw SchemaError("sweep: runs use gamma = sqrt(N/T); set gamma to \"sqrt_n_over_t\"");
        if (cfg.algorithm != Algorithm::ParallelRestarted)
            throw SchemaError("sweep: only the parallel restarted algorithm is swept");
    }
    if (ex.compare_cleared && (cfg.algorithm != Algorithm::ParallelRestarted
                               || cfg.option == MomentumOption::ClearedMomentumBaseline))
        throw SchemaError("compare_cleared_baseline: needs a parallel restarted momentum run");

    try
    {
        cfg.validate();
    }
    catch (const ConfigError& e)
    {
        throw SchemaError(e.what());
    }

    ex.normalized = {{"algorithm", to_string(cfg.algorithm)},
                     {"option", to_string(cfg.option)},
                     {"gamma", ex.sqrt_step ? json("sqrt_n_over_t") : json(cfg.hp.gamma)},
                     {"beta", cfg.hp.beta},
                     {"interval", cfg.hp.interval},
                     {"T", cfg.hp.horizon},
                     {"seed", cfg.seed},
                     {"eval_every", cfg.eval_every},
                     {"check_lemmas", cfg.check_lemmas},
                     {"x_init", cfg.initial_point().values()},
                     {"problem", problem_norm},
                     {"topology", cfg.topology ? json(cfg.topology->W.rows()) : json(nullptr)},
                     {"compare_cleared_baseline", ex.compare_cleared},
                     {"sweep", ex.sweep ? detail::sweep_json(*ex.sweep) : json(nullptr)}};
    ex.config_hash = content_hash(ex.normalized);
    return ex;
}

inline Experiment load_experiment(const fs::path& path,
                                  std::optional<std::uint64_t> seed_override = std::nullopt)
{
    return parse_experiment(detail::read_json_file(path), path.parent_path(), seed_override);
}

/// --out, then the environment variable, then the file's output_dir, then "out".
inline fs::path resolve_output_dir(const Options& opt, const Experiment& ex)
{
    if (opt.out)
        return *opt.out;
    if (const char* env = std::getenv(kOutEnv); env && *env)
        return env;
    if (ex.output_dir)
        return *ex.output_dir;
    return "out";
}

//---------------------------------------------------------------------------//
// Commands
//---------------------------------------------------------------------------//

namespace detail
{
inline void write_file(const fs::path& path, const std::string& content)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot write " + path.string());
    os << content;
    os.flush();
    if (!os)
        throw IoError("write failed for " + path.string());
}

inline void make_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

inline std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

inline GateReport gate_for(const RunConfig& cfg)
{
    if (cfg.algorithm == Algorithm::Decentralized)
        return gate_decentralized(cfg.hp, cfg.problem.certified_L, cfg.topology->rho);
    return cfg.option == MomentumOption::Nesterov ? gate_nesterov(cfg.hp, cfg.problem.certified_L)
                                                  : gate_polyak(cfg.hp, cfg.problem.certified_L);
}

inline std::string gamma_gate_text(const RunConfig& cfg)
{
    if (cfg.algorithm == Algorithm::Decentralized)
        return "gamma <= min{(1-beta)^2(1-sqrt(rho))^2/(6L), (1-beta)(1-sqrt(rho))/(4L)}";
    return cfg.option == MomentumOption::Nesterov ? "gamma <= (1-beta)^2/(L(1+beta^3))"
                                                  : "gamma <= (1-beta)^2/((1+beta)L)";
}

inline const char* mark(bool ok) { return ok ? "[pass]" : "[FAIL]"; }

// Writes the theory gate lines; returns true when every gate holds.
inline bool report_gates(const Experiment& ex, std::ostream& out)
{
    const RunConfig& cfg = ex.run;
    const double L = cfg.problem.certified_L;
    const auto n = cfg.problem.num_workers;
    const auto T = static_cast<double>(cfg.hp.horizon);
    const auto gate = gate_for(cfg);
    const bool gamma_ok = !::momentum_sync::detail::exceeds(cfg.hp.gamma, gate.gamma_max);
    bool ok = gamma_ok;
    out << mark(gamma_ok) << ' ' << gamma_gate_text(cfg) << " = " << fmt(gate.gamma_max)
        << "  (gamma = " << fmt(cfg.hp.gamma) << ")\n";
    if (cfg.algorithm == Algorithm::Decentralized)
    {
        out << "[pass] Assumption 2: symmetric doubly stochastic, rho = " << fmt(cfg.topology->rho)
            << "\n";
        const double need = decentralized_threshold(n, L, cfg.hp.beta, cfg.topology->rho);
        out << "[info] linear-speedup threshold T >= " << fmt(need) << ": "
            << (T >= need ? "met" : "not met") << "\n";
    }
    else
    {
        const bool interval_ok = !::momentum_sync::detail::exceeds(
            static_cast<double>(cfg.hp.interval), gate.interval_max);
        ok = ok && interval_ok;
        out << mark(interval_ok) << " interval <= (1-beta)/(6 L gamma) = "
            << fmt(gate.interval_max) << "  (I = " << cfg.hp.interval << ")\n";
        if (cfg.option == MomentumOption::ClearedMomentumBaseline)
            out << "[info] cleared-momentum baseline: gates of the heavy-ball rule shown; the "
                   "bound is not proven for this baseline\n";
        const double need = cfg.hp.interval == 1 ? corollary1_threshold(n, L, cfg.hp.beta)
                                                 : corollary2_threshold(n, L, cfg.hp.beta);
        out << "[info] linear-speedup threshold T >= " << fmt(need) << ": "
            << (T >= need ? "met" : "not met") << "\n";
    }
    return ok;
}

// No rate bound is stated for the cleared-momentum baseline.
inline std::optional<double> bound_value(const RunConfig& cfg)
{
    if (cfg.option == MomentumOption::ClearedMomentumBaseline)
        return std::nullopt;
    try
    {
        return theory_bound(cfg).bound_value;
    }
    catch (const GateViolation&)
    {
        return std::nullopt;
    }
}

inline json bound_json(const Experiment& ex)
{
    json j{{"config_hash", ex.config_hash}, {"gate", to_json(gate_for(ex.run))}};
    j["bound"] = nullptr;
    if (bound_value(ex.run))
        j["bound"] = to_json(theory_bound(ex.run));
    j["initial_gap"] = initial_gap(ex.run);
    j["certified_L"] = ex.run.problem.certified_L;
    j["certified_kappa"] = ex.run.problem.certified_kappa;
    j["sigma"] = ex.run.problem.noise_sigma;
    return j;
}

inline std::string trace_text(const Trace& trace, const Experiment& ex)
{
    std::ostringstream os;
    write_trace_csv(os, trace, ex.config_hash, problem_hash(ex.run.problem));
    return os.str();
}

inline json result_header(const Experiment& ex, const RunConfig& cfg, const std::string& series,
                          const std::string& trace_file)
{
    const auto b = bound_value(cfg);
    return {{"format", kResultFormat},
            {"version", kLedgerVersion},
            {"config_hash", ex.config_hash},
            {"problem_hash", problem_hash(cfg.problem)},
            {"problem_family", ex.problem_family},
            {"seed", cfg.seed},
            {"series", series},
            {"algorithm", to_string(cfg.algorithm)},
            {"option", to_string(cfg.option)},
            {"num_workers", cfg.problem.num_workers},
            {"interval", cfg.hp.interval},
            {"gamma", cfg.hp.gamma},
            {"beta", cfg.hp.beta},
            {"T", cfg.hp.horizon},
            {"trace_file", trace_file},
            {"bound_value", b ? json(*b) : json(nullptr)},
            {"config", ex.normalized}};
}

// Runs one configuration and writes its trace and result; returns the exit code.
inline int run_series(const Experiment& ex, const RunConfig& cfg, const std::string& series,
                      const fs::path& dir, const std::string& suffix, std::ostream& out,
                      std::ostream& err)
{
    const std::string trace_file = "trace" + suffix + ".csv";
    const std::string result_file = "result" + suffix + ".json";
    json result = result_header(ex, cfg, series, trace_file);
    try
    {
        const RunResult r = run(cfg);
        write_file(dir / trace_file, trace_text(r.trace, ex));
        result["status"] = "ok";
        result["divergence_iteration"] = nullptr;
        result["result"] = to_json(r);
        write_file(dir / result_file, result.dump(2) + "\n");
        out << series << ": avg_grad_norm_sq = " << format_real(r.avg_grad_norm_sq)
            << ", comm_rounds = " << r.comm_rounds << ", final objective = "
            << format_real(r.trace.back().objective) << "\n";
        return kExitOk;
    }
    catch (const DivergenceError& e)
    {
        write_file(dir / trace_file, trace_text(e.partial_trace(), ex));
        result["status"] = "diverged";
        result["divergence_iteration"] = e.iteration();
        result["result"] = nullptr;
        write_file(dir / result_file, result.dump(2) + "\n");
        err << series << ": diverged at iteration " << e.iteration() << "\n";
        return kExitDivergence;
    }
}
}  // namespace detail

/// Prints every gate with its threshold; nonzero when any gate fails.
inline int cmd_validate(const fs::path& config, const Options& opt, std::ostream& out,
                        std::ostream& err)
{
    const Experiment ex = load_experiment(config, opt.seed);
    const RunConfig& cfg = ex.run;
    out << "config " << config.string() << "  hash=" << ex.config_hash << "\n";
    out << to_string(cfg.algorithm) << " / " << to_string(cfg.option)
        << ": N = " << cfg.problem.num_workers << ", T = " << cfg.hp.horizon
        << ", gamma = " << detail::fmt(cfg.hp.gamma) << ", beta = " << cfg.hp.beta
        << ", I = " << cfg.hp.interval << ", L = " << detail::fmt(cfg.problem.certified_L)
        << ", kappa = " << detail::fmt(cfg.problem.certified_kappa) << "\n";
    bool ok = true;
    if (ex.sweep)
    {
        SweepPlan plan;
        plan.base = cfg;
        plan.recipe = *ex.recipe;
        plan.worker_counts = ex.sweep->worker_counts;
        plan.intervals = ex.sweep->intervals;
        for (const auto& v : sweep_threshold_violations(plan))
        {
            out << "[FAIL] " << v << "\n";
            ok = false;
        }
        if (ok)
            out << "[pass] sweep thresholds for every N and interval\n";
    }
    else
        ok = detail::report_gates(ex, out);
    if (!ok)
        err << "validation failed\n";
    return ok ? kExitOk : kExitValidation;
}

/// Runs the experiment and writes trace.csv, result.json and bound.json.
inline int cmd_run(const fs::path& config, const Options& opt, std::ostream& out,
                   std::ostream& err)
{
    Experiment ex = load_experiment(config, opt.seed);
    ex.run.threads = opt.threads.value_or(1);
    std::ostringstream gates;
    if (!detail::report_gates(ex, gates))
    {
        if (!opt.force)
        {
            err << gates.str() << "gate check failed; rerun with --force to run anyway\n";
            return kExitValidation;
        }
        err << "warning: --force: running outside the theory gates\n" << gates.str();
    }
    const fs::path dir = resolve_output_dir(opt, ex);
    detail::make_dir(dir);
    detail::write_file(dir / "bound.json", detail::bound_json(ex).dump(2) + "\n");
    int code = detail::run_series(ex, ex.run, to_string(ex.run.option), dir, "", out, err);
    if (ex.compare_cleared)
    {
        RunConfig cleared = ex.run;
        cleared.option = MomentumOption::ClearedMomentumBaseline;
        code = std::max(code, detail::run_series(ex, cleared, "cleared_momentum", dir, "_cleared",
                                                 out, err));
    }
    out << "wrote " << dir.string() << "\n";
    return code;
}

/// Speedup sweep; writes speedup.csv and speedup_fit.json.
inline int cmd_sweep(const fs::path& config, const Options& opt, std::ostream& out,
                     std::ostream& err)
{
    const Experiment ex = load_experiment(config, opt.seed);
    if (!ex.sweep)
        throw SchemaError("sweep: the config has no 'sweep' section");
    SweepPlan plan;
    plan.base = ex.run;
    plan.base.threads = opt.threads.value_or(std::max(1u, std::thread::hardware_concurrency()));
    plan.recipe = *ex.recipe;
    plan.worker_counts = ex.sweep->worker_counts;
    plan.intervals = ex.sweep->intervals;
    plan.seed_count = ex.sweep->seed_count;
    plan.force = opt.force;
    const auto violations = sweep_threshold_violations(plan);
    if (!violations.empty())
    {
        for (const auto& v : violations)
            err << (opt.force ? "warning: " : "") << v << "\n";
        if (!opt.force)
        {
            err << "threshold check failed; rerun with --force to sweep anyway\n";
            return kExitValidation;
        }
    }
    SpeedupTable table;
    try
    {
        table = sweep_speedup(plan);
    }
    catch (const DivergenceError& e)
    {
        err << "sweep run diverged at iteration " << e.iteration() << "\n";
        return kExitDivergence;
    }

    const fs::path dir = resolve_output_dir(opt, ex);
    detail::make_dir(dir);
    std::ostringstream csv;
    csv << "# momentum_sync speedup v" << kLedgerVersion << " config_hash=" << ex.config_hash
        << " problem_family=" << ex.problem_family << "\n";
    csv << "num_workers,interval_label,interval,seed,gamma,avg_grad_norm_sq,comm_rounds,bound_value\n";
    for (const auto& r : table.rows)
        csv << r.num_workers << ',' << r.interval_label << ',' << r.interval << ',' << r.seed << ','
            << format_real(r.gamma) << ',' << format_real(r.avg_grad_norm_sq) << ','
            << r.comm_rounds << ',' << (r.bound_value ? format_real(*r.bound_value) : "") << '\n';
    detail::write_file(dir / "speedup.csv", csv.str());

    json fits = json::array();
    for (const auto& f : table.fits)
    {
        fits.push_back({{"interval_label", f.interval_label},
                        {"worker_counts", f.worker_counts},
                        {"intervals", f.intervals},
                        {"mean_avg_grad_norm_sq", f.mean_avg_grad_norm_sq},
                        {"stderr_avg_grad_norm_sq", f.stderr_avg_grad_norm_sq},
                        {"exponent", f.exponent ? json(*f.exponent) : json(nullptr)},
                        {"exponent_stderr",
                         f.exponent_stderr ? json(*f.exponent_stderr) : json(nullptr)},
                        {"exponent_status",
                         f.exponent ? "fitted"
                                    : "undefined: needs at least two distinct worker counts"}});
        out << "I=" << f.interval_label << ": exponent = "
            << (f.exponent ? format_real(*f.exponent) : std::string("undefined")) << "\n";
    }
    const json summary{{"format", "momentum_sync.speedup_fit"},
                       {"version", kLedgerVersion},
                       {"config_hash", ex.config_hash},
                       {"problem_family", ex.problem_family},
                       {"T", ex.run.hp.horizon},
                       {"beta", ex.run.hp.beta},
                       {"seed_count", plan.seed_count},
                       {"fits", fits},
                       {"config", ex.normalized}};
    detail::write_file(dir / "speedup_fit.json", summary.dump(2) + "\n");
    out << "wrote " << dir.string() << "\n";
    return kExitOk;
}

namespace detail
{
struct LoadedRun
{
    json result;
    std::string series;
    Trace trace;
};

inline Trace read_trace(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("missing trace " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("# momentum_sync trace", 0) != 0)
        throw IoError(path.string() + ": missing trace version line");
    if (!std::getline(in, line) || line != kTraceHeader)
        throw IoError(path.string() + ": unexpected trace header");
    Trace trace;
    std::size_t lineno = 2;
    while (std::getline(in, line))
    {
        ++lineno;
        std::istringstream row(line);
        TraceRow r;
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ','))
            cells.push_back(cell);
        try
        {
            if (cells.size() != 6)
                throw std::invalid_argument("column count");
            r.t = std::stoll(cells[0]);
            r.grad_norm_sq = std::stod(cells[1]);
            r.objective = std::stod(cells[2]);
            r.consensus_x = std::stod(cells[3]);
            r.consensus_u = std::stod(cells[4]);
            r.comm_rounds = std::stoll(cells[5]);
        }
        catch (const std::exception&)
        {
            throw IoError(path.string() + ": corrupt row at line " + std::to_string(lineno));
        }
        trace.push_back(r);
    }
    return trace;
}

inline std::string csv_safe(std::string s)
{
    std::replace(s.begin(), s.end(), ',', ';');
    return s;
}
}  // namespace detail

/*!
 * Collects run ledgers under dir (result*.json, any depth) and sweep
 * summaries (speedup_fit.json), and writes long-form series CSVs
 * (series, num_workers, interval, x, y) into dir/report or --out.
 */
inline int cmd_report(const fs::path& dir, const Options& opt, std::ostream& out,
                      std::ostream& err)
{
    if (!fs::is_directory(dir))
        throw IoError("report: " + dir.string() + " is not a directory");
    std::vector<fs::path> results;
    std::vector<fs::path> sweeps;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
    {
        if (!entry.is_regular_file())
            continue;
        const auto name = entry.path().filename().string();
        if (name.rfind("result", 0) == 0 && entry.path().extension() == ".json")
            results.push_back(entry.path());
        else if (name == "speedup_fit.json")
            sweeps.push_back(entry.path());
    }
    std::sort(results.begin(), results.end());
    std::sort(sweeps.begin(), sweeps.end());
    if (results.empty() && sweeps.empty())
    {
        err << "report: no ledgers found in " << dir.string() << " (0 ledgers)\n";
        return kExitIo;
    }

    std::vector<std::string> problems;
    std::vector<detail::LoadedRun> runs;
    std::vector<json> sweep_docs;
    for (const auto& path : results)
    {
        try
        {
            detail::LoadedRun run;
            run.result = detail::read_json_file(path);
            if (run.result.value("format", "") != kResultFormat)
                throw IoError(path.string() + ": not a run ledger");
            const fs::path rel = fs::relative(path.parent_path(), dir);
            const std::string prefix = rel == "." ? "" : rel.generic_string() + "/";
            run.series = detail::csv_safe(prefix + run.result.at("series").get<std::string>());
            run.trace = detail::read_trace(path.parent_path()
                                           / run.result.at("trace_file").get<std::string>());
            runs.push_back(std::move(run));
        }
        catch (const IoError& e)
        {
            problems.push_back(e.what());
        }
        catch (const json::exception& e)
        {
            problems.push_back(path.string() + ": corrupt ledger: " + e.what());
        }
    }
    for (const auto& path : sweeps)
    {
        try
        {
            json doc = detail::read_json_file(path);
            doc.at("fits").at(0).at("worker_counts");
            doc["__path"] = fs::relative(path.parent_path(), dir).generic_string();
            sweep_docs.push_back(std::move(doc));
        }
        catch (const IoError& e)
        {
            problems.push_back(e.what());
        }
        catch (const json::exception& e)
        {
            problems.push_back(path.string() + ": corrupt sweep summary: " + e.what());
        }
    }
    if (!problems.empty())
    {
        for (const auto& p : problems)
            err << "report: " << p << "\n";
        return kExitIo;
    }

    std::set<std::string> families;
    std::set<std::string> hashes;
    for (const auto& r : runs)
    {
        families.insert(r.result.at("problem_family").get<std::string>());
        hashes.insert(r.result.at("config_hash").get<std::string>());
    }
    for (const auto& s : sweep_docs)
    {
        families.insert(s.at("problem_family").get<std::string>());
        hashes.insert(s.at("config_hash").get<std::string>());
    }
    if (families.size() > 1)
    {
        err << "report: refusing to merge ledgers of different problems:";
        for (const auto& f : families)
            err << ' ' << f;
        err << "\n";
        return kExitValidation;
    }

    std::string hash_list;
    for (const auto& h : hashes)
        hash_list += (hash_list.empty() ? "" : ";") + h;
    const std::string head = "# momentum_sync report v" + std::to_string(kLedgerVersion)
                             + " config_hashes=" + hash_list
                             + " problem_family=" + *families.begin()
                             + "\nseries,num_workers,interval,x,y\n";
    std::string by_iter = head;
    std::string by_comm = head;
    std::string overlay = head;
    std::string speedup = head;
    for (const auto& r : runs)
    {
        const std::string key = r.series + ',' + std::to_string(r.result.at("num_workers").get<std::size_t>())
                                + ',' + std::to_string(r.result.at("interval").get<std::int64_t>())
                                + ',';
        const auto& bound = r.result.at("bound_value");
        for (const auto& row : r.trace)
        {
            by_iter += key + std::to_string(row.t) + ',' + format_real(row.grad_norm_sq) + '\n';
            by_comm += key + std::to_string(row.comm_rounds) + ',' + format_real(row.grad_norm_sq)
                       + '\n';
            if (bound.is_number())
                overlay += key + std::to_string(row.t) + ',' + format_real(bound.get<double>())
                           + '\n';
        }
    }
    for (const auto& s : sweep_docs)
        for (const auto& f : s.at("fits"))
        {
            const auto ns = f.at("worker_counts").get<std::vector<std::size_t>>();
            const auto is = f.at("intervals").get<std::vector<std::int64_t>>();
            const auto ys = f.at("mean_avg_grad_norm_sq").get<std::vector<double>>();
            const std::string series = detail::csv_safe(
                s.at("__path").get<std::string>() + "/I=" + f.at("interval_label").get<std::string>());
            for (std::size_t k = 0; k < ns.size(); ++k)
                speedup += series + ',' + std::to_string(ns[k]) + ',' + std::to_string(is[k]) + ','
                           + std::to_string(ns[k]) + ',' + format_real(ys[k]) + '\n';
        }

    const fs::path target = opt.out.value_or(dir / "report");
    detail::make_dir(target);
    std::size_t files = 0;
    if (!runs.empty())
    {
        detail::write_file(target / "grad_norm_vs_iteration.csv", by_iter);
        detail::write_file(target / "grad_norm_vs_comm_rounds.csv", by_comm);
        detail::write_file(target / "bound_overlay.csv", overlay);
        files += 3;
    }
    if (!sweep_docs.empty())
    {
        detail::write_file(target / "speedup_vs_workers.csv", speedup);
        ++files;
    }
    out << "report: " << runs.size() << " run ledger(s), " << sweep_docs.size()
        << " sweep summary(ies) -> " << files << " file(s) in " << target.string() << "\n";
    return kExitOk;
}

/// Maps the error families onto the stable exit codes.
inline int guarded(const std::function<int()>& fn, std::ostream& err)
{
    try
    {
        return fn();
    }
    catch (const IoError& e)
    {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    catch (const fs::filesystem_error& e)
    {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
    catch (const DivergenceError& e)
    {
        err << "error: " << e.what() << "\n";
        return kExitDivergence;
    }
    catch (const std::invalid_argument& e)
    {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    catch (const std::out_of_range& e)
    {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    catch (const json::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
}

}  // namespace momentum_sync::cli
