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

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include "momentum_sync/cli.hpp"

namespace ms = momentum_sync;
namespace cli = momentum_sync::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace
{
class CliTest : public ::testing::Test
{
  protected:
    void SetUp() override
    {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / "momentum_sync_cli_test" / info->name();
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        ::unsetenv(cli::kOutEnv);
    }

    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const json& j, const std::string& name = "config.json")
    {
        const fs::path p = dir_ / name;
        std::ofstream(p) << j.dump(2);
        return p;
    }

    static json base_config()
    {
        return {{"algorithm", "parallel_restarted"},
                {"option", "polyak"},
                {"gamma", 0.02},
                {"beta", 0.5},
                {"interval", 2},
                {"T", 300},
                {"seed", 4},
                {"eval_every", 10},
                {"x_init", 1.0},
                {"problem",
                 {{"kind", "heterogeneous_quadratic"},
                  {"dimension", 3},
                  {"workers", 3},
                  {"center_spread", 1.0},
                  {"sigma", 0.5},
                  {"seed", 2}}}};
    }

    int invoke(int (*cmd)(const fs::path&, const cli::Options&, std::ostream&, std::ostream&),
               const fs::path& path, cli::Options opt = {})
    {
        out_.str("");
        err_.str("");
        return cli::guarded([&] { return cmd(path, opt, out_, err_); }, err_);
    }

    cli::Options to(const fs::path& out) const
    {
        cli::Options o;
        o.out = out;
        return o;
    }

    static std::string slurp(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    fs::path dir_;
    std::ostringstream out_;
    std::ostringstream err_;
};

std::string shell_quote(const std::string& s) { return "'" + s + "'"; }

int run_binary(const std::string& args)
{
    const std::string cmd = shell_quote(MOMENTUM_SYNC_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
}  // namespace

TEST_F(CliTest, SchemaRejectsBetaOfOne)
{
    auto j = base_config();
    j["beta"] = 1.0;
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
    EXPECT_EQ(invoke(cli::cmd_validate, write_config(j)), cli::kExitValidation);
    EXPECT_NE(err_.str().find("beta"), std::string::npos);
}

TEST_F(CliTest, SchemaRejectsUnknownAndMissingKeys)
{
    auto j = base_config();
    j["learning_rate"] = 0.1;
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
    j = base_config();
    j["problem"]["colour"] = "red";
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
    j = base_config();
    j.erase("T");
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
    j = base_config();
    j["problem_file"] = "p.json";
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
    j = base_config();
    j["topology"] = {{"kind", "complete"}};
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
    j = base_config();
    j["x_init"] = {1, 2};
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
    j = base_config();
    j["interval"] = 1.5;
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
}

TEST_F(CliTest, IdentityTopologyNamesAssumptionViolation)
{
    auto j = base_config();
    j["algorithm"] = "decentralized";
    j.erase("interval");
    j["topology"] = {{"kind", "matrix"}, {"n", 3}, {"rows", {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}};
    EXPECT_EQ(invoke(cli::cmd_validate, write_config(j)), cli::kExitValidation);
    EXPECT_NE(err_.str().find("Assumption 2"), std::string::npos) << err_.str();
    EXPECT_NE(err_.str().find("is not < 1"), std::string::npos) << err_.str();
}

TEST_F(CliTest, ValidateSqrtStepAboveThresholdPasses)
{
    auto j = base_config();
    j["gamma"] = "sqrt_n_over_t";
    j["interval"] = 1;
    j["T"] = 1000;  // 36 L^2 N/(1-beta)^2 = 432
    const auto ex = cli::parse_experiment(j, dir_);
    EXPECT_DOUBLE_EQ(ex.run.hp.gamma, std::sqrt(3.0 / 1000.0));
    EXPECT_EQ(invoke(cli::cmd_validate, write_config(j)), cli::kExitOk);
    EXPECT_EQ(out_.str().find("[FAIL]"), std::string::npos) << out_.str();
    EXPECT_NE(out_.str().find("threshold T >= 432: met"), std::string::npos) << out_.str();
}

TEST_F(CliTest, ValidateReportsFailedGate)
{
    auto j = base_config();
    j["gamma"] = 0.3;
    EXPECT_EQ(invoke(cli::cmd_validate, write_config(j)), cli::kExitValidation);
    EXPECT_NE(out_.str().find("[FAIL] gamma <= (1-beta)^2/((1+beta)L)"), std::string::npos);
    EXPECT_NE(out_.str().find("[FAIL] interval <= (1-beta)/(6 L gamma)"), std::string::npos);
}

TEST_F(CliTest, RunIsByteReproducible)
{
    const auto cfg = write_config(base_config());
    ASSERT_EQ(invoke(cli::cmd_run, cfg, to(dir_ / "a")), cli::kExitOk);
    ASSERT_EQ(invoke(cli::cmd_run, cfg, to(dir_ / "b")), cli::kExitOk);
    auto threaded = to(dir_ / "c");
    threaded.threads = 3;
    ASSERT_EQ(invoke(cli::cmd_run, cfg, threaded), cli::kExitOk);
    EXPECT_EQ(slurp(dir_ / "a" / "trace.csv"), slurp(dir_ / "b" / "trace.csv"));
    EXPECT_EQ(slurp(dir_ / "a" / "trace.csv"), slurp(dir_ / "c" / "trace.csv"));
    EXPECT_EQ(slurp(dir_ / "a" / "result.json"), slurp(dir_ / "c" / "result.json"));
}

TEST_F(CliTest, RunEmbedsHashAndSeedInEveryFile)
{
    const auto cfg = write_config(base_config());
    ASSERT_EQ(invoke(cli::cmd_run, cfg, to(dir_ / "o")), cli::kExitOk);
    const auto ex = cli::load_experiment(cfg);
    for (const char* f : {"trace.csv", "result.json", "bound.json"})
        EXPECT_NE(slurp(dir_ / "o" / f).find(ex.config_hash), std::string::npos) << f;
    const auto result = json::parse(slurp(dir_ / "o" / "result.json"));
    EXPECT_EQ(result.at("seed").get<std::uint64_t>(), 4u);
    EXPECT_EQ(result.at("status"), "ok");
    EXPECT_EQ(result.at("result").at("comm_rounds").get<int>(), 299 / 2);

    auto opt = to(dir_ / "s");
    opt.seed = 99;
    ASSERT_EQ(invoke(cli::cmd_run, cfg, opt), cli::kExitOk);
    const auto reseeded = json::parse(slurp(dir_ / "s" / "result.json"));
    EXPECT_EQ(reseeded.at("seed").get<std::uint64_t>(), 99u);
    EXPECT_NE(reseeded.at("config_hash"), result.at("config_hash"));
}

TEST_F(CliTest, NoiselessGradientDescentConverges)
{
    auto j = base_config();
    j["gamma"] = 1.0;
    j["beta"] = 0.0;
    j["interval"] = 1;
    j["T"] = 200;
    j["eval_every"] = 1;
    j["problem"] = {{"kind", "quadratic"},
                    {"dimension", 2},
                    {"workers", 1},
                    {"curvature_spectrum", {0.5, 1.0}},
                    {"sigma", 0.0}};
    auto opt = to(dir_ / "o");
    opt.force = true;  // gamma = 1/L sits above the interval gate 1/(6 L gamma)
    ASSERT_EQ(invoke(cli::cmd_run, write_config(j), opt), cli::kExitOk);
    std::istringstream csv(slurp(dir_ / "o" / "trace.csv"));
    std::string line;
    std::string last;
    while (std::getline(csv, line))
        last = line;
    const auto comma = last.find(',');
    EXPECT_EQ(last.substr(0, comma), "199");
    EXPECT_LE(std::stod(last.substr(comma + 1)), 1e-20);
}

TEST_F(CliTest, GateFailureNeedsForce)
{
    auto j = base_config();
    j["gamma"] = 0.3;
    const auto cfg = write_config(j);
    EXPECT_EQ(invoke(cli::cmd_run, cfg, to(dir_ / "o")), cli::kExitValidation);
    EXPECT_FALSE(fs::exists(dir_ / "o" / "trace.csv"));
    auto opt = to(dir_ / "o");
    opt.force = true;
    EXPECT_EQ(invoke(cli::cmd_run, cfg, opt), cli::kExitOk);
    EXPECT_NE(err_.str().find("warning: --force"), std::string::npos);
    EXPECT_TRUE(json::parse(slurp(dir_ / "o" / "bound.json")).at("bound").is_null());
}

TEST_F(CliTest, DivergenceRecordedWithIteration)
{
    auto j = base_config();
    j["gamma"] = 40.0;
    j["beta"] = 0.9;
    auto opt = to(dir_ / "o");
    opt.force = true;
    EXPECT_EQ(invoke(cli::cmd_run, write_config(j), opt), cli::kExitDivergence);
    const auto result = json::parse(slurp(dir_ / "o" / "result.json"));
    EXPECT_EQ(result.at("status"), "diverged");
    EXPECT_GT(result.at("divergence_iteration").get<int>(), 0);
    EXPECT_TRUE(fs::exists(dir_ / "o" / "trace.csv"));
}

TEST_F(CliTest, ClearedBaselineComparisonEmitsBothTraces)
{
    auto j = base_config();
    j["compare_cleared_baseline"] = true;
    ASSERT_EQ(invoke(cli::cmd_run, write_config(j), to(dir_ / "o")), cli::kExitOk);
    for (const char* f : {"trace.csv", "trace_cleared.csv", "result.json", "result_cleared.json"})
        EXPECT_TRUE(fs::exists(dir_ / "o" / f)) << f;
    const auto cleared = json::parse(slurp(dir_ / "o" / "result_cleared.json"));
    EXPECT_EQ(cleared.at("option"), "cleared_momentum");
    EXPECT_TRUE(cleared.at("bound_value").is_null());
    EXPECT_NE(slurp(dir_ / "o" / "trace.csv"), slurp(dir_ / "o" / "trace_cleared.csv"));
}

TEST_F(CliTest, OutputDirectoryPrecedence)
{
    auto j = base_config();
    j["output_dir"] = (dir_ / "from_config").string();
    const auto cfg = write_config(j);
    const auto ex = cli::load_experiment(cfg);
    EXPECT_EQ(cli::resolve_output_dir({}, ex), dir_ / "from_config");
    ::setenv(cli::kOutEnv, (dir_ / "from_env").c_str(), 1);
    EXPECT_EQ(cli::resolve_output_dir({}, ex), dir_ / "from_env");
    EXPECT_EQ(cli::resolve_output_dir(to(dir_ / "flag"), ex), dir_ / "flag");
    ::unsetenv(cli::kOutEnv);
    j.erase("output_dir");
    EXPECT_EQ(cli::resolve_output_dir({}, cli::parse_experiment(j, dir_)), fs::path("out"));
}

TEST_F(CliTest, ProblemAndTopologyFilesResolveRelativeToConfig)
{
    const auto spec = ms::make_quadratic(2, 4, 1.0, {0.5, 1.0}, 0.2, 8);
    std::ofstream(dir_ / "problem.json") << ms::to_json(spec).dump();
    std::ofstream(dir_ / "ring.json") << ms::to_json(ms::ring_graph(4, 0.5)).dump();
    json j = base_config();
    j.erase("problem");
    j.erase("interval");
    j["problem_file"] = "problem.json";
    j["algorithm"] = "decentralized";
    j["gamma"] = 0.001;
    j["topology"] = {{"file", "ring.json"}};
    const auto ex = cli::load_experiment(write_config(j));
    EXPECT_EQ(ex.run.problem.centers, spec.centers);
    EXPECT_NEAR(ex.run.topology->rho, 0.25, 1e-12);
    EXPECT_EQ(ex.problem_family, ms::problem_hash(spec));
}

TEST_F(CliTest, SweepSingleWorkerCountHasUndefinedExponent)
{
    auto j = base_config();
    j["gamma"] = "sqrt_n_over_t";
    j["T"] = 2000;
    j["problem"]["center_spread"] = 0.0;
    j["sweep"] = {{"worker_counts", {1}}, {"interval_list", {1, 3, 7}}, {"seed_count", 2}};
    ASSERT_EQ(invoke(cli::cmd_sweep, write_config(j), to(dir_ / "o")), cli::kExitOk) << err_.str();
    const auto fit = json::parse(slurp(dir_ / "o" / "speedup_fit.json"));
    for (const auto& f : fit.at("fits"))
    {
        EXPECT_TRUE(f.at("exponent").is_null());
        EXPECT_NE(f.at("exponent_status").get<std::string>().find("undefined"), std::string::npos);
    }
    std::istringstream csv(slurp(dir_ / "o" / "speedup.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_NE(line.find(fit.at("config_hash").get<std::string>()), std::string::npos);
    std::getline(csv, line);
    EXPECT_EQ(line, "num_workers,interval_label,interval,seed,gamma,avg_grad_norm_sq,comm_rounds,"
                    "bound_value");
    int rows = 0;
    while (std::getline(csv, line))
    {
        std::vector<std::string> cells;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ','))
            cells.push_back(cell);
        ASSERT_GE(cells.size(), 7u);
        EXPECT_EQ(std::stoll(cells[6]), 1999 / std::stoll(cells[2]));
        ++rows;
    }
    EXPECT_EQ(rows, 6);
}

TEST_F(CliTest, SweepListsThresholdViolations)
{
    auto j = base_config();
    j["gamma"] = "sqrt_n_over_t";
    j["T"] = 100;
    j["beta"] = 0.9;
    j["sweep"] = {{"worker_counts", {1, 4}}, {"seed_count", 1}};
    EXPECT_EQ(invoke(cli::cmd_sweep, write_config(j), to(dir_ / "o")), cli::kExitValidation);
    EXPECT_NE(err_.str().find("N=1"), std::string::npos);
    EXPECT_NE(err_.str().find("N=4"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir_ / "o" / "speedup.csv"));
    j["gamma"] = 0.01;
    EXPECT_THROW(cli::parse_experiment(j, dir_), cli::SchemaError);
}

TEST_F(CliTest, ReportOnEmptyDirectory)
{
    fs::create_directories(dir_ / "empty");
    EXPECT_EQ(invoke(cli::cmd_report, dir_ / "empty"), cli::kExitIo);
    EXPECT_NE(err_.str().find("0 ledgers"), std::string::npos);
    EXPECT_EQ(invoke(cli::cmd_report, dir_ / "missing"), cli::kExitIo);
}

TEST_F(CliTest, ReportOneRunGivesOneSeriesPerMetric)
{
    ASSERT_EQ(invoke(cli::cmd_run, write_config(base_config()), to(dir_ / "runs" / "a")),
              cli::kExitOk);
    ASSERT_EQ(invoke(cli::cmd_report, dir_ / "runs"), cli::kExitOk) << err_.str();
    const double bound =
        json::parse(slurp(dir_ / "runs" / "a" / "result.json")).at("bound_value").get<double>();
    for (const char* f :
         {"grad_norm_vs_iteration.csv", "grad_norm_vs_comm_rounds.csv", "bound_overlay.csv"})
    {
        std::istringstream csv(slurp(dir_ / "runs" / "report" / f));
        std::string line;
        std::getline(csv, line);
        EXPECT_EQ(line.rfind("# momentum_sync report", 0), 0u);
        std::getline(csv, line);
        EXPECT_EQ(line, "series,num_workers,interval,x,y");
        std::set<std::string> series;
        int rows = 0;
        while (std::getline(csv, line))
        {
            series.insert(line.substr(0, line.find(',')));
            if (std::string(f) == "bound_overlay.csv")
            {
                EXPECT_EQ(std::stod(line.substr(line.rfind(',') + 1)), bound);
            }
            ++rows;
        }
        EXPECT_EQ(series, (std::set<std::string>{"a/polyak"})) << f;
        EXPECT_EQ(rows, 31) << f;
    }
}

TEST_F(CliTest, ReportRefusesMixedProblems)
{
    auto j = base_config();
    ASSERT_EQ(invoke(cli::cmd_run, write_config(j), to(dir_ / "runs" / "a")), cli::kExitOk);
    j["problem"]["seed"] = 3;
    ASSERT_EQ(invoke(cli::cmd_run, write_config(j), to(dir_ / "runs" / "b")), cli::kExitOk);
    EXPECT_EQ(invoke(cli::cmd_report, dir_ / "runs"), cli::kExitValidation);
    EXPECT_NE(err_.str().find("refusing to merge"), std::string::npos);
}

TEST_F(CliTest, ReportMergesWorkerCountsOfOneRecipe)
{
    auto j = base_config();
    ASSERT_EQ(invoke(cli::cmd_run, write_config(j), to(dir_ / "runs" / "n3")), cli::kExitOk);
    j["problem"]["workers"] = 5;
    ASSERT_EQ(invoke(cli::cmd_run, write_config(j), to(dir_ / "runs" / "n5")), cli::kExitOk);
    EXPECT_EQ(invoke(cli::cmd_report, dir_ / "runs"), cli::kExitOk) << err_.str();
}

TEST_F(CliTest, ReportNamesCorruptLedgers)
{
    ASSERT_EQ(invoke(cli::cmd_run, write_config(base_config()), to(dir_ / "runs" / "a")),
              cli::kExitOk);
    ASSERT_EQ(invoke(cli::cmd_run, write_config(base_config()), to(dir_ / "runs" / "b")),
              cli::kExitOk);
    std::ofstream(dir_ / "runs" / "a" / "result.json") << "{ not json";
    fs::remove(dir_ / "runs" / "b" / "trace.csv");
    EXPECT_EQ(invoke(cli::cmd_report, dir_ / "runs"), cli::kExitIo);
    EXPECT_NE(err_.str().find((dir_ / "runs" / "a" / "result.json").string()), std::string::npos);
    EXPECT_NE(err_.str().find((dir_ / "runs" / "b" / "trace.csv").string()), std::string::npos);
}

TEST_F(CliTest, BinaryExitCodes)
{
    const auto good = write_config(base_config());
    auto bad = base_config();
    bad["beta"] = 1.0;
    const auto bad_path = write_config(bad, "bad.json");
    const std::string out = " --out " + shell_quote((dir_ / "o").string());
    EXPECT_EQ(run_binary("validate " + shell_quote(good.string())), 0);
    EXPECT_EQ(run_binary("validate " + shell_quote(bad_path.string())), 2);
    EXPECT_EQ(run_binary("validate " + shell_quote((dir_ / "nope.json").string())), 4);
    EXPECT_EQ(run_binary("run " + shell_quote(good.string()) + out + " --threads 2"), 0);
    EXPECT_EQ(run_binary("frobnicate"), 2);
    EXPECT_EQ(run_binary("run"), 2);
    EXPECT_EQ(run_binary("report " + shell_quote((dir_ / "o").string()) + " --out "
                         + shell_quote((dir_ / "r").string())),
              0);
    EXPECT_TRUE(fs::exists(dir_ / "r" / "grad_norm_vs_iteration.csv"));
}
