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

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "momentum_sync/cli.hpp"

namespace cli = momentum_sync::cli;

int main(int argc, char** argv)
{
    CLI::App app{"Simulator for restarted and decentralized momentum SGD"};
    app.require_subcommand(1);

    bool force = false;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t threads = 0;
    std::string path;

    auto add_common = [&](CLI::App* sub, const std::string& what) {
        sub->add_option("path", path, what)->required();
        sub->add_flag("--force", force, "run even when theory gates or thresholds fail");
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--threads", threads, "worker threads (results do not depend on it)")
            ->check(CLI::PositiveNumber);
    };
    auto* validate = app.add_subcommand("validate", "check a config against the theory gates");
    auto* run = app.add_subcommand("run", "run one experiment: trace.csv, result.json, bound.json");
    auto* sweep = app.add_subcommand("sweep", "speedup sweep: speedup.csv, speedup_fit.json");
    auto* report = app.add_subcommand("report", "plot-ready CSV series from prior outputs");
    add_common(validate, "experiment JSON file");
    add_common(run, "experiment JSON file");
    add_common(sweep, "experiment JSON file");
    add_common(report, "directory of run outputs");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitValidation;
    }

    cli::Options opt;
    opt.force = force;
    auto* active = app.get_subcommands().front();
    if (active->count("--seed"))
        opt.seed = seed;
    if (active->count("--out"))
        opt.out = out;
    if (active->count("--threads"))
        opt.threads = threads;

    return cli::guarded(
        [&] {
            if (validate->parsed())
                return cli::cmd_validate(path, opt, std::cout, std::cerr);
            if (run->parsed())
                return cli::cmd_run(path, opt, std::cout, std::cerr);
            if (sweep->parsed())
                return cli::cmd_sweep(path, opt, std::cout, std::cerr);
            return cli::cmd_report(path, opt, std::cout, std::cerr);
        },
        std::cerr);
}
