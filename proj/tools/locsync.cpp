#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "locsync/cli.hpp"

namespace {

int report(const locsync::json& j) {
    std::cout << j.dump(2) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuation of localized synchrony patterns in oscillator chains"};
    app.require_subcommand(1);

    std::string config;
    std::string branch;
    std::string out_dir;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config, "run configuration (JSON)")->required();
        sub->add_option("-o,--out", out_dir, "override output_dir from the config");
    };
    auto* cont = app.add_subcommand("continue", "trace a branch and write branch.csv and summary.json");
    add_common(cont);
    auto* seed = app.add_subcommand("seed", "build and correct the asymptotic seed");
    add_common(seed);
    auto* verify = app.add_subcommand("verify", "re-check a branch file and write verify.json");
    add_common(verify);
    verify->add_option("-b,--branch", branch, "branch.csv to verify")->required();
    auto* mismatch = app.add_subcommand("mismatch", "frequency-mismatch report and Newton sweep");
    add_common(mismatch);
    auto* simulate = app.add_subcommand("simulate", "integrate the corrected seed in time");
    add_common(simulate);
    auto* sweep = app.add_subcommand("sweep", "run continue over the sweep.eps x sweep.k grid");
    add_common(sweep);
    sweep->add_option("-j,--threads", threads, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = locsync::load_config(config);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (cont->parsed()) return report(locsync::cmd_continue(cfg));
        if (seed->parsed()) return report(locsync::cmd_seed(cfg));
        if (verify->parsed()) {
            const auto j = locsync::cmd_verify(cfg, branch);
            report(j);
            return j["pass"].get<bool>() ? 0 : 1;
        }
        if (mismatch->parsed()) return report(locsync::cmd_mismatch(cfg));
        if (simulate->parsed()) return report(locsync::cmd_simulate(cfg));
        if (sweep->parsed()) return report(locsync::cmd_sweep(cfg, threads));
    } catch (const locsync::SeedFailure& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return locsync::kExitSeed;
    } catch (const locsync::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return locsync::kExitConfig;
    } catch (const locsync::ParseError& e) {
        std::fprintf(stderr, "parse error: %s\n", e.what());
        return locsync::kExitConfig;
    } catch (const locsync::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
