#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "bsdelab/errors.hpp"
#include "bsdelab/lab.hpp"
#include "bsdelab/parallel.hpp"

using namespace bsdelab;

namespace {

constexpr int exit_pass = 0;
constexpr int exit_check_failure = 1;
constexpr int exit_config = 2;

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t threads = 0;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "experiment config (JSON)");
    app->add_option("--seed", c.seed, "override the config seed");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--threads", c.threads, "worker threads; changes speed only");
}

void apply_threads(const Common& c) {
    set_worker_count(c.threads > 0 ? c.threads : std::max(1u, std::thread::hardware_concurrency()));
}

int cmd_run(const Common& c, CLI::App* app) {
    if (c.config.empty()) {
        std::cerr << "run needs --config\n";
        return exit_config;
    }
    auto config = lab::load_config(c.config);
    if (app->count("--seed")) config.seed = c.seed;
    if (app->count("--out")) config.output = c.out;
    apply_threads(c);
    const auto r = lab::run(config);
    std::printf("status %s\n", r.report["status"].get<std::string>().c_str());
    if (!r.report["error"].is_null()) std::printf("error %s\n", r.report["error"].get<std::string>().c_str());
    for (const auto& [k, v] : r.report["verdicts"].items()) std::printf("%-16s %s\n", k.c_str(), v.get<bool>() ? "pass" : "FAIL");
    if (!r.report["feynman_kac"].is_null()) {
        const auto& fk = r.report["feynman_kac"];
        std::printf("u(0,x0) %.6g  Y0 %.6g +- %.2g\n", fk["u0"].get<double>(), fk["y0"]["mean"].get<double>(),
                    fk["y0"]["se"].get<double>());
    }
    if (!r.checks.empty()) std::fputs(lab::format_table(r.checks).c_str(), stdout);
    if (!config.output.empty()) std::printf("wrote %s\n", config.output.c_str());
    return r.passed ? exit_pass : exit_check_failure;
}

int cmd_check(const Common& c, CLI::App* app, std::string selector) {
    std::uint64_t seed = 1;
    std::string out;
    if (!c.config.empty()) {
        const auto config = lab::load_config(c.config);
        seed = config.seed;
        if (selector.empty() && config.checks != "none") selector = config.checks;
    }
    if (selector.empty()) selector = "all";
    if (app->count("--seed")) seed = c.seed;
    if (!lab::valid_selector(selector)) {
        std::cerr << "unknown selector '" << selector << "' (analytic, probabilistic or all)\n";
        return exit_config;
    }
    apply_threads(c);
    const auto rows = lab::check_suite(selector, seed);
    std::fputs(lab::format_table(rows).c_str(), stdout);
    if (!c.out.empty()) {
        std::filesystem::create_directories(c.out);
        std::ofstream(std::filesystem::path(c.out) / "checks.json") << lab::rows_to_json(rows).dump(2) << "\n";
    }
    for (const auto& r : rows)
        if (!r.pass) return exit_check_failure;
    return exit_pass;
}

int cmd_presets(const std::string& name) {
    if (!name.empty()) {
        std::printf("%s\n", lab::to_json(lab::preset_config(name)).dump(2).c_str());
        return exit_pass;
    }
    for (const auto& n : lab::preset_names()) std::printf("%s\n", n.c_str());
    return exit_pass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semilinear Kolmogorov equations and their BSDEs on a Gaussian-weighted grid"};
    app.require_subcommand(1);

    Common run_opts, check_opts;
    auto* run = app.add_subcommand("run", "run the full pipeline for a config");
    add_common(run, run_opts);

    std::string selector;
    auto* check = app.add_subcommand("check", "acceptance check suite");
    add_common(check, check_opts);
    check->add_option("selector", selector, "analytic, probabilistic or all");

    std::string preset;
    auto* presets = app.add_subcommand("presets", "list presets, or print one as a config");
    presets->add_option("name", preset, "preset to print");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_pass : exit_config;
    }

    try {
        if (*run) return cmd_run(run_opts, run);
        if (*check) return cmd_check(check_opts, check, selector);
        return cmd_presets(preset);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_check_failure;
    }
}
