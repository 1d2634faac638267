#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bsdelab/errors.hpp"
#include "bsdelab/lab.hpp"
#include "bsdelab/parallel.hpp"

using namespace bsdelab;
using lab::Json;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string config_error(const Json& doc) {
    try {
        lab::parse_config(doc);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

lab::ExperimentConfig small(const std::string& preset) {
    auto c = lab::preset_config(preset);
    c.paths.paths = 4000;
    c.problem.steps = 16;
    c.output.clear();
    return c;
}

}  // namespace

TEST_CASE("minimal config fills the documented defaults", "[lab][config]") {
    const auto c = lab::parse_config(Json{{"preset", "ou1d_linear"}});
    CHECK(c.problem.steps == 64);
    CHECK(c.paths.paths == 100000);
    CHECK(c.bsde.degree == 4);
    CHECK(c.space.quad_order == 20);
    CHECK(c.problem.driver.kind == "linear");
    CHECK(c.problem.terminal == "identity");
}

TEST_CASE("explicit keys override the preset", "[lab][config]") {
    const auto c = lab::parse_config(
        Json{{"preset", "ou1d_cubic"}, {"seed", 7}, {"paths", {{"paths", 500}, {"start", "mu"}}}});
    CHECK(c.seed == 7);
    CHECK(c.paths.paths == 500);
    CHECK(c.paths.start.empty());
    CHECK(c.problem.driver.kind == "cubic");
}

TEST_CASE("validation lists every violation", "[lab][config]") {
    const Json doc = {{"space", {{"dim", 2}, {"variances", {0.5, 0.5}}, {"quad_order", 8}}},
                      {"semigroup", {{"lambdas", {-1.0, -1.0}}, {"noise", {1.0, 1.0}}}},
                      {"problem", {{"driver", {{"kind", "table"}, {"y_poly", {-1.0}}, {"z", {0.5}}}}}},
                      {"paths", {{"start", {0.0}}}},
                      {"checks", "some"}};
    const auto msg = config_error(doc);
    CHECK(msg.find("table has 1 z coefficients but space.dim is 2") != std::string::npos);
    CHECK(msg.find("paths.start has 1 coordinates") != std::string::npos);
    CHECK(msg.find("checks must be") != std::string::npos);

    CHECK(config_error(Json{{"preset", "nope"}}).find("unknown preset") != std::string::npos);
    CHECK(config_error(Json{{"space", {{"dimension", 1}}}}).find("unknown key 'dimension'") != std::string::npos);
    CHECK(config_error(Json{{"bsde", {{"degree", -2}}}}).find("nonnegative integer") != std::string::npos);
    // dt * C = 1/2 * 2 is too coarse
    CHECK(config_error(Json{{"problem", {{"steps", 2}, {"driver", {{"kind", "linear"}, {"decay", 2.0}}}}}})
              .find("below 1/2") != std::string::npos);
    CHECK_THROWS_AS(lab::load_config("does/not/exist.json"), ConfigError);
}

TEST_CASE("loading the same file twice gives the same config", "[lab][config]") {
    const std::string path = "lab_config_twice.json";
    std::ofstream(path) << R"({"preset": "ou2d_lipschitz", "seed": 3})";
    const auto a = lab::to_json(lab::load_config(path)).dump();
    const auto b = lab::to_json(lab::load_config(path)).dump();
    std::filesystem::remove(path);
    CHECK(a == b);
    // the echo parses back to itself
    CHECK(lab::to_json(lab::parse_config(Json::parse(a))).dump() == a);
}

TEST_CASE("every preset is a valid config", "[lab][config]") {
    for (const auto& n : lab::preset_names()) {
        INFO(n);
        CHECK(lab::violations(lab::preset_config(n)).empty());
    }
}

TEST_CASE("run writes a deterministic report", "[lab][run]") {
    auto c = small("ou1d_linear");
    c.output = "lab_run";
    set_worker_count(1);
    const auto a = lab::run(c);
    std::filesystem::remove_all("lab_run_a");
    std::filesystem::rename("lab_run", "lab_run_a");
    set_worker_count(3);
    const auto b = lab::run(c);
    set_worker_count(1);
    std::filesystem::remove_all("lab_run_b");
    std::filesystem::rename("lab_run", "lab_run_b");
    CHECK(a.report["status"] == "ok");
    CHECK(slurp("lab_run_a/report.json") == slurp("lab_run_b/report.json"));
    CHECK(slurp("lab_run_a/u_field.csv") == slurp("lab_run_b/u_field.csv"));
    CHECK(slurp("lab_run_a/y0_hist.csv") == slurp("lab_run_b/y0_hist.csv"));
    CHECK(std::filesystem::exists("lab_run_a/timings.json"));
    const auto csv = slurp("lab_run_a/u_field.csv");
    CHECK(csv.rfind("t,x1,u1\n", 0) == 0);
    std::filesystem::remove_all("lab_run_a");
    std::filesystem::remove_all("lab_run_b");

    const auto& fk = a.report["feynman_kac"];
    CHECK(std::abs(fk["reference"]["closed_form"].get<double>() - std::exp(-2.0)) <= 1e-15);
    CHECK(fk["reference"]["u0_gap"].get<double>() <= 1e-4);
    CHECK(a.report["oracle"]["worst_relative_gap"].get<double>() <= 0.01);
    CHECK(a.passed);
}

TEST_CASE("report schema is stable", "[lab][run]") {
    auto ok = small("ou1d_cubic");
    const auto a = lab::run(ok);
    CHECK(a.report["solve"]["monotone"].is_object());
    auto bad = small("ou1d_linear");
    bad.paths.start = {0.0, 0.0};
    const auto b = lab::run(bad);
    CHECK(b.report["status"] == "failed");
    CHECK_FALSE(b.passed);
    std::vector<std::string> ka, kb;
    for (const auto& [k, v] : a.report.items()) ka.push_back(k);
    for (const auto& [k, v] : b.report.items()) kb.push_back(k);
    CHECK(ka == kb);
}

TEST_CASE("other presets run", "[lab][run]") {
    for (const char* n : {"ou2d_lipschitz", "dissipative1d"}) {
        INFO(n);
        const auto r = lab::run(small(n));
        CHECK(r.report["status"] == "ok");
        INFO(r.report["verdicts"].dump());
        CHECK(r.passed);
    }
}

TEST_CASE("check suite selectors", "[lab][checks]") {
    CHECK_THROWS_AS(lab::check_suite("everything"), ConfigError);
    CHECK(lab::valid_selector("analytic"));
    const auto rows = lab::check_suite("analytic");
    REQUIRE(rows.size() == 5);
    CHECK(rows.front().id == "AC1");
    CHECK(rows.back().id == "AC5");
    for (const auto& r : rows) {
        INFO(r.id << " " << r.detail);
        CHECK(r.pass);
    }
}
