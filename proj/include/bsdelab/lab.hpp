#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsdelab/galerkin_space.hpp"

namespace bsdelab::lab {

using Json = nlohmann::ordered_json;

struct SpaceBlock {
    std::size_t dim = 1;
    std::vector<double> variances{0.5};
    std::size_t quad_order = 20;
};

struct SemigroupBlock {
    std::string kind = "ou_analytic";
    std::vector<double> lambdas{-1.0};
    std::vector<double> noise{1.0};
    std::string drift = "none";  // mc_euler perturbation
    std::size_t steps = 256;     // Euler steps per unit time
    std::size_t paths = 4096;
};

// kind: linear (decay, constant), sin_z (decay, amplitude, axis),
// cubic (rate), table (y_poly, z, constant)
struct DriverBlock {
    std::string kind = "linear";
    double decay = 1.0;
    double constant = 0.0;
    double amplitude = 0.0;
    std::size_t axis = 0;
    double rate = 0.0;
    std::vector<double> y_poly;
    std::vector<double> z;
};

struct ProblemBlock {
    std::string terminal = "identity";
    double terminal_value = 0.0;  // for the constant terminal
    DriverBlock driver;
    double horizon = 1.0;
    std::size_t steps = 64;  // shared by the grid solver and the paths
};

struct PathsBlock {
    std::vector<double> start{1.0};  // empty: draw X_0 from the reference measure
    std::size_t paths = 100000;
};

struct BsdeBlock {
    std::size_t degree = 4;
    std::size_t picard = 3;
    double moment_p = 2.0;
};

struct ExperimentConfig {
    std::string preset;
    SpaceBlock space;
    SemigroupBlock semigroup;
    ProblemBlock problem;
    PathsBlock paths;
    BsdeBlock bsde;
    std::uint64_t seed = 1;
    std::string output;         // empty: nothing is written
    std::string checks = "none";  // none, analytic, probabilistic, all
};

std::vector<std::string> preset_names();
// throws ConfigError for unknown names
ExperimentConfig preset_config(const std::string& name);

// Every inconsistency of a config, empty when it is valid.
std::vector<std::string> violations(const ExperimentConfig& config);

// Preset (if named) overlaid with the explicit keys, then validated; throws
// ConfigError listing every violation, one per line.
ExperimentConfig parse_config(const Json& doc);
ExperimentConfig load_config(const std::string& path);
Json to_json(const ExperimentConfig& config);

struct CheckRow {
    std::string id;
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string detail;
};

struct Timing {
    std::string stage;
    double seconds = 0.0;
};

struct RunReport {
    Json report;  // deterministic for a given (config, seed)
    bool passed = false;
    std::vector<Timing> timings;  // wall clock, written apart from the report
    std::vector<CheckRow> checks;
    SpaceTimeField u;
    std::vector<double> y0_samples;
};

// Runs the whole pipeline; engine errors end up in the report with status
// "failed". Writes report.json, timings.json, u_field.csv and y0_hist.csv
// when config.output is set.
RunReport run(const ExperimentConfig& config);

bool valid_selector(const std::string& selector);
// throws ConfigError for an unknown selector
std::vector<CheckRow> check_suite(const std::string& selector, std::uint64_t seed = 1);

std::string format_table(const std::vector<CheckRow>& rows);
Json rows_to_json(const std::vector<CheckRow>& rows);

}  // namespace bsdelab::lab
