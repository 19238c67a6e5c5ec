#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tidegraph/events.hpp"

namespace tidegraph::cli {

// One experiment, fully determined by this structure plus the referenced
// data files. JSON round trip is lossless; command-line flags override file
// fields, which override defaults.
struct ExperimentConfig {
    // data
    std::string events_csv;  // gap-ridden event rows
    std::string world_json;  // generator sidecar: registry + constituent periods

    // experiment
    std::vector<std::string> inputs{"current", "ssh"};  // var_types present as nodes
    std::vector<std::string> targets{"current"};        // var_types to forecast
    std::string encoder = "lstm";                       // "lstm" | "transformer"
    std::string topology = "full";                      // "full" | "same_type" | "disconnected"
    std::int64_t past_len_s = 12 * 3600;
    std::int64_t future_len_s = 12 * 3600;
    int embed_size = 20;
    int gnn_blocks = 2;
    bool bypass_gnn = false;

    // optimization
    int epochs = 15;
    int batch_size = 8;
    int patience = 4;
    double lr = 1e-3;

    // sampling
    int n_snapshots = 300;
    double split_train = 0.6;
    double split_val = 0.2;
    double split_test = 0.2;

    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "out";
    std::string run_name;  // artifact directory name; empty = join of inputs

    // Structural checks that need no data: ranges, fractions, enum strings.
    void validate() const;
    // Checks against a concrete registry: every referenced var_type exists,
    // targets are a subset of inputs and carry labels.
    void validate_against(const events::Registry& registry) const;

    std::string scenario_name() const;  // inputs sorted and joined with '+'
    std::string resolved_out_dir() const;  // applies the output-root env var

    std::string to_json_text() const;
    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
};

// Name of the environment variable that prefixes relative out_dir values.
extern const char* const kOutputRootEnv;  // "TIDEGRAPH_OUT"

// Full command-line interface. `args` excludes the program name. Returns the
// process exit code: 0 success, 1 runtime failure, 2 usage/config error.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace tidegraph::cli
