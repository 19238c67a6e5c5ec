#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "tidegraph/decoders.hpp"
#include "tidegraph/encoders.hpp"
#include "tidegraph/events.hpp"
#include "tidegraph/graph.hpp"
#include "tidegraph/params.hpp"
#include "tidegraph/sampler.hpp"
#include "tidegraph/tape.hpp"

namespace tidegraph::model {

using ndiff::Tape;
using ndiff::Tensor;
using ndiff::Var;

struct ModelConfig {
    enc::EncoderSpec encoder;  // one architecture, instantiated per var_type
    int gnn_blocks = 2;
    graph::ConvKind conv = graph::ConvKind::Gatv2;
    bool bypass_gnn = false;  // ablation: skip message passing entirely
    int decoder_hidden1 = 64;
    int decoder_hidden2 = 64;
    std::uint64_t param_seed = 1;

    void validate() const;
};

// One forecast head output for a target node in a snapshot. Values stay in
// normalized space; use ForecastModel::denormalize for raw units.
struct TargetForecast {
    int node_index = -1;  // position in snapshot.nodes
    events::NodeKey node;
    Var y_hat;       // fs x l, normalized
    Tensor y;        // fs x l labels, normalized (constant copy of the sample)
    Tensor y_raw;    // fs x l labels as sampled
    int fs = 0;
    int l = 0;
};

// Per-variable temporal encoders feeding a shared attention message-passing
// stack, with a forecast decoder per decoded var_type. Construction registers
// encoder and message-passing parameters; fit() learns normalization and the
// fixed decoders' output lengths from the training data, then registers the
// decoder parameters.
class ForecastModel {
public:
    ForecastModel(events::Registry registry, ModelConfig cfg);

    // Normalization stats over [first train t - past_len, last train t +
    // future_len) and max_fs per fixed-decoded var_type from the train split.
    void fit(const events::EventStore& store, const sampler::DtdgDataset& train_split);

    // Restore a fitted state without data (e.g. before loading a checkpoint).
    void load_fitted(events::NormStats norm, std::map<std::string, int> max_fs);

    bool fitted() const { return fitted_; }

    // Forward one snapshot; forecasts only nodes whose var_type is in
    // `targets` and carries a decoder. Requires fit() or load_fitted().
    std::vector<TargetForecast> forward(Tape& t, const sampler::Snapshot& snap,
                                        const sampler::WindowSpec& window,
                                        const std::set<std::string>& targets) const;

    Tensor denormalize_labels(const events::NodeKey& node, const Tensor& y_norm) const;

    ndiff::ParamStore& params() { return params_; }
    const ndiff::ParamStore& params() const { return params_; }
    const events::Registry& registry() const { return registry_; }
    const events::NormStats& norm_stats() const { return norm_; }
    const std::map<std::string, int>& max_fs() const { return max_fs_; }
    const ModelConfig& config() const { return cfg_; }

private:
    events::Registry registry_;
    ModelConfig cfg_;
    ndiff::ParamStore params_;
    std::map<std::string, enc::TypeEncoder> encoders_;
    graph::GnnStack gnn_;
    std::map<std::string, dec::TypeDecoder> decoders_;  // registered by fit()
    events::NormStats norm_;
    std::map<std::string, int> max_fs_;
    bool fitted_ = false;
};

}  // namespace tidegraph::model
