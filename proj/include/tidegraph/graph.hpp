#pragma once

#include <string>
#include <vector>

#include "tidegraph/events.hpp"
#include "tidegraph/params.hpp"
#include "tidegraph/tape.hpp"

namespace tidegraph::graph {

enum class TopologyMode { FullyConnected, SameTypeOnly, Disconnected };

TopologyMode topology_from_string(const std::string& s);  // "full" | "same_type" | "disconnected"
std::string topology_to_string(TopologyMode m);

struct Edge {
    int src = 0;  // sender j
    int dst = 0;  // receiver i
};

// Directed edges over the given nodes per mode, ordered lexicographically by
// (src, dst) node key. Nodes must be sorted by key; indices refer into it.
std::vector<Edge> build_topology(const std::vector<events::NodeKey>& nodes, TopologyMode mode);

enum class ConvKind { Gatv2, Mean };

ConvKind conv_from_string(const std::string& s);  // "gatv2" | "mean"
std::string conv_to_string(ConvKind k);

// Parameters of one GNN block. Shared across all nodes regardless of type.
struct GnnBlockParams {
    ndiff::Parameter* ln_gain = nullptr;  // 1 x d
    ndiff::Parameter* ln_bias = nullptr;  // 1 x d
    ndiff::Parameter* w_self = nullptr;   // d x d, receiver side of the attention score
    ndiff::Parameter* w_nbr = nullptr;    // d x d, sender side
    ndiff::Parameter* att = nullptr;      // d x 1, attention vector
    ndiff::Parameter* w_val = nullptr;    // d x d, message value projection (no bias)
};

struct GnnStack {
    std::vector<GnnBlockParams> blocks;
    ConvKind conv = ConvKind::Gatv2;
    double leaky_slope = 0.2;
    double ln_eps = 1e-5;
};

// Registers parameters for `blocks` GNN blocks of width d under "gnn.<b>.*".
GnnStack make_gnn_stack(ndiff::ParamStore& params, int blocks, int d, ConvKind conv);

// Attention message passing. h is n x d. Per edge (j -> i) the logit is
// att^T . leaky_relu(w_self.h_i + w_nbr.h_j), softmax-normalized over the
// in-neighborhood of i; messages are attention-weighted sums of w_val.h_j.
// A node with no in-edges receives the zero message. No output bias, so an
// edgeless graph yields an exactly-zero result.
ndiff::Var gat_conv(ndiff::Tape& tape, ndiff::Var h, const std::vector<Edge>& edges,
                    const GnnBlockParams& p, double leaky_slope);

// Companion convolution with uniform weights 1/|N(i)| instead of attention.
ndiff::Var mean_conv(ndiff::Tape& tape, ndiff::Var h, const std::vector<Edge>& edges,
                     const GnnBlockParams& p);

// h' = h + elu(conv(affine_ln(h), edges)) — pre-norm residual block.
ndiff::Var gnn_block(ndiff::Tape& tape, ndiff::Var h, const std::vector<Edge>& edges,
                     const GnnBlockParams& p, ConvKind conv, double leaky_slope, double ln_eps);

ndiff::Var gnn_forward(ndiff::Tape& tape, ndiff::Var h, const std::vector<Edge>& edges,
                       const GnnStack& stack);

}  // namespace tidegraph::graph
