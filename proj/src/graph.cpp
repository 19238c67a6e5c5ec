#include "tidegraph/graph.hpp"

#include <stdexcept>

namespace tidegraph::graph {

TopologyMode topology_from_string(const std::string& s) {
    if (s == "full") return TopologyMode::FullyConnected;
    if (s == "same_type") return TopologyMode::SameTypeOnly;
    if (s == "disconnected") return TopologyMode::Disconnected;
    throw std::invalid_argument("unknown topology: " + s);
}

std::string topology_to_string(TopologyMode m) {
    switch (m) {
        case TopologyMode::FullyConnected: return "full";
        case TopologyMode::SameTypeOnly: return "same_type";
        case TopologyMode::Disconnected: return "disconnected";
    }
    return "?";
}

ConvKind conv_from_string(const std::string& s) {
    if (s == "gatv2") return ConvKind::Gatv2;
    if (s == "mean") return ConvKind::Mean;
    throw std::invalid_argument("unknown conv: " + s);
}

std::string conv_to_string(ConvKind k) {
    return k == ConvKind::Gatv2 ? "gatv2" : "mean";
}

std::vector<Edge> build_topology(const std::vector<events::NodeKey>& nodes, TopologyMode mode) {
    std::vector<Edge> edges;
    if (mode == TopologyMode::Disconnected) return edges;
    const int n = static_cast<int>(nodes.size());
    for (int src = 0; src < n; ++src) {
        for (int dst = 0; dst < n; ++dst) {
            if (src == dst) continue;
            if (mode == TopologyMode::SameTypeOnly &&
                nodes[src].var_type != nodes[dst].var_type)
                continue;
            edges.push_back({src, dst});
        }
    }
    return edges;
}

GnnStack make_gnn_stack(ndiff::ParamStore& params, int blocks, int d, ConvKind conv) {
    GnnStack stack;
    stack.conv = conv;
    for (int b = 0; b < blocks; ++b) {
        const std::string pre = "gnn." + std::to_string(b) + ".";
        GnnBlockParams bp;
        bp.ln_gain = &params.constant(pre + "ln_gain", 1, d, 1.0);
        bp.ln_bias = &params.zeros(pre + "ln_bias", 1, d);
        bp.w_self = &params.glorot(pre + "w_self", d, d);
        bp.w_nbr = &params.glorot(pre + "w_nbr", d, d);
        bp.att = &params.glorot(pre + "att", d, 1);
        bp.w_val = &params.glorot(pre + "w_val", d, d);
        stack.blocks.push_back(bp);
    }
    return stack;
}

namespace {

// In-neighbor lists per destination, preserving edge order.
std::vector<std::vector<int>> in_neighbors(int n, const std::vector<Edge>& edges) {
    std::vector<std::vector<int>> nbr(static_cast<std::size_t>(n));
    for (const auto& e : edges) nbr[static_cast<std::size_t>(e.dst)].push_back(e.src);
    return nbr;
}

}  // namespace

ndiff::Var gat_conv(ndiff::Tape& tape, ndiff::Var h, const std::vector<Edge>& edges,
                    const GnnBlockParams& p, double leaky_slope) {
    const int n = tape.val(h).rows;
    const int d = tape.val(h).cols;
    auto nbr = in_neighbors(n, edges);

    auto w_self = tape.leaf(*p.w_self);
    auto w_nbr = tape.leaf(*p.w_nbr);
    auto att = tape.leaf(*p.att);
    auto w_val = tape.leaf(*p.w_val);
    // Row convention: h rows are feature row-vectors, so the projection of
    // node i is row_i(h) * W. All three projections are shared across edges.
    auto hs = tape.matmul(h, w_self);
    auto hn = tape.matmul(h, w_nbr);
    auto hv = tape.matmul(h, w_val);

    std::vector<ndiff::Var> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& js = nbr[static_cast<std::size_t>(i)];
        if (js.empty()) {
            rows.push_back(tape.input(ndiff::Tensor::zeros(1, d)));
            continue;
        }
        const int m = static_cast<int>(js.size());
        auto self_rep = tape.gather_rows(hs, std::vector<int>(static_cast<std::size_t>(m), i));
        auto nbr_rows = tape.gather_rows(hn, js);
        auto pre = tape.leaky_relu(tape.add(self_rep, nbr_rows), leaky_slope);  // m x d
        auto logits = tape.transpose(tape.matmul(pre, att));                    // 1 x m
        auto alpha = tape.softmax_rows(logits);                                 // 1 x m
        rows.push_back(tape.matmul(alpha, tape.gather_rows(hv, js)));           // 1 x d
    }
    return tape.concat_rows(rows);
}

ndiff::Var mean_conv(ndiff::Tape& tape, ndiff::Var h, const std::vector<Edge>& edges,
                     const GnnBlockParams& p) {
    const int n = tape.val(h).rows;
    const int d = tape.val(h).cols;
    auto nbr = in_neighbors(n, edges);
    auto w_val = tape.leaf(*p.w_val);
    auto hv = tape.matmul(h, w_val);

    std::vector<ndiff::Var> rows;
    rows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& js = nbr[static_cast<std::size_t>(i)];
        if (js.empty()) {
            rows.push_back(tape.input(ndiff::Tensor::zeros(1, d)));
            continue;
        }
        rows.push_back(tape.mean_rows(tape.gather_rows(hv, js)));
    }
    return tape.concat_rows(rows);
}

ndiff::Var gnn_block(ndiff::Tape& tape, ndiff::Var h, const std::vector<Edge>& edges,
                     const GnnBlockParams& p, ConvKind conv, double leaky_slope, double ln_eps) {
    auto normed = tape.layer_norm_rows(h, ln_eps);
    normed = tape.add_rowvec(tape.mul_rowvec(normed, tape.leaf(*p.ln_gain)),
                             tape.leaf(*p.ln_bias));
    auto msg = conv == ConvKind::Gatv2 ? gat_conv(tape, normed, edges, p, leaky_slope)
                                       : mean_conv(tape, normed, edges, p);
    return tape.add(h, tape.elu(msg));
}

ndiff::Var gnn_forward(ndiff::Tape& tape, ndiff::Var h, const std::vector<Edge>& edges,
                       const GnnStack& stack) {
    for (const auto& b : stack.blocks)
        h = gnn_block(tape, h, edges, b, stack.conv, stack.leaky_slope, stack.ln_eps);
    return h;
}

}  // namespace tidegraph::graph
