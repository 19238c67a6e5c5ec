#pragma once

#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "tidegraph/tensor.hpp"

namespace tidegraph::ndiff {

struct Parameter;

// Handle into a Tape's node list.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Record of one forward pass. Nodes are appended in topological order;
// backward() walks them in reverse. A tape is single-use: after backward()
// it refuses further work.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves.
    Var leaf(Parameter& p);                  // tracked, grad lands in p.grad
    Var input(Tensor value);                 // constant, no grad

    // Core op set.
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var add(Var a, Var b);                   // same shape
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                   // elementwise
    Var div(Var a, Var b);                   // elementwise
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var add_rowvec(Var a, Var v);            // a: r x c, v: 1 x c
    Var mul_rowvec(Var a, Var v);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, int r0, int r1);   // [r0, r1)
    Var slice_cols(Var a, int c0, int c1);
    Var gather_rows(Var a, std::vector<int> idx);
    Var sum_all(Var a);                      // 1x1
    Var mean_all(Var a);
    Var sum_rows(Var a);                     // column sums -> 1 x c
    Var mean_rows(Var a);
    Var relu(Var a);
    Var leaky_relu(Var a, double slope);
    Var elu(Var a);                          // alpha = 1
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var abs(Var a);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var a, double eps);  // per-row, no affine
    Var dropout(Var a, double p, bool train, std::mt19937_64& rng);
    Var linear(Var x, Var w, Var b);         // x*w + b (b broadcast per row)

    // Custom ops append through here. `back` receives the tape and the new
    // node's Var; it must route grad(out) into the dependencies' grads.
    Var push(Tensor value, const std::vector<Var>& deps,
             std::function<void(Tape&, Var)> back);

    // Reference stays valid for the tape's lifetime (deque-backed storage).
    const Tensor& val(Var x) const { return nodes_[x.idx].val; }
    bool needs_grad(Var x) const { return nodes_[x.idx].requires_grad; }
    // Gradient buffer for a node (allocated zero on first touch).
    Tensor& grad(Var x);
    bool grad_touched(Var x) const { return !nodes_[x.idx].grad.v.empty(); }

    // Reverse sweep from a scalar node. `seed` is dLoss_total/dThis.
    // Parameter leaves accumulate (+=) into Parameter::grad.
    void backward(Var loss, double seed = 1.0);
    bool consumed() const { return consumed_; }
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;  // empty until touched
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::function<void(Tape&, Var)> back;
    };

    std::deque<Node> nodes_;  // reference-stable under push_back
    bool consumed_ = false;

    Var push_node(Node n);
    void check_open() const;
};

}  // namespace tidegraph::ndiff
