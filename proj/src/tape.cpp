#include "tidegraph/tape.hpp"

#include <cmath>

#include "tidegraph/params.hpp"

namespace tidegraph::ndiff {

void Tape::check_open() const {
    if (consumed_) throw std::logic_error("tape: reuse after backward()");
}

Var Tape::push_node(Node n) {
    check_open();
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad(Var x) {
    Node& n = nodes_[x.idx];
    if (n.grad.v.empty() && n.val.numel() > 0) n.grad = Tensor(n.val.rows, n.val.cols);
    if (n.grad.v.empty()) n.grad = Tensor(n.val.rows, n.val.cols);
    return n.grad;
}

Var Tape::leaf(Parameter& p) {
    Node n;
    n.val = p.value;
    n.requires_grad = true;
    n.param = &p;
    return push_node(std::move(n));
}

Var Tape::input(Tensor value) {
    Node n;
    n.val = std::move(value);
    n.requires_grad = false;
    return push_node(std::move(n));
}

Var Tape::push(Tensor value, const std::vector<Var>& deps,
               std::function<void(Tape&, Var)> back) {
    Node n;
    n.val = std::move(value);
    for (Var d : deps) n.requires_grad = n.requires_grad || nodes_[d.idx].requires_grad;
    if (n.requires_grad) n.back = std::move(back);
    return push_node(std::move(n));
}

void Tape::backward(Var loss, double seed) {
    check_open();
    if (nodes_[loss.idx].val.numel() != 1)
        throw std::logic_error("backward: loss must be scalar, got " +
                               nodes_[loss.idx].val.shape_str());
    consumed_ = true;
    grad(loss).v[0] = seed;
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.v.empty() || !n.requires_grad) continue;
        if (n.back) n.back(*this, Var{i});
        if (n.param) n.param->grad.add_(n.grad);
    }
}

// ---- ops ----

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Tensor out = ndiff::matmul(ta, tb);
    return push(std::move(out), {a, b}, [a, b](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        if (t.needs_grad(a)) t.grad(a).add_(ndiff::matmul(g, ndiff::transpose(t.val(b))));
        if (t.needs_grad(b)) t.grad(b).add_(ndiff::matmul(ndiff::transpose(t.val(a)), g));
    });
}

Var Tape::transpose(Var a) {
    Tensor out = ndiff::transpose(val(a));
    return push(std::move(out), {a}, [a](Tape& t, Var o) {
        if (t.needs_grad(a)) t.grad(a).add_(ndiff::transpose(t.grad(o)));
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("add: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    out.add_(tb);
    return push(std::move(out), {a, b}, [a, b](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        if (t.needs_grad(a)) t.grad(a).add_(g);
        if (t.needs_grad(b)) t.grad(b).add_(g);
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("sub: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= tb.v[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        if (t.needs_grad(a)) t.grad(a).add_(g);
        if (t.needs_grad(b)) {
            Tensor& gb = t.grad(b);
            for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] -= g.v[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("mul: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= tb.v[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        const Tensor& ta2 = t.val(a);
        const Tensor& tb2 = t.val(b);
        if (t.needs_grad(a)) {
            Tensor& ga = t.grad(a);
            for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += g.v[i] * tb2.v[i];
        }
        if (t.needs_grad(b)) {
            Tensor& gb = t.grad(b);
            for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += g.v[i] * ta2.v[i];
        }
    });
}

Var Tape::div(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("div: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] /= tb.v[i];
    return push(std::move(out), {a, b}, [a, b](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        const Tensor& tb2 = t.val(b);
        const Tensor& tc = t.val(o);
        if (t.needs_grad(a)) {
            Tensor& ga = t.grad(a);
            for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += g.v[i] / tb2.v[i];
        }
        if (t.needs_grad(b)) {
            Tensor& gb = t.grad(b);
            for (size_t i = 0; i < gb.v.size(); ++i) gb.v[i] -= g.v[i] * tc.v[i] / tb2.v[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = val(a);
    out.scale_(c);
    return push(std::move(out), {a}, [a, c](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += c * g.v[i];
    });
}

Var Tape::add_scalar(Var a, double c) {
    Tensor out = val(a);
    for (double& x : out.v) x += c;
    return push(std::move(out), {a}, [a](Tape& t, Var o) {
        if (t.needs_grad(a)) t.grad(a).add_(t.grad(o));
    });
}

Var Tape::add_rowvec(Var a, Var vv) {
    const Tensor& ta = val(a);
    const Tensor& tv = val(vv);
    if (tv.rows != 1 || tv.cols != ta.cols)
        throw std::invalid_argument("add_rowvec: " + ta.shape_str() + " vs " + tv.shape_str());
    Tensor out = ta;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) += tv.v[c];
    return push(std::move(out), {a, vv}, [a, vv](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        if (t.needs_grad(a)) t.grad(a).add_(g);
        if (t.needs_grad(vv)) {
            Tensor& gv = t.grad(vv);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) gv.v[c] += g.at(r, c);
        }
    });
}

Var Tape::mul_rowvec(Var a, Var vv) {
    const Tensor& ta = val(a);
    const Tensor& tv = val(vv);
    if (tv.rows != 1 || tv.cols != ta.cols)
        throw std::invalid_argument("mul_rowvec: " + ta.shape_str() + " vs " + tv.shape_str());
    Tensor out = ta;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) *= tv.v[c];
    return push(std::move(out), {a, vv}, [a, vv](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        const Tensor& ta2 = t.val(a);
        const Tensor& tv2 = t.val(vv);
        if (t.needs_grad(a)) {
            Tensor& ga = t.grad(a);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) ga.at(r, c) += g.at(r, c) * tv2.v[c];
        }
        if (t.needs_grad(vv)) {
            Tensor& gv = t.grad(vv);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) gv.v[c] += g.at(r, c) * ta2.at(r, c);
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    int cols = -1, rows = 0;
    for (Var p : parts) {
        const Tensor& tp = val(p);
        if (tp.rows == 0) continue;
        if (cols < 0) cols = tp.cols;
        if (tp.cols != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += tp.rows;
    }
    if (cols < 0) cols = val(parts[0]).cols;
    Tensor out(rows, cols);
    int r = 0;
    for (Var p : parts) {
        const Tensor& tp = val(p);
        for (int i = 0; i < tp.rows; ++i, ++r)
            for (int c = 0; c < cols; ++c) out.at(r, c) = tp.at(i, c);
    }
    std::vector<Var> ps = parts;
    return push(std::move(out), parts, [ps](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        int r = 0;
        for (Var p : ps) {
            const Tensor& tp = t.val(p);
            if (t.needs_grad(p)) {
                Tensor& gp = t.grad(p);
                for (int i = 0; i < tp.rows; ++i)
                    for (int c = 0; c < g.cols; ++c) gp.at(i, c) += g.at(r + i, c);
            }
            r += tp.rows;
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    int rows = -1, cols = 0;
    for (Var p : parts) {
        const Tensor& tp = val(p);
        if (tp.cols == 0) continue;
        if (rows < 0) rows = tp.rows;
        if (tp.rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += tp.cols;
    }
    if (rows < 0) rows = val(parts[0]).rows;
    Tensor out(rows, cols);
    int c0 = 0;
    for (Var p : parts) {
        const Tensor& tp = val(p);
        for (int r = 0; r < tp.rows; ++r)
            for (int c = 0; c < tp.cols; ++c) out.at(r, c0 + c) = tp.at(r, c);
        c0 += tp.cols;
    }
    std::vector<Var> ps = parts;
    return push(std::move(out), parts, [ps](Tape& t, Var o) {
        const Tensor& g = t.grad(o);
        int c0 = 0;
        for (Var p : ps) {
            const Tensor& tp = t.val(p);
            if (t.needs_grad(p)) {
                Tensor& gp = t.grad(p);
                for (int r = 0; r < tp.rows; ++r)
                    for (int c = 0; c < tp.cols; ++c) gp.at(r, c) += g.at(r, c0 + c);
            }
            c0 += tp.cols;
        }
    });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
    const Tensor& ta = val(a);
    if (r0 < 0 || r1 < r0 || r1 > ta.rows) throw std::invalid_argument("slice_rows: bad range");
    Tensor out(r1 - r0, ta.cols);
    for (int r = r0; r < r1; ++r)
        for (int c = 0; c < ta.cols; ++c) out.at(r - r0, c) = ta.at(r, c);
    return push(std::move(out), {a}, [a, r0](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        Tensor& ga = t.grad(a);
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) ga.at(r0 + r, c) += g.at(r, c);
    });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
    const Tensor& ta = val(a);
    if (c0 < 0 || c1 < c0 || c1 > ta.cols) throw std::invalid_argument("slice_cols: bad range");
    Tensor out(ta.rows, c1 - c0);
    for (int r = 0; r < ta.rows; ++r)
        for (int c = c0; c < c1; ++c) out.at(r, c - c0) = ta.at(r, c);
    return push(std::move(out), {a}, [a, c0](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        Tensor& ga = t.grad(a);
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) ga.at(r, c0 + c) += g.at(r, c);
    });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
    const Tensor& ta = val(a);
    Tensor out(static_cast<int>(idx.size()), ta.cols);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= ta.rows) throw std::invalid_argument("gather_rows: bad index");
        for (int c = 0; c < ta.cols; ++c) out.at(static_cast<int>(i), c) = ta.at(idx[i], c);
    }
    return push(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < idx.size(); ++i)
            for (int c = 0; c < g.cols; ++c) ga.at(idx[i], c) += g.at(static_cast<int>(i), c);
    });
}

Var Tape::sum_all(Var a) {
    double s = 0.0;
    for (double x : val(a).v) s += x;
    return push(Tensor::scalar(s), {a}, [a](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        double g = t.grad(o).v[0];
        Tensor& ga = t.grad(a);
        for (double& x : ga.v) x += g;
    });
}

Var Tape::mean_all(Var a) {
    const Tensor& ta = val(a);
    if (ta.numel() == 0) throw std::invalid_argument("mean_all: empty tensor");
    double s = 0.0;
    for (double x : ta.v) s += x;
    const double inv = 1.0 / ta.numel();
    return push(Tensor::scalar(s * inv), {a}, [a, inv](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        double g = t.grad(o).v[0] * inv;
        Tensor& ga = t.grad(a);
        for (double& x : ga.v) x += g;
    });
}

Var Tape::sum_rows(Var a) {
    const Tensor& ta = val(a);
    Tensor out(1, ta.cols);
    for (int r = 0; r < ta.rows; ++r)
        for (int c = 0; c < ta.cols; ++c) out.v[c] += ta.at(r, c);
    return push(std::move(out), {a}, [a](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        Tensor& ga = t.grad(a);
        for (int r = 0; r < ga.rows; ++r)
            for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += g.v[c];
    });
}

Var Tape::mean_rows(Var a) {
    const Tensor& ta = val(a);
    if (ta.rows == 0) throw std::invalid_argument("mean_rows: empty axis");
    Tensor out(1, ta.cols);
    for (int r = 0; r < ta.rows; ++r)
        for (int c = 0; c < ta.cols; ++c) out.v[c] += ta.at(r, c);
    const double inv = 1.0 / ta.rows;
    for (double& x : out.v) x *= inv;
    return push(std::move(out), {a}, [a, inv](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        Tensor& ga = t.grad(a);
        for (int r = 0; r < ga.rows; ++r)
            for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += g.v[c] * inv;
    });
}

namespace {

template <class F, class D>
Var unary_elementwise(Tape& t, Var a, const Tensor& ta, F f, D dfd) {
    Tensor out = ta;
    for (double& x : out.v) x = f(x);
    // dfd(x, y) is the local derivative given input x and output y.
    return t.push(std::move(out), {a}, [a, dfd](Tape& tt, Var o) {
        if (!tt.needs_grad(a)) return;
        const Tensor& g = tt.grad(o);
        const Tensor& x = tt.val(a);
        const Tensor& y = tt.val(o);
        Tensor& ga = tt.grad(a);
        for (size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += g.v[i] * dfd(x.v[i], y.v[i]);
    });
}

}  // namespace

Var Tape::relu(Var a) {
    return unary_elementwise(
        *this, a, val(a), [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Tape::leaky_relu(Var a, double slope) {
    return unary_elementwise(
        *this, a, val(a), [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var Tape::elu(Var a) {
    return unary_elementwise(
        *this, a, val(a), [](double x) { return x > 0.0 ? x : std::expm1(x); },
        [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var Tape::tanh(Var a) {
    return unary_elementwise(
        *this, a, val(a), [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Var Tape::sigmoid(Var a) {
    return unary_elementwise(
        *this, a, val(a), [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var Tape::abs(Var a) {
    return unary_elementwise(
        *this, a, val(a), [](double x) { return std::fabs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var Tape::softmax_rows(Var a) {
    const Tensor& ta = val(a);
    if (ta.cols == 0) throw std::invalid_argument("softmax_rows: empty axis");
    Tensor out(ta.rows, ta.cols);
    for (int r = 0; r < ta.rows; ++r) {
        double m = ta.at(r, 0);
        for (int c = 1; c < ta.cols; ++c) m = std::max(m, ta.at(r, c));
        double z = 0.0;
        for (int c = 0; c < ta.cols; ++c) {
            out.at(r, c) = std::exp(ta.at(r, c) - m);
            z += out.at(r, c);
        }
        for (int c = 0; c < ta.cols; ++c) out.at(r, c) /= z;
    }
    return push(std::move(out), {a}, [a](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        const Tensor& y = t.val(o);
        Tensor& ga = t.grad(a);
        for (int r = 0; r < y.rows; ++r) {
            double dot = 0.0;
            for (int c = 0; c < y.cols; ++c) dot += g.at(r, c) * y.at(r, c);
            for (int c = 0; c < y.cols; ++c)
                ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
    });
}

Var Tape::layer_norm_rows(Var a, double eps) {
    const Tensor& ta = val(a);
    if (ta.cols == 0) throw std::invalid_argument("layer_norm_rows: empty axis");
    Tensor out(ta.rows, ta.cols);
    std::vector<double> inv(ta.rows);
    for (int r = 0; r < ta.rows; ++r) {
        double mu = 0.0;
        for (int c = 0; c < ta.cols; ++c) mu += ta.at(r, c);
        mu /= ta.cols;
        double var = 0.0;
        for (int c = 0; c < ta.cols; ++c) {
            double d = ta.at(r, c) - mu;
            var += d * d;
        }
        var /= ta.cols;
        inv[r] = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < ta.cols; ++c) out.at(r, c) = (ta.at(r, c) - mu) * inv[r];
    }
    return push(std::move(out), {a}, [a, inv = std::move(inv)](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        const Tensor& y = t.val(o);
        Tensor& ga = t.grad(a);
        for (int r = 0; r < y.rows; ++r) {
            double gmean = 0.0, gymean = 0.0;
            for (int c = 0; c < y.cols; ++c) {
                gmean += g.at(r, c);
                gymean += g.at(r, c) * y.at(r, c);
            }
            gmean /= y.cols;
            gymean /= y.cols;
            for (int c = 0; c < y.cols; ++c)
                ga.at(r, c) += inv[r] * (g.at(r, c) - gmean - y.at(r, c) * gymean);
        }
    });
}

Var Tape::dropout(Var a, double p, bool train, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    if (!train || p == 0.0) return a;
    const Tensor& ta = val(a);
    std::vector<uint8_t> mask(ta.v.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor out = ta;
    for (size_t i = 0; i < mask.size(); ++i) {
        mask[i] = u(rng) >= p ? 1 : 0;
        out.v[i] = mask[i] ? out.v[i] * keep_scale : 0.0;
    }
    return push(std::move(out), {a}, [a, mask = std::move(mask), keep_scale](Tape& t, Var o) {
        if (!t.needs_grad(a)) return;
        const Tensor& g = t.grad(o);
        Tensor& ga = t.grad(a);
        for (size_t i = 0; i < ga.v.size(); ++i)
            if (mask[i]) ga.v[i] += g.v[i] * keep_scale;
    });
}

Var Tape::linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

}  // namespace tidegraph::ndiff
