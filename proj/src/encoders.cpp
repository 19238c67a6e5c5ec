#include "tidegraph/encoders.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace tidegraph::enc {

namespace {

constexpr double kLnEps = 1e-5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

EncoderKind encoder_from_string(const std::string& s) {
    if (s == "lstm") return EncoderKind::Lstm;
    if (s == "transformer") return EncoderKind::Transformer;
    throw std::invalid_argument("unknown encoder kind: " + s);
}

std::string to_string(EncoderKind k) {
    return k == EncoderKind::Lstm ? "lstm" : "transformer";
}

void EncoderSpec::validate() const {
    if (embed_size <= 0 || embed_size % 2 != 0)
        throw std::invalid_argument("encoder: embed_size must be a positive even number");
    if (hidden <= 0) throw std::invalid_argument("encoder: hidden width must be positive");
    if (kind == EncoderKind::Transformer) {
        if (layers < 1) throw std::invalid_argument("encoder: need at least one layer");
        if (heads < 1 || hidden % heads != 0)
            throw std::invalid_argument("encoder: heads must divide the model width");
        if (ffn < 1) throw std::invalid_argument("encoder: feed-forward width must be positive");
        if (pe_period_s <= 0.0)
            throw std::invalid_argument("encoder: positional-encoding period must be positive");
    }
}

Var lstm_seq(Tape& t, Var x, Var w, Var u, Var b) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    const Tensor& uv = t.val(u);
    const Tensor& bv = t.val(b);
    if (wv.cols % 4 != 0) throw std::invalid_argument("lstm_seq: gate width not divisible by 4");
    const int S = xv.rows, I = xv.cols, H = wv.cols / 4;
    if (S < 1) throw std::invalid_argument("lstm_seq: empty sequence");
    if (wv.rows != I) throw std::invalid_argument("lstm_seq: input/weight arity mismatch");
    if (uv.rows != H || uv.cols != 4 * H || bv.rows != 1 || bv.cols != 4 * H)
        throw std::invalid_argument("lstm_seq: recurrent shape mismatch");

    // Saved forward state for the hand-written reverse sweep.
    struct Saved {
        int S, I, H;
        std::vector<Tensor> h, c;           // S+1 entries, index 0 = initial zeros
        std::vector<Tensor> gi, gf, gg, go;  // S entries, post-activation gates
    };
    auto sv = std::make_shared<Saved>();
    sv->S = S;
    sv->I = I;
    sv->H = H;
    sv->h.assign(static_cast<std::size_t>(S) + 1, Tensor(1, H));
    sv->c.assign(static_cast<std::size_t>(S) + 1, Tensor(1, H));
    sv->gi.assign(static_cast<std::size_t>(S), Tensor(1, H));
    sv->gf = sv->gi;
    sv->gg = sv->gi;
    sv->go = sv->gi;

    Tensor pre(1, 4 * H);
    for (int s = 0; s < S; ++s) {
        const Tensor& hp = sv->h[static_cast<std::size_t>(s)];
        const Tensor& cp = sv->c[static_cast<std::size_t>(s)];
        for (int j = 0; j < 4 * H; ++j) {
            double acc = bv.at(0, j);
            for (int k = 0; k < I; ++k) acc += xv.at(s, k) * wv.at(k, j);
            for (int k = 0; k < H; ++k) acc += hp.at(0, k) * uv.at(k, j);
            pre.at(0, j) = acc;
        }
        Tensor& hn = sv->h[static_cast<std::size_t>(s) + 1];
        Tensor& cn = sv->c[static_cast<std::size_t>(s) + 1];
        for (int j = 0; j < H; ++j) {
            const double i_ = sigmoid(pre.at(0, j));
            const double f_ = sigmoid(pre.at(0, H + j));
            const double g_ = std::tanh(pre.at(0, 2 * H + j));
            const double o_ = sigmoid(pre.at(0, 3 * H + j));
            sv->gi[static_cast<std::size_t>(s)].at(0, j) = i_;
            sv->gf[static_cast<std::size_t>(s)].at(0, j) = f_;
            sv->gg[static_cast<std::size_t>(s)].at(0, j) = g_;
            sv->go[static_cast<std::size_t>(s)].at(0, j) = o_;
            cn.at(0, j) = f_ * cp.at(0, j) + i_ * g_;
            hn.at(0, j) = o_ * std::tanh(cn.at(0, j));
        }
    }

    Tensor out = sv->h[static_cast<std::size_t>(S)];
    return t.push(std::move(out), {x, w, u, b}, [x, w, u, b, sv](Tape& tp, Var self) {
        const Tensor& g_out = tp.grad(self);  // 1 x H
        const int S = sv->S, I = sv->I, H = sv->H;
        const Tensor& xv = tp.val(x);
        const Tensor& wv = tp.val(w);
        const Tensor& uv = tp.val(u);

        Tensor dW(I, 4 * H), dU(H, 4 * H), dB(1, 4 * H), dX(S, I);
        Tensor dh = g_out, dc(1, H), dpre(1, 4 * H);
        for (int s = S - 1; s >= 0; --s) {
            const auto si = static_cast<std::size_t>(s);
            const Tensor& cn = sv->c[si + 1];
            const Tensor& cp = sv->c[si];
            const Tensor& hp = sv->h[si];
            for (int j = 0; j < H; ++j) {
                const double i_ = sv->gi[si].at(0, j);
                const double f_ = sv->gf[si].at(0, j);
                const double g_ = sv->gg[si].at(0, j);
                const double o_ = sv->go[si].at(0, j);
                const double tc = std::tanh(cn.at(0, j));
                const double do_ = dh.at(0, j) * tc;
                const double dct = dc.at(0, j) + dh.at(0, j) * o_ * (1.0 - tc * tc);
                const double di = dct * g_;
                const double df = dct * cp.at(0, j);
                const double dg = dct * i_;
                dpre.at(0, j) = di * i_ * (1.0 - i_);
                dpre.at(0, H + j) = df * f_ * (1.0 - f_);
                dpre.at(0, 2 * H + j) = dg * (1.0 - g_ * g_);
                dpre.at(0, 3 * H + j) = do_ * o_ * (1.0 - o_);
                dc.at(0, j) = dct * f_;  // flows to c_{s-1}
            }
            for (int j = 0; j < 4 * H; ++j) {
                const double d = dpre.at(0, j);
                if (d == 0.0) continue;
                for (int k = 0; k < I; ++k) dW.at(k, j) += xv.at(s, k) * d;
                for (int k = 0; k < H; ++k) dU.at(k, j) += hp.at(0, k) * d;
                dB.at(0, j) += d;
            }
            for (int k = 0; k < I; ++k) {
                double acc = 0.0;
                for (int j = 0; j < 4 * H; ++j) acc += dpre.at(0, j) * wv.at(k, j);
                dX.at(s, k) = acc;
            }
            for (int k = 0; k < H; ++k) {
                double acc = 0.0;
                for (int j = 0; j < 4 * H; ++j) acc += dpre.at(0, j) * uv.at(k, j);
                dh.at(0, k) = acc;
            }
        }
        if (tp.needs_grad(x)) tp.grad(x).add_(dX);
        if (tp.needs_grad(w)) tp.grad(w).add_(dW);
        if (tp.needs_grad(u)) tp.grad(u).add_(dU);
        if (tp.needs_grad(b)) tp.grad(b).add_(dB);
    });
}

namespace {

WindowEncoder make_window(ParamStore& st, const EncoderSpec& spec, const std::string& prefix,
                          int in_cols, bool is_future) {
    WindowEncoder we;
    we.in_cols = in_cols;
    const int in = in_cols + 1;  // + time-offset column
    const int half = spec.embed_size / 2;
    const int W = spec.hidden;

    if (spec.kind == EncoderKind::Lstm) {
        we.lstm.w = &st.glorot(prefix + ".w", in, 4 * W);
        we.lstm.u = &st.glorot(prefix + ".u", W, 4 * W);
        we.lstm.b = &st.zeros(prefix + ".b", 1, 4 * W);
        // start with an open forget gate so early training does not wash
        // out the recurrent state
        for (int j = 0; j < W; ++j) we.lstm.b->value.at(0, W + j) = 1.0;
    } else {
        we.tf.in_w = &st.glorot(prefix + ".in_w", in, W);
        we.tf.in_b = &st.zeros(prefix + ".in_b", 1, W);
        for (int l = 0; l < spec.layers; ++l) {
            const std::string lp = prefix + ".l" + std::to_string(l);
            TransformerLayerParams tl;
            tl.ln1_gain = &st.constant(lp + ".ln1_gain", 1, W, 1.0);
            tl.ln1_bias = &st.zeros(lp + ".ln1_bias", 1, W);
            tl.wq = &st.glorot(lp + ".wq", W, W);
            tl.bq = &st.zeros(lp + ".bq", 1, W);
            tl.wk = &st.glorot(lp + ".wk", W, W);
            tl.wv = &st.glorot(lp + ".wv", W, W);
            tl.bv = &st.zeros(lp + ".bv", 1, W);
            tl.wo = &st.glorot(lp + ".wo", W, W);
            tl.bo = &st.zeros(lp + ".bo", 1, W);
            tl.ln2_gain = &st.constant(lp + ".ln2_gain", 1, W, 1.0);
            tl.ln2_bias = &st.zeros(lp + ".ln2_bias", 1, W);
            tl.ffn_w1 = &st.glorot(lp + ".ffn_w1", W, spec.ffn);
            tl.ffn_b1 = &st.zeros(lp + ".ffn_b1", 1, spec.ffn);
            tl.ffn_w2 = &st.glorot(lp + ".ffn_w2", spec.ffn, W);
            tl.ffn_b2 = &st.zeros(lp + ".ffn_b2", 1, W);
            we.tf.layers.push_back(tl);
        }
        we.tf.ln_f_gain = &st.constant(prefix + ".ln_f_gain", 1, W, 1.0);
        we.tf.ln_f_bias = &st.zeros(prefix + ".ln_f_bias", 1, W);
    }
    we.proj_w = &st.glorot(prefix + ".proj_w", W, half);
    we.proj_b = &st.zeros(prefix + ".proj_b", 1, half);
    if (is_future) we.null_vec = &st.zeros(prefix + ".null", 1, half);
    return we;
}

}  // namespace

TypeEncoder make_encoder(ParamStore& store, const EncoderSpec& spec,
                         const std::string& var_type, int k, int kf) {
    spec.validate();
    if (k < 1) throw std::invalid_argument("encoder: past feature arity must be >= 1");
    if (kf < 0) throw std::invalid_argument("encoder: negative future arity");
    TypeEncoder e;
    e.spec = spec;
    e.var_type = var_type;
    e.past = make_window(store, spec, "enc." + var_type + ".past", k, false);
    e.future = make_window(store, spec, "enc." + var_type + ".future", kf, true);
    return e;
}

namespace {

// Feature rows plus a trailing normalized time-offset column.
Tensor augment(const Tensor& x, const std::vector<std::int64_t>& offsets,
               std::int64_t window_len) {
    Tensor out(x.rows, x.cols + 1);
    for (int r = 0; r < x.rows; ++r) {
        for (int c = 0; c < x.cols; ++c) out.at(r, c) = x.at(r, c);
        out.at(r, x.cols) = static_cast<double>(offsets[static_cast<std::size_t>(r)]) /
                            static_cast<double>(window_len);
    }
    return out;
}

Var affine_ln(Tape& t, Var x, Parameter& gain, Parameter& bias) {
    return t.add_rowvec(t.mul_rowvec(t.layer_norm_rows(x, kLnEps), t.leaf(gain)),
                        t.leaf(bias));
}

Tensor positional_encoding(const std::vector<std::int64_t>& offsets, int width,
                           double period_s) {
    Tensor pe(static_cast<int>(offsets.size()), width);
    for (int r = 0; r < pe.rows; ++r) {
        const double pos = static_cast<double>(offsets[static_cast<std::size_t>(r)]) / period_s;
        for (int i = 0; i * 2 < width; ++i) {
            const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(width));
            pe.at(r, 2 * i) = std::sin(pos * freq);
            if (2 * i + 1 < width) pe.at(r, 2 * i + 1) = std::cos(pos * freq);
        }
    }
    return pe;
}

Var transformer_stack(Tape& t, const EncoderSpec& spec, const TransformerParams& tf, Var x0,
                      const std::vector<std::int64_t>& offsets, EncoderProbe* probe) {
    Var x = t.add(t.linear(x0, t.leaf(*tf.in_w), t.leaf(*tf.in_b)),
                  t.input(positional_encoding(offsets, spec.hidden, spec.pe_period_s)));
    const int dh = spec.hidden / spec.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& L : tf.layers) {
        Var a = affine_ln(t, x, *L.ln1_gain, *L.ln1_bias);
        Var q = t.linear(a, t.leaf(*L.wq), t.leaf(*L.bq));
        Var kk = t.matmul(a, t.leaf(*L.wk));
        Var v = t.linear(a, t.leaf(*L.wv), t.leaf(*L.bv));
        std::vector<Var> heads;
        for (int hd = 0; hd < spec.heads; ++hd) {
            const int c0 = hd * dh, c1 = (hd + 1) * dh;
            Var qh = t.slice_cols(q, c0, c1);
            Var kh = t.slice_cols(kk, c0, c1);
            Var vh = t.slice_cols(v, c0, c1);
            Var att = t.softmax_rows(t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt));
            if (probe) probe->attentions.push_back(t.val(att));
            heads.push_back(t.matmul(att, vh));
        }
        Var mha = t.linear(t.concat_cols(heads), t.leaf(*L.wo), t.leaf(*L.bo));
        x = t.add(x, mha);
        Var a2 = affine_ln(t, x, *L.ln2_gain, *L.ln2_bias);
        Var ff = t.linear(t.relu(t.linear(a2, t.leaf(*L.ffn_w1), t.leaf(*L.ffn_b1))),
                          t.leaf(*L.ffn_w2), t.leaf(*L.ffn_b2));
        x = t.add(x, ff);
    }
    return t.mean_rows(affine_ln(t, x, *tf.ln_f_gain, *tf.ln_f_bias));
}

Var encode_window(Tape& t, const EncoderSpec& spec, const WindowEncoder& we, const Tensor& x,
                  const std::vector<std::int64_t>& offsets, std::int64_t window_len,
                  EncoderProbe* probe) {
    if (x.cols != we.in_cols)
        throw std::invalid_argument("encoder: feature arity mismatch (got " +
                                    std::to_string(x.cols) + ", expected " +
                                    std::to_string(we.in_cols) + ")");
    Var xv = t.input(augment(x, offsets, window_len));
    Var pooled;
    if (spec.kind == EncoderKind::Lstm) {
        pooled = lstm_seq(t, xv, t.leaf(*we.lstm.w), t.leaf(*we.lstm.u), t.leaf(*we.lstm.b));
    } else {
        pooled = transformer_stack(t, spec, we.tf, xv, offsets, probe);
    }
    return t.linear(pooled, t.leaf(*we.proj_w), t.leaf(*we.proj_b));
}

}  // namespace

NodeEmbedding encode(Tape& t, const TypeEncoder& e, const sampler::NodeSample& s,
                     const sampler::WindowSpec& w, EncoderProbe* probe) {
    if (s.x_past.rows < 1) throw std::invalid_argument("encoder: empty past window");
    Var past = encode_window(t, e.spec, e.past, s.x_past, s.past_offsets, w.past_len, probe);
    Var fut;
    if (s.x_future.rows == 0) {
        fut = t.leaf(*e.future.null_vec);
    } else {
        fut = encode_window(t, e.spec, e.future, s.x_future, s.future_offsets, w.future_len,
                            probe);
    }
    NodeEmbedding out;
    out.h = t.concat_cols({past, fut});
    out.h_future = fut;
    return out;
}

}  // namespace tidegraph::enc
