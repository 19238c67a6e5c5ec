#include "tidegraph/decoders.hpp"

#include <stdexcept>
#include <vector>

#include "tidegraph/tensor.hpp"

namespace tidegraph::dec {

DecoderKind decoder_from_string(const std::string& s) {
    if (s == "fixed") return DecoderKind::FixedMlp;
    if (s == "dynamic") return DecoderKind::DynamicMlp;
    if (s == "none") return DecoderKind::None;
    throw std::invalid_argument("unknown decoder kind: " + s);
}

std::string to_string(DecoderKind k) {
    switch (k) {
        case DecoderKind::FixedMlp: return "fixed";
        case DecoderKind::DynamicMlp: return "dynamic";
        default: return "none";
    }
}

void DecoderSpec::validate() const {
    if (kind == DecoderKind::None) return;
    if (hidden1 < 1 || hidden2 < 1)
        throw std::invalid_argument("decoder: hidden widths must be positive");
    if (kind == DecoderKind::FixedMlp && max_fs < 1)
        throw std::invalid_argument("decoder: fixed head needs max_fs >= 1");
}

TypeDecoder make_decoder(ParamStore& store, const DecoderSpec& spec,
                         const std::string& var_type, int embed_size, int l, int kf) {
    spec.validate();
    if (spec.kind == DecoderKind::None)
        throw std::invalid_argument("decoder: cannot instantiate kind 'none'");
    if (embed_size < 2 || embed_size % 2 != 0)
        throw std::invalid_argument("decoder: embed_size must be even and positive");
    if (l < 1) throw std::invalid_argument("decoder: need at least one label column");
    if (kf < 0) throw std::invalid_argument("decoder: negative known-future arity");

    TypeDecoder d;
    d.spec = spec;
    d.var_type = var_type;
    d.l = l;
    d.kf = kf;
    d.in_cols = spec.kind == DecoderKind::FixedMlp ? embed_size
                                                   : embed_size + embed_size / 2 + kf;
    const int out_cols = spec.kind == DecoderKind::FixedMlp ? spec.max_fs * l : l;
    const std::string p = "dec." + var_type;
    d.w1 = &store.glorot(p + ".w1", d.in_cols, spec.hidden1);
    d.b1 = &store.zeros(p + ".b1", 1, spec.hidden1);
    d.w2 = &store.glorot(p + ".w2", spec.hidden1, spec.hidden2);
    d.b2 = &store.zeros(p + ".b2", 1, spec.hidden2);
    d.w3 = &store.glorot(p + ".w3", spec.hidden2, out_cols);
    d.b3 = &store.zeros(p + ".b3", 1, out_cols);
    return d;
}

namespace {

Var mlp(Tape& t, const TypeDecoder& d, Var x) {
    Var z1 = t.elu(t.linear(x, t.leaf(*d.w1), t.leaf(*d.b1)));
    Var z2 = t.elu(t.linear(z1, t.leaf(*d.w2), t.leaf(*d.b2)));
    return t.linear(z2, t.leaf(*d.w3), t.leaf(*d.b3));
}

}  // namespace

Var decode_fixed(Tape& t, const TypeDecoder& d, Var h, int fs) {
    if (d.spec.kind != DecoderKind::FixedMlp)
        throw std::invalid_argument("decode_fixed: decoder is not a fixed head");
    if (fs < 0 || fs > d.spec.max_fs)
        throw std::length_error("decode_fixed: fs " + std::to_string(fs) +
                                " outside [0, " + std::to_string(d.spec.max_fs) + "]");
    if (t.val(h).cols != d.in_cols)
        throw std::invalid_argument("decode_fixed: embedding width mismatch");
    if (fs == 0) return t.input(ndiff::Tensor(0, d.l));

    Var flat = mlp(t, d, h);  // 1 x (max_fs * l)
    std::vector<Var> rows;
    rows.reserve(static_cast<std::size_t>(fs));
    for (int r = 0; r < fs; ++r) rows.push_back(t.slice_cols(flat, r * d.l, (r + 1) * d.l));
    return t.concat_rows(rows);
}

Var decode_dynamic(Tape& t, const TypeDecoder& d, Var h, Var h_future, Var x_future) {
    if (d.spec.kind != DecoderKind::DynamicMlp)
        throw std::invalid_argument("decode_dynamic: decoder is not a dynamic head");
    const int fs = t.val(x_future).rows;
    if (t.val(x_future).cols != d.kf)
        throw std::invalid_argument("decode_dynamic: known-future arity mismatch");
    if (t.val(h).cols + t.val(h_future).cols + d.kf != d.in_cols)
        throw std::invalid_argument("decode_dynamic: embedding width mismatch");
    if (fs == 0) return t.input(ndiff::Tensor(0, d.l));

    // Broadcast the embeddings over the steps; rows stay independent, so this
    // equals per-step evaluation of the same function.
    const std::vector<int> rep(static_cast<std::size_t>(fs), 0);
    std::vector<Var> parts{t.gather_rows(h, rep), t.gather_rows(h_future, rep)};
    if (d.kf > 0) parts.push_back(x_future);
    return mlp(t, d, t.concat_cols(parts));
}

}  // namespace tidegraph::dec
