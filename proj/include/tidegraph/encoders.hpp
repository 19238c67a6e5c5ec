#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tidegraph/params.hpp"
#include "tidegraph/sampler.hpp"
#include "tidegraph/tape.hpp"

namespace tidegraph::enc {

using ndiff::Parameter;
using ndiff::ParamStore;
using ndiff::Tape;
using ndiff::Tensor;
using ndiff::Var;

enum class EncoderKind { Lstm, Transformer };

EncoderKind encoder_from_string(const std::string& s);  // "lstm" | "transformer"
std::string to_string(EncoderKind k);

// Architecture of one temporal encoder pair (past + future instance).
struct EncoderSpec {
    EncoderKind kind = EncoderKind::Lstm;
    int embed_size = 20;  // even; the output embedding length (halves: past | future)
    int hidden = 20;      // LSTM hidden width / Transformer model width
    int layers = 3;       // Transformer encoder layers
    int heads = 5;        // Transformer attention heads (hidden % heads == 0)
    int ffn = 80;         // Transformer feed-forward width
    double pe_period_s = 1800.0;  // time scale of the positional encoding

    void validate() const;
};

// Sequence LSTM as one fused tape node: runs the whole recurrence forward and
// plays the backward pass by hand. x: S x I, w: I x 4H, u: H x 4H, b: 1 x 4H,
// gate order [input, forget, cell, output]; returns the final hidden state
// (1 x H). Kept public so tests can pit it against an op-by-op composition.
Var lstm_seq(Tape& t, Var x, Var w, Var u, Var b);

struct LstmParams {
    Parameter* w = nullptr;
    Parameter* u = nullptr;
    Parameter* b = nullptr;
};

struct TransformerLayerParams {
    Parameter *ln1_gain = nullptr, *ln1_bias = nullptr;
    Parameter *wq = nullptr, *bq = nullptr;
    Parameter* wk = nullptr;  // no key bias: softmax shift-invariance makes
                              // it a structurally gradient-dead direction
    Parameter *wv = nullptr, *bv = nullptr;
    Parameter *wo = nullptr, *bo = nullptr;
    Parameter *ln2_gain = nullptr, *ln2_bias = nullptr;
    Parameter *ffn_w1 = nullptr, *ffn_b1 = nullptr;
    Parameter *ffn_w2 = nullptr, *ffn_b2 = nullptr;
};

struct TransformerParams {
    Parameter *in_w = nullptr, *in_b = nullptr;
    std::vector<TransformerLayerParams> layers;
    Parameter *ln_f_gain = nullptr, *ln_f_bias = nullptr;
};

// One window's encoder (either the past or the future instance).
struct WindowEncoder {
    int in_cols = 0;  // feature columns before the appended time-offset column
    LstmParams lstm;
    TransformerParams tf;
    Parameter *proj_w = nullptr, *proj_b = nullptr;  // hidden -> embed_size/2
    Parameter* null_vec = nullptr;  // future instance only: used when fs = 0
};

// Encoder pair for one var_type. Parameters live in the ParamStore under
// "enc.<var_type>.<past|future>.*" so different var_types never share state.
struct TypeEncoder {
    EncoderSpec spec;
    std::string var_type;
    WindowEncoder past;    // consumes x_past (k columns + offset)
    WindowEncoder future;  // consumes x_future (kf columns + offset)
};

TypeEncoder make_encoder(ParamStore& store, const EncoderSpec& spec,
                         const std::string& var_type, int k, int kf);

// Filled on demand with the per-layer, per-head attention matrices of the
// most recent transformer forward (row i = query i's weights over all rows).
struct EncoderProbe {
    std::vector<Tensor> attentions;
};

struct NodeEmbedding {
    Var h;         // 1 x embed_size — concat(past half, future half)
    Var h_future;  // 1 x embed_size/2 — the trailing half, kept for decoding
};

// Encode one node's sample: each window's rows are augmented with a trailing
// time-offset column (offset / window length), run through that window's
// encoder and projected to embed_size/2; an empty future window yields the
// learned null vector instead.
NodeEmbedding encode(Tape& t, const TypeEncoder& e, const sampler::NodeSample& s,
                     const sampler::WindowSpec& w, EncoderProbe* probe = nullptr);

}  // namespace tidegraph::enc
