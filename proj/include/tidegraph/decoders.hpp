#pragma once

#include <string>

#include "tidegraph/params.hpp"
#include "tidegraph/tape.hpp"

namespace tidegraph::dec {

using ndiff::Parameter;
using ndiff::ParamStore;
using ndiff::Tape;
using ndiff::Var;

enum class DecoderKind { FixedMlp, DynamicMlp, None };

DecoderKind decoder_from_string(const std::string& s);  // "fixed" | "dynamic" | "none"
std::string to_string(DecoderKind k);

struct DecoderSpec {
    DecoderKind kind = DecoderKind::None;
    int hidden1 = 64;
    int hidden2 = 64;
    int max_fs = 0;  // FixedMlp only: upper bound on forecast rows, fitted on training data

    void validate() const;
};

// Decoder head for one var_type. Two hidden ELU layers feed a linear output:
//   FixedMlp   : embedding (1 x embed) -> max_fs * l values; the first fs
//                rows are the forecast, later rows never enter any loss.
//   DynamicMlp : per future step, concat(h, h_future, x_future_row)
//                (embed + embed/2 + kf wide) -> l values; output length
//                simply tracks the number of future rows.
struct TypeDecoder {
    DecoderSpec spec;
    std::string var_type;
    int l = 0;        // label arity (output columns)
    int kf = 0;       // per-step known-future arity (DynamicMlp)
    int in_cols = 0;  // MLP input width
    Parameter *w1 = nullptr, *b1 = nullptr;
    Parameter *w2 = nullptr, *b2 = nullptr;
    Parameter *w3 = nullptr, *b3 = nullptr;
};

// Registers "dec.<var_type>.*" parameters; var_types never share state.
TypeDecoder make_decoder(ParamStore& store, const DecoderSpec& spec,
                         const std::string& var_type, int embed_size, int l, int kf);

// h: 1 x embed_size. Returns fs x l (fs <= spec.max_fs, hard error otherwise).
Var decode_fixed(Tape& t, const TypeDecoder& d, Var h, int fs);

// h: 1 x embed_size, h_future: 1 x embed_size/2, x_future: fs x kf.
// Returns fs x l; every row is the same per-step function of its inputs.
Var decode_dynamic(Tape& t, const TypeDecoder& d, Var h, Var h_future, Var x_future);

}  // namespace tidegraph::dec
