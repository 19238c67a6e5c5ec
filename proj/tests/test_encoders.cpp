#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "tidegraph/encoders.hpp"
#include "tidegraph/params.hpp"
#include "tidegraph/sampler.hpp"
#include "tidegraph/tape.hpp"
#include "tidegraph/tensor.hpp"

using namespace tidegraph;
using enc::EncoderKind;
using enc::EncoderSpec;
using enc::TypeEncoder;
using ndiff::ParamStore;
using ndiff::Tape;
using ndiff::Tensor;
using ndiff::Var;
using sampler::NodeSample;
using sampler::WindowSpec;

namespace {

constexpr double kGradTol = 1e-5;

Tensor random_tensor(int r, int c, std::uint64_t seed) {
    Tensor x(r, c);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (double& v : x.v) v = g(rng);
    return x;
}

// Sample with ps past rows (k features) and fs future rows (kf features),
// offsets spread over the windows.
NodeSample make_sample(int ps, int k, int fs, int kf, const WindowSpec& w,
                       std::uint64_t seed) {
    NodeSample s;
    s.node = {"x", "st"};
    s.x_past = random_tensor(ps, k, seed);
    s.x_future = random_tensor(fs, kf, seed + 1);
    for (int r = 0; r < ps; ++r)
        s.past_offsets.push_back(-w.past_len + (r * w.past_len) / (ps + 1) + 7);
    for (int r = 0; r < fs; ++r)
        s.future_offsets.push_back((r * w.future_len) / (fs + 1) + 11);
    return s;
}

double weighted_sum(Tape& t, Var h, std::uint64_t seed, bool do_backward) {
    const Tensor& hv = t.val(h);
    Var wcol = t.input(random_tensor(hv.cols, 1, seed));
    Var loss = t.sum_all(t.matmul(h, wcol));
    const double out = t.val(loss).item();
    if (do_backward) t.backward(loss);
    return out;
}

EncoderSpec small_lstm() {
    EncoderSpec sp;
    sp.kind = EncoderKind::Lstm;
    sp.embed_size = 8;
    sp.hidden = 6;
    return sp;
}

EncoderSpec small_transformer() {
    EncoderSpec sp;
    sp.kind = EncoderKind::Transformer;
    sp.embed_size = 8;
    sp.hidden = 8;
    sp.layers = 2;
    sp.heads = 2;
    sp.ffn = 16;
    return sp;
}

// Plain-arithmetic row helpers for the hand-rolled oracles.
std::vector<double> row_of(const Tensor& t, int r) {
    std::vector<double> out(static_cast<std::size_t>(t.cols));
    for (int c = 0; c < t.cols; ++c) out[static_cast<std::size_t>(c)] = t.at(r, c);
    return out;
}

std::vector<double> affine_map(const std::vector<double>& x, const Tensor& w, const Tensor& b) {
    REQUIRE(static_cast<int>(x.size()) == w.rows);
    std::vector<double> out(static_cast<std::size_t>(w.cols), 0.0);
    for (int j = 0; j < w.cols; ++j) {
        double acc = b.at(0, j);
        for (int i = 0; i < w.rows; ++i) acc += x[static_cast<std::size_t>(i)] * w.at(i, j);
        out[static_cast<std::size_t>(j)] = acc;
    }
    return out;
}

std::vector<double> ln_row(const std::vector<double>& x, const Tensor& gain, const Tensor& bias,
                           double eps) {
    const auto n = static_cast<double>(x.size());
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = (x[i] - mu) * inv * gain.at(0, static_cast<int>(i)) +
                 bias.at(0, static_cast<int>(i));
    return out;
}

}  // namespace

TEST_CASE("spec validation catches bad encoder shapes") {
    EncoderSpec sp;
    CHECK_NOTHROW(sp.validate());  // defaults: embed 20, width 20, 5 heads, 3 layers

    sp.embed_size = 7;
    CHECK_THROWS(sp.validate());
    sp = EncoderSpec{};
    sp.kind = EncoderKind::Transformer;
    sp.heads = 3;  // 20 % 3 != 0
    CHECK_THROWS(sp.validate());
    sp = EncoderSpec{};
    sp.hidden = 0;
    CHECK_THROWS(sp.validate());
    CHECK(enc::encoder_from_string("lstm") == EncoderKind::Lstm);
    CHECK(enc::encoder_from_string("transformer") == EncoderKind::Transformer);
    CHECK_THROWS(enc::encoder_from_string("gru"));
}

TEST_CASE("fused sequence unit agrees with an op-by-op composition") {
    const int S = 4, I = 3, H = 5;
    const Tensor x = random_tensor(S, I, 91);

    ParamStore ps_a(7), ps_b(7);
    auto& wa = ps_a.glorot("w", I, 4 * H);
    auto& ua = ps_a.glorot("u", H, 4 * H);
    auto& ba = ps_a.glorot("b", 1, 4 * H);
    auto& wb = ps_b.glorot("w", I, 4 * H);
    auto& ub = ps_b.glorot("u", H, 4 * H);
    auto& bb = ps_b.glorot("b", 1, 4 * H);
    REQUIRE(wa.value.v == wb.value.v);  // same (seed, name) -> same init

    // fused
    Tape ta;
    Var ha = enc::lstm_seq(ta, ta.input(x), ta.leaf(wa), ta.leaf(ua), ta.leaf(ba));
    const double la = weighted_sum(ta, ha, 17, true);

    // op-by-op: same recurrence built from primitive tape operations
    Tape tb;
    Var xv = tb.input(x);
    Var wv = tb.leaf(wb), uv = tb.leaf(ub), bv = tb.leaf(bb);
    Var h = tb.input(Tensor(1, H)), c = tb.input(Tensor(1, H));
    for (int s = 0; s < S; ++s) {
        Var xs = tb.slice_rows(xv, s, s + 1);
        Var pre = tb.add(tb.add(tb.matmul(xs, wv), tb.matmul(h, uv)), bv);
        Var gi = tb.sigmoid(tb.slice_cols(pre, 0, H));
        Var gf = tb.sigmoid(tb.slice_cols(pre, H, 2 * H));
        Var gg = tb.tanh(tb.slice_cols(pre, 2 * H, 3 * H));
        Var go = tb.sigmoid(tb.slice_cols(pre, 3 * H, 4 * H));
        c = tb.add(tb.mul(gf, c), tb.mul(gi, gg));
        h = tb.mul(go, tb.tanh(c));
    }
    const double lb = weighted_sum(tb, h, 17, true);

    CHECK(la == doctest::Approx(lb).epsilon(1e-12));
    for (int j = 0; j < H; ++j)
        CHECK(ta.val(ha).at(0, j) == doctest::Approx(tb.val(h).at(0, j)).epsilon(1e-12));
    for (auto [pa, pb] : {std::pair{&wa, &wb}, {&ua, &ub}, {&ba, &bb}}) {
        REQUIRE(pa->grad.v.size() == pb->grad.v.size());
        for (std::size_t i = 0; i < pa->grad.v.size(); ++i)
            CHECK(pa->grad.v[i] ==
                  doctest::Approx(pb->grad.v[i]).epsilon(1e-10).scale(1.0));
    }
}

TEST_CASE("single past row reduces to one recurrence step plus projection") {
    const WindowSpec w{1800, 900};
    ParamStore store(3);
    const EncoderSpec sp = small_lstm();
    TypeEncoder e = enc::make_encoder(store, sp, "x", 2, 1);

    NodeSample s = make_sample(1, 2, 1, 1, w, 5);
    Tape t;
    auto emb = enc::encode(t, e, s, w);
    const Tensor& h = t.val(emb.h);
    REQUIRE(h.cols == sp.embed_size);

    // Hand-rolled cell equations on the augmented input row.
    const int H = sp.hidden;
    std::vector<double> aug = row_of(s.x_past, 0);
    aug.push_back(static_cast<double>(s.past_offsets[0]) / static_cast<double>(w.past_len));
    const auto pre = affine_map(aug, e.past.lstm.w->value, e.past.lstm.b->value);
    // initial hidden state is zero, so the recurrent term drops out
    std::vector<double> h1(static_cast<std::size_t>(H));
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (int j = 0; j < H; ++j) {
        const double gi = sig(pre[static_cast<std::size_t>(j)]);
        const double gf = sig(pre[static_cast<std::size_t>(H + j)]);
        const double gg = std::tanh(pre[static_cast<std::size_t>(2 * H + j)]);
        const double go = sig(pre[static_cast<std::size_t>(3 * H + j)]);
        (void)gf;  // c0 = 0: the forget path contributes nothing on step one
        h1[static_cast<std::size_t>(j)] = go * std::tanh(gi * gg);
    }
    const auto past_half = affine_map(h1, e.past.proj_w->value, e.past.proj_b->value);
    for (int j = 0; j < sp.embed_size / 2; ++j)
        CHECK(h.at(0, j) == doctest::Approx(past_half[static_cast<std::size_t>(j)])
                                .epsilon(1e-12));
}

TEST_CASE("empty future window falls back to the learned null vector") {
    const WindowSpec w{3600, 1800};
    for (const EncoderSpec& sp : {small_lstm(), small_transformer()}) {
        ParamStore store(11);
        TypeEncoder e = enc::make_encoder(store, sp, "x", 3, 2);
        // make the null vector distinctive so equality is meaningful
        for (int j = 0; j < sp.embed_size / 2; ++j)
            e.future.null_vec->value.at(0, j) = 0.25 * (j + 1);

        NodeSample s = make_sample(3, 3, 0, 2, w, 21);
        REQUIRE(s.x_future.rows == 0);
        Tape t;
        auto emb = enc::encode(t, e, s, w);
        const Tensor& h = t.val(emb.h);
        const Tensor& hf = t.val(emb.h_future);
        for (int j = 0; j < sp.embed_size / 2; ++j) {
            CHECK(h.at(0, sp.embed_size / 2 + j) == e.future.null_vec->value.at(0, j));
            CHECK(hf.at(0, j) == e.future.null_vec->value.at(0, j));
        }

        // and the null vector is trainable: it receives gradient when used
        store.zero_grads();
        Tape t2;
        auto emb2 = enc::encode(t2, e, s, w);
        weighted_sum(t2, emb2.h, 33, true);
        CHECK(e.future.null_vec->grad.max_abs() > 0.0);
    }
}

TEST_CASE("repeating the last row changes the embedding") {
    const WindowSpec w{3600, 1800};
    for (const EncoderSpec& sp : {small_lstm(), small_transformer()}) {
        ParamStore store(13);
        TypeEncoder e = enc::make_encoder(store, sp, "x", 2, 1);
        NodeSample s = make_sample(3, 2, 2, 1, w, 29);

        NodeSample s2 = s;
        s2.x_past = Tensor(4, 2);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 2; ++c) s2.x_past.at(r, c) = s.x_past.at(r, c);
        for (int c = 0; c < 2; ++c) s2.x_past.at(3, c) = s.x_past.at(2, c);
        s2.past_offsets.push_back(s.past_offsets.back());

        Tape t1, t2;
        const Tensor h1 = t1.val(enc::encode(t1, e, s, w).h);
        const Tensor h2 = t2.val(enc::encode(t2, e, s2, w).h);
        double diff = 0.0;
        for (int j = 0; j < sp.embed_size; ++j)
            diff = std::max(diff, std::fabs(h1.at(0, j) - h2.at(0, j)));
        CHECK(diff > 1e-9);
    }
}

TEST_CASE("attention encoder is invariant to row order when offsets travel along") {
    const WindowSpec w{7200, 3600};
    ParamStore store(17);
    const EncoderSpec sp = small_transformer();
    TypeEncoder e = enc::make_encoder(store, sp, "x", 3, 2);
    NodeSample s = make_sample(5, 3, 3, 2, w, 41);

    const std::vector<int> perm{3, 0, 4, 2, 1};
    NodeSample sp_ = s;
    sp_.x_past = Tensor(5, 3);
    sp_.past_offsets.clear();
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 3; ++c)
            sp_.x_past.at(r, c) = s.x_past.at(perm[static_cast<std::size_t>(r)], c);
        sp_.past_offsets.push_back(s.past_offsets[static_cast<std::size_t>(
            perm[static_cast<std::size_t>(r)])]);
    }

    Tape t1, t2;
    const Tensor h1 = t1.val(enc::encode(t1, e, s, w).h);
    const Tensor h2 = t2.val(enc::encode(t2, e, sp_, w).h);
    for (int j = 0; j < sp.embed_size; ++j)
        CHECK(h1.at(0, j) == doctest::Approx(h2.at(0, j)).epsilon(1e-12).scale(1.0));
}

TEST_CASE("single-row attention encoder matches a hand-rolled token oracle") {
    const WindowSpec w{3600, 1800};
    ParamStore store(19);
    const EncoderSpec sp = small_transformer();
    TypeEncoder e = enc::make_encoder(store, sp, "x", 2, 1);
    NodeSample s = make_sample(1, 2, 0, 1, w, 47);

    Tape t;
    auto emb = enc::encode(t, e, s, w);
    const Tensor& h = t.val(emb.h);

    // Oracle: with one token every attention matrix is the scalar 1, so each
    // head returns its value slice and the multi-head output is v * wo + bo.
    const double eps = 1e-5;
    std::vector<double> aug = row_of(s.x_past, 0);
    aug.push_back(static_cast<double>(s.past_offsets[0]) / static_cast<double>(w.past_len));
    std::vector<double> z = affine_map(aug, e.past.tf.in_w->value, e.past.tf.in_b->value);
    const double pos = static_cast<double>(s.past_offsets[0]) / sp.pe_period_s;
    for (int i = 0; 2 * i < sp.hidden; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(sp.hidden));
        z[static_cast<std::size_t>(2 * i)] += std::sin(pos * freq);
        if (2 * i + 1 < sp.hidden) z[static_cast<std::size_t>(2 * i + 1)] += std::cos(pos * freq);
    }
    for (const auto& L : e.past.tf.layers) {
        const auto a = ln_row(z, L.ln1_gain->value, L.ln1_bias->value, eps);
        const auto v = affine_map(a, L.wv->value, L.bv->value);
        const auto mha = affine_map(v, L.wo->value, L.bo->value);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += mha[i];
        auto a2 = ln_row(z, L.ln2_gain->value, L.ln2_bias->value, eps);
        auto f1 = affine_map(a2, L.ffn_w1->value, L.ffn_b1->value);
        for (double& vv : f1) vv = std::max(0.0, vv);
        const auto f2 = affine_map(f1, L.ffn_w2->value, L.ffn_b2->value);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += f2[i];
    }
    const auto zf = ln_row(z, e.past.tf.ln_f_gain->value, e.past.tf.ln_f_bias->value, eps);
    const auto past_half = affine_map(zf, e.past.proj_w->value, e.past.proj_b->value);
    for (int j = 0; j < sp.embed_size / 2; ++j)
        CHECK(h.at(0, j) == doctest::Approx(past_half[static_cast<std::size_t>(j)])
                                .epsilon(1e-10).scale(1.0));
}

TEST_CASE("attention rows are probability distributions") {
    const WindowSpec w{7200, 3600};
    ParamStore store(23);
    const EncoderSpec sp = small_transformer();
    TypeEncoder e = enc::make_encoder(store, sp, "x", 3, 2);
    NodeSample s = make_sample(6, 3, 4, 2, w, 53);

    Tape t;
    enc::EncoderProbe probe;
    enc::encode(t, e, s, w, &probe);
    // layers x heads matrices for the past window and again for the future
    REQUIRE(probe.attentions.size() ==
            static_cast<std::size_t>(2 * sp.layers * sp.heads));
    for (const Tensor& att : probe.attentions) {
        CHECK(att.rows == att.cols);
        for (int r = 0; r < att.rows; ++r) {
            double sum = 0.0;
            for (int c = 0; c < att.cols; ++c) {
                sum += att.at(r, c);
                CHECK(att.at(r, c) >= 0.0);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("output length is fixed regardless of sequence lengths") {
    const WindowSpec w{3600, 1800};
    for (const EncoderSpec& sp : {small_lstm(), small_transformer()}) {
        ParamStore store(29);
        TypeEncoder e = enc::make_encoder(store, sp, "x", 2, 0);  // timing-only future
        for (int ps : {1, 2, 5}) {
            for (int fs : {0, 1, 3}) {
                NodeSample s = make_sample(ps, 2, fs, 0, w, 59 + ps * 10 + fs);
                Tape t;
                auto emb = enc::encode(t, e, s, w);
                CHECK(t.val(emb.h).rows == 1);
                CHECK(t.val(emb.h).cols == sp.embed_size);
                CHECK(t.val(emb.h_future).cols == sp.embed_size / 2);
            }
        }
    }
}

TEST_CASE("gradients reach every parameter and match finite differences") {
    const WindowSpec w{3600, 1800};

    SUBCASE("recurrent encoder") {
        ParamStore store(31);
        TypeEncoder e = enc::make_encoder(store, small_lstm(), "x", 2, 1);
        NodeSample s = make_sample(3, 2, 2, 1, w, 61);
        auto loss_fn = [&](bool grad) {
            Tape t;
            auto emb = enc::encode(t, e, s, w);
            return weighted_sum(t, emb.h, 67, grad);
        };
        const auto res = ndiff::grad_check(store, loss_fn, 6);
        CAPTURE(res.worst_param);
        CHECK(res.max_rel_err < kGradTol);

        store.zero_grads();
        loss_fn(true);
        for (const auto* p : static_cast<const ParamStore&>(store).ordered()) {
            if (p->name == "enc.x.future.null") continue;  // unused when fs > 0
            CAPTURE(p->name);
            CHECK(p->grad.max_abs() > 0.0);
        }
    }

    SUBCASE("attention encoder") {
        ParamStore store(37);
        TypeEncoder e = enc::make_encoder(store, small_transformer(), "x", 2, 1);
        NodeSample s = make_sample(3, 2, 2, 1, w, 71);
        auto loss_fn = [&](bool grad) {
            Tape t;
            auto emb = enc::encode(t, e, s, w);
            return weighted_sum(t, emb.h, 73, grad);
        };
        const auto res = ndiff::grad_check(store, loss_fn, 4);
        CAPTURE(res.worst_param);
        CHECK(res.max_rel_err < kGradTol);

        store.zero_grads();
        loss_fn(true);
        for (const auto* p : static_cast<const ParamStore&>(store).ordered()) {
            if (p->name == "enc.x.future.null") continue;
            CAPTURE(p->name);
            CHECK(p->grad.max_abs() > 0.0);
        }
    }
}

TEST_CASE("different variable types get disjoint parameter sets") {
    ParamStore store(41);
    const EncoderSpec sp = small_lstm();
    enc::make_encoder(store, sp, "alpha", 2, 1);
    const std::size_t one = static_cast<const ParamStore&>(store).ordered().size();
    enc::make_encoder(store, sp, "beta", 2, 1);
    CHECK(static_cast<const ParamStore&>(store).ordered().size() == 2 * one);
    CHECK(store.contains("enc.alpha.past.w"));
    CHECK(store.contains("enc.beta.past.w"));
    // same spec twice under one type must be rejected, not silently shared
    CHECK_THROWS(enc::make_encoder(store, sp, "alpha", 2, 1));

    // mismatched feature arity is refused at encode time
    const WindowSpec w{3600, 1800};
    ParamStore store2(43);
    TypeEncoder e = enc::make_encoder(store2, sp, "x", 3, 1);
    NodeSample s = make_sample(2, 2, 1, 1, w, 79);  // 2 cols, encoder expects 3
    Tape t;
    CHECK_THROWS(enc::encode(t, e, s, w));
}
