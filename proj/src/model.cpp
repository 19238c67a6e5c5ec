#include "tidegraph/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace tidegraph::model {

void ModelConfig::validate() const {
    encoder.validate();
    if (gnn_blocks < 0) throw std::invalid_argument("model: negative block count");
    if (decoder_hidden1 < 1 || decoder_hidden2 < 1)
        throw std::invalid_argument("model: decoder widths must be positive");
}

ForecastModel::ForecastModel(events::Registry registry, ModelConfig cfg)
    : registry_(std::move(registry)), cfg_(cfg), params_(cfg.param_seed) {
    cfg_.validate();
    for (const std::string& name : registry_.type_names()) {
        const auto& spec = registry_.type(name);
        encoders_.emplace(name, enc::make_encoder(params_, cfg_.encoder, name, spec.k(),
                                                  spec.kf()));
    }
    // Always registered, even when bypassed, so parameter initialization and
    // checkpoints line up across ablation runs.
    gnn_ = graph::make_gnn_stack(params_, cfg_.gnn_blocks, cfg_.encoder.embed_size,
                                 cfg_.conv);
}

void ForecastModel::fit(const events::EventStore& store,
                        const sampler::DtdgDataset& train_split) {
    if (train_split.snapshots.empty())
        throw std::invalid_argument("model: cannot fit on an empty train split");

    const std::int64_t t0 = train_split.snapshots.front().t - train_split.window.past_len;
    const std::int64_t t1 = train_split.snapshots.back().t + train_split.window.future_len;
    events::NormStats norm = store.fit_normalization(t0, t1);

    std::map<std::string, int> max_fs;
    for (const auto& snap : train_split.snapshots)
        for (const auto& node : snap.nodes) {
            const auto& spec = registry_.type(node.node.var_type);
            if (dec::decoder_from_string(spec.decoder) == dec::DecoderKind::FixedMlp) {
                int& m = max_fs[node.node.var_type];
                m = std::max(m, node.x_future.rows);
            }
        }
    for (auto& [ty, m] : max_fs) m = std::max(m, 1);

    load_fitted(std::move(norm), std::move(max_fs));
}

void ForecastModel::load_fitted(events::NormStats norm, std::map<std::string, int> max_fs) {
    if (fitted_) throw std::logic_error("model: already fitted");
    norm_ = std::move(norm);
    max_fs_ = std::move(max_fs);

    for (const std::string& name : registry_.type_names()) {
        const auto& spec = registry_.type(name);
        const auto kind = dec::decoder_from_string(spec.decoder);
        if (kind == dec::DecoderKind::None) continue;
        if (spec.l() < 1)
            throw std::invalid_argument("model: decoded var_type " + name + " has no labels");
        dec::DecoderSpec ds;
        ds.kind = kind;
        ds.hidden1 = cfg_.decoder_hidden1;
        ds.hidden2 = cfg_.decoder_hidden2;
        if (kind == dec::DecoderKind::FixedMlp) {
            auto it = max_fs_.find(name);
            ds.max_fs = it == max_fs_.end() ? 1 : it->second;
            max_fs_[name] = ds.max_fs;
        }
        decoders_.emplace(name, dec::make_decoder(params_, ds, name, cfg_.encoder.embed_size,
                                                  spec.l(), spec.kf()));
    }
    fitted_ = true;
}

namespace {

Tensor normalized_past(const events::NormStats& norm, const events::NodeKey& node,
                       const Tensor& x) {
    Tensor out = x;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out.at(r, c) = norm.normalize(node, c, x.at(r, c));
    return out;
}

Tensor normalized_future(const events::NormStats& norm, const events::VarTypeSpec& spec,
                         const events::NodeKey& node, const Tensor& x) {
    Tensor out = x;
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c)
            out.at(r, c) = norm.normalize(node, spec.known_future_internal[static_cast<
                                              std::size_t>(c)],
                                          x.at(r, c));
    return out;
}

Tensor normalized_labels(const events::NormStats& norm, const events::VarTypeSpec& spec,
                         const events::NodeKey& node, const Tensor& y) {
    Tensor out = y;
    const int base = spec.k() - spec.l();
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c)
            out.at(r, c) = norm.normalize(node, base + c, y.at(r, c));
    return out;
}

}  // namespace

std::vector<TargetForecast> ForecastModel::forward(Tape& t, const sampler::Snapshot& snap,
                                                   const sampler::WindowSpec& window,
                                                   const std::set<std::string>& targets) const {
    if (!fitted_) throw std::logic_error("model: forward before fit");
    std::vector<TargetForecast> out;
    if (snap.nodes.empty()) return out;

    std::vector<enc::NodeEmbedding> emb;
    std::vector<Var> rows;
    emb.reserve(snap.nodes.size());
    for (const auto& s : snap.nodes) {
        sampler::NodeSample ns = s;
        const auto& spec = registry_.type(s.node.var_type);
        ns.x_past = normalized_past(norm_, s.node, s.x_past);
        ns.x_future = normalized_future(norm_, spec, s.node, s.x_future);
        emb.push_back(enc::encode(t, encoders_.at(s.node.var_type), ns, window));
        rows.push_back(emb.back().h);
    }
    Var h = t.concat_rows(rows);
    if (!cfg_.bypass_gnn && cfg_.gnn_blocks > 0) h = graph::gnn_forward(t, h, snap.edges, gnn_);

    for (std::size_t i = 0; i < snap.nodes.size(); ++i) {
        const auto& s = snap.nodes[i];
        if (targets.count(s.node.var_type) == 0) continue;
        auto dit = decoders_.find(s.node.var_type);
        if (dit == decoders_.end()) continue;
        const auto& spec = registry_.type(s.node.var_type);

        TargetForecast tf;
        tf.node_index = static_cast<int>(i);
        tf.node = s.node;
        tf.fs = s.x_future.rows;
        tf.l = spec.l();
        tf.y_raw = s.y;
        tf.y = normalized_labels(norm_, spec, s.node, s.y);

        Var hi = t.slice_rows(h, static_cast<int>(i), static_cast<int>(i) + 1);
        if (dit->second.spec.kind == dec::DecoderKind::FixedMlp) {
            tf.y_hat = dec::decode_fixed(t, dit->second, hi, tf.fs);
        } else {
            Var xf = t.input(normalized_future(norm_, spec, s.node, s.x_future));
            tf.y_hat = dec::decode_dynamic(t, dit->second, hi, emb[i].h_future, xf);
        }
        out.push_back(std::move(tf));
    }
    return out;
}

Tensor ForecastModel::denormalize_labels(const events::NodeKey& node,
                                         const Tensor& y_norm) const {
    const auto& spec = registry_.type(node.var_type);
    Tensor out = y_norm;
    const int base = spec.k() - spec.l();
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c)
            out.at(r, c) = norm_.denormalize(node, base + c, y_norm.at(r, c));
    return out;
}

}  // namespace tidegraph::model
