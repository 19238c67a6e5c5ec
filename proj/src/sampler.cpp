#include "tidegraph/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "tidegraph/params.hpp"

namespace tidegraph::sampler {

int Snapshot::node_index(const NodeKey& key) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].node == key) return static_cast<int>(i);
    return -1;
}

Snapshot sample_snapshot(const EventStore& store, std::int64_t t, const WindowSpec& w,
                         graph::TopologyMode mode, const std::set<std::string>& targets) {
    if (w.past_len <= 0 || w.future_len <= 0)
        throw std::invalid_argument("sample_snapshot: window lengths must be positive");
    Snapshot snap;
    snap.t = t;
    for (const auto& key : store.node_keys()) {
        auto past = store.query_window(key, t - w.past_len, t);
        if (past.empty()) continue;  // presence requires at least one past event
        auto future = store.query_window(key, t, t + w.future_len);

        const auto& spec = store.registry().type(key.var_type);
        const int k = spec.k();
        const auto& kf_cols = spec.known_future_internal;
        const int kf = spec.kf();
        const int l = spec.l();
        const bool targeted = targets.count(key.var_type) > 0 && l > 0;

        NodeSample ns;
        ns.node = key;
        ns.x_past = Tensor::zeros(static_cast<int>(past.size()), k);
        ns.past_offsets.reserve(past.size());
        for (std::size_t r = 0; r < past.size(); ++r) {
            for (int c = 0; c < k; ++c) ns.x_past.at(static_cast<int>(r), c) = past[r].features[c];
            ns.past_offsets.push_back(past[r].timestamp - t);
        }
        const int fs = static_cast<int>(future.size());
        ns.x_future = Tensor::zeros(fs, kf);
        ns.y = Tensor::zeros(targeted ? fs : 0, l);
        ns.future_offsets.reserve(future.size());
        for (int r = 0; r < fs; ++r) {
            for (int c = 0; c < kf; ++c) ns.x_future.at(r, c) = future[r].features[kf_cols[c]];
            // labels sit in the trailing internal columns
            if (targeted)
                for (int c = 0; c < l; ++c) ns.y.at(r, c) = future[r].features[k - l + c];
            ns.future_offsets.push_back(future[r].timestamp - t);
        }
        snap.nodes.push_back(std::move(ns));
    }
    // node_keys() is sorted, so snap.nodes is sorted by key already
    std::vector<NodeKey> keys;
    keys.reserve(snap.nodes.size());
    for (const auto& n : snap.nodes) keys.push_back(n.node);
    snap.edges = graph::build_topology(keys, mode);
    return snap;
}

DtdgDataset sample_dtdg(const EventStore& store, int n_snapshots, std::int64_t a, std::int64_t b,
                        const WindowSpec& w, graph::TopologyMode mode,
                        const std::set<std::string>& targets) {
    if (n_snapshots < 1) throw std::invalid_argument("sample_dtdg: need at least one snapshot");
    if (b <= a) throw std::invalid_argument("sample_dtdg: empty time range");
    if (b - a < w.past_len + w.future_len)
        throw std::invalid_argument("sample_dtdg: range shorter than past_len + future_len");
    const std::int64_t spacing = (b - a) / n_snapshots;
    if (spacing < 1)
        throw std::invalid_argument("sample_dtdg: range too short for requested snapshot count");

    DtdgDataset ds;
    ds.window = w;
    ds.mode = mode;
    ds.targets = targets;
    ds.spacing = spacing;
    for (int j = 0; j < n_snapshots; ++j) {
        Snapshot s = sample_snapshot(store, a + j * spacing, w, mode, targets);
        if (s.empty()) {
            ++ds.dropped_empty;
            continue;
        }
        ds.snapshots.push_back(std::move(s));
    }
    return ds;
}

namespace {

// Drops leading snapshots of `later` whose past windows reach back into the
// future windows of the previous split (which extend to prev_last + future_len).
int trim_boundary(DtdgDataset& later, std::int64_t prev_last, const WindowSpec& w) {
    int dropped = 0;
    while (!later.snapshots.empty() &&
           later.snapshots.front().t - w.past_len < prev_last + w.future_len) {
        later.snapshots.erase(later.snapshots.begin());
        ++dropped;
    }
    return dropped;
}

}  // namespace

SplitResult chronological_split(const DtdgDataset& ds, double f_train, double f_val,
                                double f_test) {
    if (f_train <= 0 || f_val <= 0 || f_test <= 0)
        throw std::invalid_argument("chronological_split: fractions must be positive");
    if (std::fabs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw std::invalid_argument("chronological_split: fractions must sum to 1");

    const std::size_t n = ds.snapshots.size();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f_train));
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * f_val));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
        throw std::invalid_argument("chronological_split: a split would be empty");

    auto make = [&](std::size_t lo, std::size_t hi) {
        DtdgDataset part;
        part.window = ds.window;
        part.mode = ds.mode;
        part.targets = ds.targets;
        part.spacing = ds.spacing;
        part.snapshots.assign(ds.snapshots.begin() + static_cast<std::ptrdiff_t>(lo),
                              ds.snapshots.begin() + static_cast<std::ptrdiff_t>(hi));
        return part;
    };
    SplitResult r;
    r.train = make(0, n_train);
    r.val = make(n_train, n_train + n_val);
    r.test = make(n_train + n_val, n);

    r.val.dropped_boundary = trim_boundary(r.val, r.train.snapshots.back().t, ds.window);
    if (r.val.snapshots.empty())
        throw std::invalid_argument("chronological_split: validation split empty after boundary trim");
    r.test.dropped_boundary = trim_boundary(r.test, r.val.snapshots.back().t, ds.window);
    if (r.test.snapshots.empty())
        throw std::invalid_argument("chronological_split: test split empty after boundary trim");
    return r;
}

std::string dataset_manifest(const DtdgDataset& ds, const EventStore& store) {
    nlohmann::ordered_json j;
    j["store_digest"] = store.digest();
    j["past_len"] = ds.window.past_len;
    j["future_len"] = ds.window.future_len;
    j["topology"] = graph::topology_to_string(ds.mode);
    j["targets"] = ds.targets;
    j["spacing"] = ds.spacing;
    j["dropped_empty"] = ds.dropped_empty;
    j["dropped_boundary"] = ds.dropped_boundary;
    nlohmann::ordered_json snaps = nlohmann::ordered_json::array();
    std::uint64_t hash = 1469598103934665603ull;
    auto mix = [&hash](std::uint64_t x) { hash = ndiff::mix64(hash, x); };
    for (const auto& s : ds.snapshots) {
        nlohmann::ordered_json sj;
        sj["t"] = s.t;
        nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
        mix(static_cast<std::uint64_t>(s.t));
        for (const auto& nsamp : s.nodes) {
            nlohmann::ordered_json nj;
            nj["type"] = nsamp.node.var_type;
            nj["location"] = nsamp.node.location;
            nj["ps"] = nsamp.x_past.rows;
            nj["fs"] = nsamp.x_future.rows;
            nodes.push_back(nj);
            mix(ndiff::fnv1a(nsamp.node.var_type + "/" + nsamp.node.location));
            mix(static_cast<std::uint64_t>(nsamp.x_past.rows));
            mix(static_cast<std::uint64_t>(nsamp.x_future.rows));
        }
        sj["nodes"] = nodes;
        sj["edge_count"] = s.edges.size();
        snaps.push_back(sj);
    }
    j["snapshots"] = snaps;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    j["content_hash"] = std::string(buf);
    return j.dump(2) + "\n";
}

void write_dataset_manifest(const std::string& path, const DtdgDataset& ds,
                            const EventStore& store) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << dataset_manifest(ds, store);
}

}  // namespace tidegraph::sampler
