#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tidegraph/events.hpp"
#include "tidegraph/graph.hpp"
#include "tidegraph/tensor.hpp"

namespace tidegraph::sampler {

using events::EventStore;
using events::NodeKey;
using events::Registry;
using ndiff::Tensor;

struct WindowSpec {
    std::int64_t past_len = 0;    // seconds, > 0
    std::int64_t future_len = 0;  // seconds, > 0
};

// One node's view of a snapshot at reference time t. Feature rows are raw
// (unnormalized) values in internal column order; offsets are event times
// relative to t in seconds (negative for past rows).
struct NodeSample {
    NodeKey node;
    Tensor x_past;    // ps x k, all columns
    Tensor x_future;  // fs x kf, known-future columns only (kf may be 0)
    Tensor y;         // fs x l for target nodes, 0 x l otherwise
    std::vector<std::int64_t> past_offsets;    // ps entries, in [-past_len, 0)
    std::vector<std::int64_t> future_offsets;  // fs entries, in [0, future_len)
};

struct Snapshot {
    std::int64_t t = 0;  // reference time
    std::vector<NodeSample> nodes;  // sorted by node key
    std::vector<graph::Edge> edges;
    bool empty() const { return nodes.empty(); }
    int node_index(const NodeKey& key) const;  // -1 when absent
};

// A node enters the snapshot iff it has at least one event in [t - past_len, t).
// Future rows come from [t, t + future_len); y is filled for nodes whose
// var_type is in `targets` (label columns, aligned with x_future by timestamp).
Snapshot sample_snapshot(const EventStore& store, std::int64_t t, const WindowSpec& w,
                         graph::TopologyMode mode, const std::set<std::string>& targets);

struct DtdgDataset {
    std::vector<Snapshot> snapshots;  // non-empty snapshots only, chronological
    WindowSpec window;
    graph::TopologyMode mode = graph::TopologyMode::FullyConnected;
    std::set<std::string> targets;
    std::int64_t spacing = 0;       // seconds between consecutive reference times
    int dropped_empty = 0;          // reference times that produced no nodes
    int dropped_boundary = 0;       // snapshots trimmed by chronological_split
    std::size_t size() const { return snapshots.size(); }
};

// N reference times t_j = a + j * ((b - a) / N), j = 0..N-1 (integer spacing).
// Empty snapshots are dropped and counted.
DtdgDataset sample_dtdg(const EventStore& store, int n_snapshots, std::int64_t a, std::int64_t b,
                        const WindowSpec& w, graph::TopologyMode mode,
                        const std::set<std::string>& targets);

struct SplitResult {
    DtdgDataset train;
    DtdgDataset val;
    DtdgDataset test;
};

// Chronological split by snapshot counts (floor for train/val, remainder to
// test). Leading snapshots of val/test whose past windows overlap the previous
// split's future windows are dropped and counted in dropped_boundary. Throws
// if any split ends up empty.
SplitResult chronological_split(const DtdgDataset& ds, double f_train, double f_val,
                                double f_test);

// Sidecar manifest describing a sampled dataset: sampling parameters, the
// source store digest, per-snapshot node/shape listing, and a content hash so
// a rerun against the same store can be verified byte-for-byte.
std::string dataset_manifest(const DtdgDataset& ds, const EventStore& store);
void write_dataset_manifest(const std::string& path, const DtdgDataset& ds,
                            const EventStore& store);

}  // namespace tidegraph::sampler
