// Tests for snapshot sampling: window construction against a brute-force
// filter oracle, uniform reference spacing, chronological splitting with
// leakage gaps, topology wiring, and manifest determinism.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "tidegraph/sampler.hpp"

using namespace tidegraph;
using namespace tidegraph::sampler;
using events::Event;
using events::EventStore;
using events::NodeKey;
using events::Registry;

namespace {

const char* kRegistryJson = R"({
  "types": [
    {"name": "current", "columns": ["u_east", "v_north"],
     "labels": ["u_east", "v_north"], "decoder": "fixed"},
    {"name": "ssh", "columns": ["height", "astro_tide", "sin_tod", "cos_tod"],
     "labels": ["height"], "known_future": ["astro_tide", "sin_tod", "cos_tod"],
     "decoder": "dynamic"},
    {"name": "wind", "columns": ["u_east", "v_north"]}
  ],
  "nodes": [
    {"type": "current", "location": "stA"}, {"type": "current", "location": "stB"},
    {"type": "ssh", "location": "stA"},     {"type": "ssh", "location": "stB"},
    {"type": "wind", "location": "stA"},    {"type": "wind", "location": "stB"}
  ]
})";

Registry test_registry() { return Registry::from_json_text(kRegistryJson); }

// Random store over the six registered nodes; returns the raw event list too
// so oracles can scan it independently.
std::pair<EventStore, std::vector<Event>> random_store(uint64_t seed, int events_per_node = 40,
                                                       int64_t horizon = 100000) {
    Registry reg = test_registry();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int64_t> ts(0, horizon);
    std::uniform_real_distribution<double> val(-3.0, 3.0);
    std::vector<Event> evs;
    for (const auto& key : reg.nodes()) {
        std::set<int64_t> used;
        const int k = reg.type(key.var_type).k();
        for (int i = 0; i < events_per_node; ++i) {
            int64_t t = ts(rng);
            if (!used.insert(t).second) continue;
            std::vector<double> feat;
            for (int c = 0; c < k; ++c) feat.push_back(val(rng));
            evs.push_back(Event{key, t, feat});
        }
    }
    return {EventStore::from_events(reg, evs), evs};
}

const std::set<std::string> kTargets = {"current", "ssh"};

}  // namespace

TEST_CASE("snapshots match the brute-force filter oracle") {
    std::mt19937_64 rng(31337);
    std::uniform_int_distribution<int64_t> tpick(1000, 99000);
    for (int trial = 0; trial < 200; ++trial) {
        auto [store, evs] = random_store(1000 + static_cast<uint64_t>(trial), 30);
        const int64_t t = tpick(rng);
        const WindowSpec w{5000, 3000};
        Snapshot snap = sample_snapshot(store, t, w, graph::TopologyMode::FullyConnected,
                                        kTargets);
        auto want = oracles::snapshot_by_filter(evs, store.registry(), t, w.past_len,
                                                w.future_len, kTargets);
        REQUIRE(snap.nodes.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i) {
            const NodeSample& got = snap.nodes[i];
            const oracles::NodeRef& ref = want[i];
            REQUIRE(got.node == ref.node);
            REQUIRE(got.x_past.rows == static_cast<int>(ref.x_past.size()));
            REQUIRE(got.x_future.rows == static_cast<int>(ref.x_future.size()));
            REQUIRE(got.y.rows == static_cast<int>(ref.y.size()));
            CHECK(got.past_offsets == ref.past_offsets);
            CHECK(got.future_offsets == ref.future_offsets);
            for (int r = 0; r < got.x_past.rows; ++r)
                for (int c = 0; c < got.x_past.cols; ++c)
                    CHECK(got.x_past.at(r, c) ==
                          ref.x_past[static_cast<size_t>(r)][static_cast<size_t>(c)]);
            for (int r = 0; r < got.x_future.rows; ++r)
                for (int c = 0; c < got.x_future.cols; ++c)
                    CHECK(got.x_future.at(r, c) ==
                          ref.x_future[static_cast<size_t>(r)][static_cast<size_t>(c)]);
            for (int r = 0; r < got.y.rows; ++r)
                for (int c = 0; c < got.y.cols; ++c)
                    CHECK(got.y.at(r, c) ==
                          ref.y[static_cast<size_t>(r)][static_cast<size_t>(c)]);
        }
    }
}

TEST_CASE("snapshot construction basics") {
    Registry reg = test_registry();
    const NodeKey cur{"current", "stA"};
    const NodeKey wind{"wind", "stA"};

    SUBCASE("store with events only after t gives an empty snapshot") {
        EventStore s = EventStore::from_events(
            reg, {Event{cur, 5000, {1, 1}}, Event{cur, 6000, {2, 2}}});
        Snapshot snap = sample_snapshot(s, 1000, {500, 500},
                                        graph::TopologyMode::FullyConnected, kTargets);
        CHECK(snap.empty());
    }
    SUBCASE("counts: 3 past and 2 future events") {
        EventStore s = EventStore::from_events(
            reg, {Event{cur, 100, {1, 1}}, Event{cur, 200, {2, 2}}, Event{cur, 300, {3, 3}},
                  Event{cur, 1000, {4, 4}}, Event{cur, 1500, {5, 5}},
                  Event{cur, 9999, {6, 6}}});
        Snapshot snap = sample_snapshot(s, 1000, {1000, 1000},
                                        graph::TopologyMode::FullyConnected, kTargets);
        REQUIRE(snap.nodes.size() == 1);
        CHECK(snap.nodes[0].x_past.rows == 3);
        CHECK(snap.nodes[0].x_future.rows == 2);
        CHECK(snap.nodes[0].y.rows == 2);
        // an event exactly at t belongs to the future window, never the past
        CHECK(snap.nodes[0].past_offsets == std::vector<int64_t>{-900, -800, -700});
        CHECK(snap.nodes[0].future_offsets == std::vector<int64_t>{0, 500});
        // current has no known-future columns
        CHECK(snap.nodes[0].x_future.cols == 0);
        CHECK(snap.nodes[0].y.at(0, 0) == 4.0);
    }
    SUBCASE("wind with past events but no future is present with fs=0") {
        EventStore s = EventStore::from_events(reg, {Event{wind, 900, {1, -1}}});
        Snapshot snap = sample_snapshot(s, 1000, {500, 500},
                                        graph::TopologyMode::FullyConnected, kTargets);
        REQUIRE(snap.nodes.size() == 1);
        CHECK(snap.nodes[0].x_past.rows == 1);
        CHECK(snap.nodes[0].x_future.rows == 0);
        CHECK(snap.nodes[0].y.rows == 0);  // wind has no labels, never targeted
    }
    SUBCASE("non-targeted type gets no label rows") {
        EventStore s = EventStore::from_events(
            reg, {Event{cur, 900, {1, 1}}, Event{cur, 1200, {2, 2}}});
        Snapshot snap = sample_snapshot(s, 1000, {500, 500},
                                        graph::TopologyMode::FullyConnected, {"ssh"});
        REQUIRE(snap.nodes.size() == 1);
        CHECK(snap.nodes[0].y.rows == 0);
        CHECK(snap.nodes[0].x_future.rows == 1);
    }
    SUBCASE("invalid window is rejected") {
        EventStore s = EventStore::from_events(reg, {Event{cur, 900, {1, 1}}});
        CHECK_THROWS(sample_snapshot(s, 1000, {0, 500},
                                     graph::TopologyMode::FullyConnected, kTargets));
    }
}

TEST_CASE("monotone window growth never shrinks snapshots") {
    auto [store, evs] = random_store(777, 25);
    const int64_t t = 50000;
    Snapshot small = sample_snapshot(store, t, {4000, 2000},
                                     graph::TopologyMode::Disconnected, kTargets);
    Snapshot big = sample_snapshot(store, t, {9000, 2000},
                                   graph::TopologyMode::Disconnected, kTargets);
    for (const auto& n : small.nodes) {
        int idx = big.node_index(n.node);
        REQUIRE(idx >= 0);  // node still present
        CHECK(big.nodes[static_cast<size_t>(idx)].x_past.rows >= n.x_past.rows);
    }
}

TEST_CASE("snapshot topology follows the mode") {
    auto [store, evs] = random_store(4242, 60);
    const int64_t t = 50000;
    const WindowSpec w{8000, 4000};

    Snapshot full = sample_snapshot(store, t, w, graph::TopologyMode::FullyConnected, kTargets);
    const int n = static_cast<int>(full.nodes.size());
    REQUIRE(n >= 3);
    CHECK(static_cast<int>(full.edges.size()) == n * (n - 1));

    Snapshot same = sample_snapshot(store, t, w, graph::TopologyMode::SameTypeOnly, kTargets);
    for (const auto& e : same.edges) {
        CHECK(same.nodes[static_cast<size_t>(e.src)].node.var_type ==
              same.nodes[static_cast<size_t>(e.dst)].node.var_type);
        CHECK(e.src != e.dst);
    }
    CHECK(same.edges.size() < full.edges.size());

    Snapshot disc = sample_snapshot(store, t, w, graph::TopologyMode::Disconnected, kTargets);
    CHECK(disc.edges.empty());

    // every endpoint indexes a present node
    for (const auto& e : full.edges) {
        CHECK(e.src >= 0);
        CHECK(e.src < n);
        CHECK(e.dst >= 0);
        CHECK(e.dst < n);
    }
}

TEST_CASE("sample_dtdg spacing and drop accounting") {
    auto [store, evs] = random_store(99, 80);

    SUBCASE("N=1 samples exactly at a") {
        DtdgDataset ds = sample_dtdg(store, 1, 50000, 80000, {5000, 3000},
                                     graph::TopologyMode::FullyConnected, kTargets);
        REQUIRE(ds.size() == 1);
        CHECK(ds.snapshots[0].t == 50000);
    }
    SUBCASE("N=10 over 10 days spaces snapshots exactly one day apart") {
        Registry reg = test_registry();
        std::vector<Event> evs2;
        const NodeKey cur{"current", "stA"};
        for (int d = 0; d < 12; ++d)
            evs2.push_back(Event{cur, static_cast<int64_t>(d) * 86400 + 100, {1.0, 1.0}});
        EventStore dense = EventStore::from_events(reg, evs2);
        DtdgDataset ds = sample_dtdg(dense, 10, 86400, 86400 * 11, {86400, 3600},
                                     graph::TopologyMode::FullyConnected, kTargets);
        CHECK(ds.spacing == 86400);
        REQUIRE(ds.size() == 10);
        for (size_t j = 1; j < ds.size(); ++j)
            CHECK(ds.snapshots[j].t - ds.snapshots[j - 1].t == 86400);
    }
    SUBCASE("empty reference times are dropped and counted") {
        Registry reg = test_registry();
        const NodeKey cur{"current", "stA"};
        // events only in the second half of the range
        EventStore sparse = EventStore::from_events(
            reg, {Event{cur, 60000, {1, 1}}, Event{cur, 61000, {1, 1}},
                  Event{cur, 70000, {1, 1}}});
        DtdgDataset ds = sample_dtdg(sparse, 10, 10000, 90000, {2000, 2000},
                                     graph::TopologyMode::FullyConnected, kTargets);
        CHECK(ds.dropped_empty > 0);
        CHECK(ds.size() + static_cast<size_t>(ds.dropped_empty) == 10);
    }
    SUBCASE("degenerate ranges are rejected") {
        CHECK_THROWS(sample_dtdg(store, 0, 0, 1000, {100, 100},
                                 graph::TopologyMode::FullyConnected, kTargets));
        CHECK_THROWS(sample_dtdg(store, 1, 1000, 1000, {100, 100},
                                 graph::TopologyMode::FullyConnected, kTargets));
        CHECK_THROWS(sample_dtdg(store, 1, 0, 150, {100, 100},
                                 graph::TopologyMode::FullyConnected, kTargets));  // < p+f
        CHECK_THROWS(sample_dtdg(store, 5000, 0, 2500, {100, 100},
                                 graph::TopologyMode::FullyConnected, kTargets));  // spacing 0
    }
}

TEST_CASE("chronological split") {
    auto [store, evs] = random_store(2718, 200, 2000000);
    // spacing 100000 >> past+future, so no boundary trimming in the basic case
    DtdgDataset ds = sample_dtdg(store, 10, 500000, 1500000, {5000, 3000},
                                 graph::TopologyMode::FullyConnected, kTargets);
    REQUIRE(ds.size() == 10);

    SUBCASE("10 snapshots at (0.7, 0.15, 0.15) split 7/1/2") {
        SplitResult r = chronological_split(ds, 0.7, 0.15, 0.15);
        CHECK(r.train.size() == 7);
        CHECK(r.val.size() == 1);
        CHECK(r.test.size() == 2);
        CHECK(r.val.dropped_boundary == 0);
        CHECK(r.test.dropped_boundary == 0);
    }
    SUBCASE("splits partition the snapshot sequence in time order") {
        SplitResult r = chronological_split(ds, 0.7, 0.15, 0.15);
        std::vector<int64_t> all;
        for (const auto& s : r.train.snapshots) all.push_back(s.t);
        for (const auto& s : r.val.snapshots) all.push_back(s.t);
        for (const auto& s : r.test.snapshots) all.push_back(s.t);
        std::vector<int64_t> orig;
        for (const auto& s : ds.snapshots) orig.push_back(s.t);
        CHECK(all == orig);
    }
    SUBCASE("boundary gap: later past windows clear earlier future windows") {
        // tight spacing forces trimming
        DtdgDataset tight = sample_dtdg(store, 100, 500000, 700000, {5000, 3000},
                                        graph::TopologyMode::FullyConnected, kTargets);
        REQUIRE(tight.size() >= 20);
        SplitResult r = chronological_split(tight, 0.7, 0.15, 0.15);
        const int64_t train_last = r.train.snapshots.back().t;
        for (const auto& s : r.val.snapshots)
            CHECK(s.t - tight.window.past_len >= train_last + tight.window.future_len);
        const int64_t val_last = r.val.snapshots.back().t;
        for (const auto& s : r.test.snapshots)
            CHECK(s.t - tight.window.past_len >= val_last + tight.window.future_len);
        CHECK(r.val.dropped_boundary + r.test.dropped_boundary > 0);
    }
    SUBCASE("bad fractions are rejected") {
        CHECK_THROWS(chronological_split(ds, 0.5, 0.5, 0.5));
        CHECK_THROWS(chronological_split(ds, 1.0, -0.5, 0.5));
        CHECK_THROWS(chronological_split(ds, 0.98, 0.01, 0.01));  // empty splits
    }
}

TEST_CASE("sampling is deterministic and the manifest captures it") {
    auto [store, evs] = random_store(13, 60);
    auto run = [&] {
        return sample_dtdg(store, 20, 20000, 80000, {5000, 3000},
                           graph::TopologyMode::FullyConnected, kTargets);
    };
    DtdgDataset a = run(), b = run();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.snapshots[i].t == b.snapshots[i].t);
        REQUIRE(a.snapshots[i].nodes.size() == b.snapshots[i].nodes.size());
        for (size_t j = 0; j < a.snapshots[i].nodes.size(); ++j)
            CHECK(a.snapshots[i].nodes[j].x_past.v == b.snapshots[i].nodes[j].x_past.v);
    }
    std::string m1 = dataset_manifest(a, store);
    std::string m2 = dataset_manifest(b, store);
    CHECK(m1 == m2);
    CHECK(m1.find("store_digest") != std::string::npos);
    CHECK(m1.find("content_hash") != std::string::npos);
}
