#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tidegraph::events {

// Per-variable-type schema. CSV files carry columns in `columns` order;
// internally features are permuted so the l_type label columns form a
// fixed suffix.
struct VarTypeSpec {
    std::string name;
    std::vector<std::string> columns;       // CSV order
    std::vector<std::string> labels;        // subset of columns
    std::vector<std::string> known_future;  // subset of columns, disjoint from labels
    std::string decoder = "none";           // "fixed" | "dynamic" | "none"

    int k() const { return static_cast<int>(columns.size()); }
    int l() const { return static_cast<int>(labels.size()); }
    int kf() const { return static_cast<int>(known_future.size()); }

    // csv_to_internal[i] = internal slot of CSV column i.
    std::vector<int> csv_to_internal;
    std::vector<int> internal_to_csv;
    std::vector<int> known_future_internal;  // internal indices, ascending
    std::vector<std::string> internal_names;
};

struct NodeKey {
    std::string var_type;
    std::string location;
    auto operator<=>(const NodeKey&) const = default;
    std::string str() const { return var_type + "@" + location; }
};

struct Event {
    NodeKey node;
    int64_t timestamp = 0;                // seconds since epoch
    std::vector<double> features;         // internal layout, length k_type
};

class Registry {
public:
    static Registry from_json_file(const std::string& path);
    static Registry from_json_text(const std::string& text);

    void add_type(VarTypeSpec spec);      // validates and fills layout maps
    void add_node(const NodeKey& key);

    const VarTypeSpec& type(const std::string& name) const;
    bool has_type(const std::string& name) const { return types_.count(name) > 0; }
    bool has_node(const NodeKey& key) const { return nodes_.count(key) > 0; }
    const std::set<NodeKey>& nodes() const { return nodes_; }
    std::vector<std::string> type_names() const;
    int max_k() const;

    std::string to_json_text() const;

private:
    std::map<std::string, VarTypeSpec> types_;
    std::set<NodeKey> nodes_;
};

struct IngestReport {
    int64_t accepted = 0;
    int64_t rejected = 0;
    std::vector<std::string> errors;      // "line N: reason", capped
    std::map<NodeKey, int64_t> per_node;
};

struct ColumnStats {
    double mean = 0.0;
    double std_dev = 1.0;
    bool passthrough = false;             // constant column or < 2 samples
};

class NormStats {
public:
    void set(const NodeKey& node, int col, ColumnStats s) { stats_[{node, col}] = s; }
    const ColumnStats* find(const NodeKey& node, int col) const;

    double normalize(const NodeKey& node, int col, double x) const;
    double denormalize(const NodeKey& node, int col, double x) const;

    std::string to_json_text() const;
    static NormStats from_json_text(const std::string& text);
    size_t size() const { return stats_.size(); }

private:
    std::map<std::pair<NodeKey, int>, ColumnStats> stats_;
};

struct MissingnessEntry {
    double fraction = 0.0;                // 1 - events/slots over observed span
    int64_t events = 0;
    int64_t expected_slots = 0;
    bool defined = true;                  // false when the node has < 2 events
};

// Immutable after construction; reads are safe to share between threads.
class EventStore {
public:
    static std::pair<EventStore, IngestReport> ingest_csv(const std::string& path,
                                                          const Registry& registry);
    // Strict variant for programmatic construction; throws on any invalid event.
    static EventStore from_events(const Registry& registry, std::vector<Event> events);

    const Registry& registry() const { return *registry_; }

    // Events of `node` with timestamp in [a, b), in timestamp order.
    std::vector<Event> query_window(const NodeKey& node, int64_t a, int64_t b) const;
    // Count-only variant of query_window.
    int64_t count_in_window(const NodeKey& node, int64_t a, int64_t b) const;

    std::vector<NodeKey> node_keys() const;  // sorted
    int64_t total_events() const;
    std::optional<std::pair<int64_t, int64_t>> time_span() const;  // [min, max] over all events

    NormStats fit_normalization(int64_t t0, int64_t t1) const;
    std::map<NodeKey, MissingnessEntry> missingness_report(int64_t expected_period) const;

    // Store with only the given var_types (node set and events filtered).
    EventStore restricted_to(const std::set<std::string>& var_types) const;

    uint64_t digest() const;  // content hash over nodes, timestamps and feature bits

private:
    struct Stored {
        int64_t t;
        std::vector<double> features;
    };
    EventStore() = default;

    std::shared_ptr<const Registry> registry_;
    std::map<NodeKey, std::vector<Stored>> by_node_;
};

// CSV helpers shared with the synthetic generator.
std::string csv_header(const Registry& registry);
std::string format_double(double x);      // shortest round-trip representation

}  // namespace tidegraph::events
