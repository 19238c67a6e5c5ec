#include "tidegraph/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tidegraph/params.hpp"

namespace tidegraph::events {

using nlohmann::json;
using nlohmann::ordered_json;

void Registry::add_type(VarTypeSpec spec) {
    if (spec.name.empty()) throw std::invalid_argument("registry: empty type name");
    if (spec.columns.empty()) throw std::invalid_argument("registry: type needs >= 1 column");
    if (types_.count(spec.name)) throw std::invalid_argument("registry: duplicate type " + spec.name);

    auto index_of = [&](const std::string& col) {
        auto it = std::find(spec.columns.begin(), spec.columns.end(), col);
        if (it == spec.columns.end())
            throw std::invalid_argument("registry: type " + spec.name + " has no column " + col);
        return static_cast<int>(it - spec.columns.begin());
    };
    std::set<int> label_csv;
    for (const auto& c : spec.labels) label_csv.insert(index_of(c));
    for (const auto& c : spec.known_future)
        if (label_csv.count(index_of(c)))
            throw std::invalid_argument("registry: label column cannot be known-future: " + c);

    // Internal layout: non-label columns first (CSV order), labels as suffix.
    spec.csv_to_internal.assign(spec.columns.size(), -1);
    spec.internal_to_csv.clear();
    for (int i = 0; i < spec.k(); ++i)
        if (!label_csv.count(i)) spec.internal_to_csv.push_back(i);
    for (int i = 0; i < spec.k(); ++i)
        if (label_csv.count(i)) spec.internal_to_csv.push_back(i);
    spec.internal_names.resize(spec.columns.size());
    for (int slot = 0; slot < spec.k(); ++slot) {
        spec.csv_to_internal[spec.internal_to_csv[slot]] = slot;
        spec.internal_names[slot] = spec.columns[spec.internal_to_csv[slot]];
    }
    spec.known_future_internal.clear();
    for (const auto& c : spec.known_future)
        spec.known_future_internal.push_back(spec.csv_to_internal[index_of(c)]);
    std::sort(spec.known_future_internal.begin(), spec.known_future_internal.end());

    if (spec.decoder != "none" && spec.decoder != "fixed" && spec.decoder != "dynamic")
        throw std::invalid_argument("registry: unknown decoder kind " + spec.decoder);

    types_[spec.name] = std::move(spec);
}

void Registry::add_node(const NodeKey& key) {
    if (!has_type(key.var_type))
        throw std::invalid_argument("registry: node references unknown type " + key.var_type);
    nodes_.insert(key);
}

const VarTypeSpec& Registry::type(const std::string& name) const {
    auto it = types_.find(name);
    if (it == types_.end()) throw std::out_of_range("registry: unknown type " + name);
    return it->second;
}

std::vector<std::string> Registry::type_names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : types_) out.push_back(name);
    return out;
}

int Registry::max_k() const {
    int k = 0;
    for (const auto& [_, spec] : types_) k = std::max(k, spec.k());
    return k;
}

Registry Registry::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    Registry reg;
    for (const auto& jt : j.at("types")) {
        VarTypeSpec spec;
        spec.name = jt.at("name");
        spec.columns = jt.at("columns").get<std::vector<std::string>>();
        if (jt.contains("labels")) spec.labels = jt.at("labels").get<std::vector<std::string>>();
        if (jt.contains("known_future"))
            spec.known_future = jt.at("known_future").get<std::vector<std::string>>();
        if (jt.contains("decoder")) spec.decoder = jt.at("decoder");
        else spec.decoder = spec.labels.empty() ? "none" : "fixed";
        reg.add_type(std::move(spec));
    }
    for (const auto& jn : j.at("nodes"))
        reg.add_node(NodeKey{jn.at("type"), jn.at("location")});
    return reg;
}

Registry Registry::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open registry: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return from_json_text(ss.str());
}

std::string Registry::to_json_text() const {
    ordered_json j;
    j["types"] = ordered_json::array();
    for (const auto& [_, spec] : types_) {
        j["types"].push_back({{"name", spec.name},
                              {"columns", spec.columns},
                              {"labels", spec.labels},
                              {"known_future", spec.known_future},
                              {"decoder", spec.decoder}});
    }
    j["nodes"] = ordered_json::array();
    for (const auto& n : nodes_)
        j["nodes"].push_back({{"type", n.var_type}, {"location", n.location}});
    return j.dump(2);
}

// ---- NormStats ----

const ColumnStats* NormStats::find(const NodeKey& node, int col) const {
    auto it = stats_.find({node, col});
    return it == stats_.end() ? nullptr : &it->second;
}

double NormStats::normalize(const NodeKey& node, int col, double x) const {
    const ColumnStats* s = find(node, col);
    if (!s || s->passthrough) return x;
    return (x - s->mean) / s->std_dev;
}

double NormStats::denormalize(const NodeKey& node, int col, double x) const {
    const ColumnStats* s = find(node, col);
    if (!s || s->passthrough) return x;
    return x * s->std_dev + s->mean;
}

std::string NormStats::to_json_text() const {
    ordered_json arr = ordered_json::array();
    for (const auto& [key, s] : stats_) {
        arr.push_back({{"type", key.first.var_type},
                       {"location", key.first.location},
                       {"col", key.second},
                       {"mean", s.mean},
                       {"std", s.std_dev},
                       {"passthrough", s.passthrough}});
    }
    return arr.dump(2);
}

NormStats NormStats::from_json_text(const std::string& text) {
    NormStats ns;
    for (const auto& e : json::parse(text)) {
        ColumnStats s;
        s.mean = e.at("mean");
        s.std_dev = e.at("std");
        s.passthrough = e.at("passthrough");
        ns.set(NodeKey{e.at("type"), e.at("location")}, e.at("col"), s);
    }
    return ns;
}

// ---- CSV ----

std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

std::string csv_header(const Registry& registry) {
    std::string h = "timestamp,var_type,location";
    for (int i = 1; i <= registry.max_k(); ++i) h += ",f" + std::to_string(i);
    return h;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

bool parse_i64(const std::string& s, int64_t& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

bool parse_f64(const std::string& s, double& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

constexpr size_t kMaxReportedErrors = 50;

void report_error(IngestReport& rep, int64_t line_no, const std::string& why) {
    ++rep.rejected;
    if (rep.errors.size() < kMaxReportedErrors)
        rep.errors.push_back("line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

std::pair<EventStore, IngestReport> EventStore::ingest_csv(const std::string& path,
                                                           const Registry& registry) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open event CSV: " + path);

    IngestReport rep;
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("event CSV is empty (no header): " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != csv_header(registry))
        throw std::runtime_error("event CSV header mismatch: expected '" + csv_header(registry) +
                                 "', got '" + line + "'");
    const int max_k = registry.max_k();

    // (node, timestamp, internal features, line) accepted pre-dedup
    struct Row {
        int64_t t;
        std::vector<double> feat;
        int64_t line_no;
    };
    std::map<NodeKey, std::vector<Row>> rows;

    int64_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != 3 + max_k) {
            report_error(rep, line_no, "expected " + std::to_string(3 + max_k) + " fields, got " +
                                           std::to_string(fields.size()));
            continue;
        }
        int64_t t;
        if (!parse_i64(fields[0], t)) {
            report_error(rep, line_no, "bad timestamp '" + fields[0] + "'");
            continue;
        }
        const NodeKey key{fields[1], fields[2]};
        if (!registry.has_type(key.var_type)) {
            report_error(rep, line_no, "unknown var_type '" + key.var_type + "'");
            continue;
        }
        if (!registry.has_node(key)) {
            report_error(rep, line_no, "unregistered node " + key.str());
            continue;
        }
        const VarTypeSpec& spec = registry.type(key.var_type);
        std::vector<double> csv_feat(spec.k());
        bool ok = true;
        for (int i = 0; i < spec.k(); ++i) {
            if (!parse_f64(fields[3 + i], csv_feat[i])) {
                report_error(rep, line_no, "bad feature f" + std::to_string(i + 1) + " '" +
                                               fields[3 + i] + "'");
                ok = false;
                break;
            }
            if (!std::isfinite(csv_feat[i])) {
                report_error(rep, line_no, "non-finite feature f" + std::to_string(i + 1));
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        for (int i = spec.k(); i < max_k; ++i) {
            if (!fields[3 + i].empty()) {
                report_error(rep, line_no,
                             "arity mismatch: type " + key.var_type + " has k=" +
                                 std::to_string(spec.k()) + " but f" + std::to_string(i + 1) +
                                 " is non-empty");
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        std::vector<double> internal(spec.k());
        for (int i = 0; i < spec.k(); ++i) internal[spec.csv_to_internal[i]] = csv_feat[i];
        rows[key].push_back(Row{t, std::move(internal), line_no});
    }

    EventStore store;
    store.registry_ = std::make_shared<Registry>(registry);
    for (auto& [key, vec] : rows) {
        std::stable_sort(vec.begin(), vec.end(),
                         [](const Row& a, const Row& b) { return a.t < b.t; });
        auto& out = store.by_node_[key];
        for (size_t i = 0; i < vec.size(); ++i) {
            if (!out.empty() && out.back().t == vec[i].t) {
                report_error(rep, vec[i].line_no,
                             "duplicate timestamp " + std::to_string(vec[i].t) + " for node " +
                                 key.str());
                continue;
            }
            out.push_back(Stored{vec[i].t, std::move(vec[i].feat)});
            ++rep.accepted;
            ++rep.per_node[key];
        }
        if (out.empty()) store.by_node_.erase(key);
    }
    return {std::move(store), std::move(rep)};
}

EventStore EventStore::from_events(const Registry& registry, std::vector<Event> evs) {
    EventStore store;
    store.registry_ = std::make_shared<Registry>(registry);
    for (auto& e : evs) {
        if (!registry.has_node(e.node))
            throw std::invalid_argument("from_events: unregistered node " + e.node.str());
        const VarTypeSpec& spec = registry.type(e.node.var_type);
        if (static_cast<int>(e.features.size()) != spec.k())
            throw std::invalid_argument("from_events: arity mismatch for " + e.node.str());
        for (double x : e.features)
            if (!std::isfinite(x))
                throw std::invalid_argument("from_events: non-finite feature for " + e.node.str());
        store.by_node_[e.node].push_back(Stored{e.timestamp, std::move(e.features)});
    }
    for (auto& [key, vec] : store.by_node_) {
        std::stable_sort(vec.begin(), vec.end(),
                         [](const Stored& a, const Stored& b) { return a.t < b.t; });
        for (size_t i = 1; i < vec.size(); ++i)
            if (vec[i].t == vec[i - 1].t)
                throw std::invalid_argument("from_events: duplicate timestamp " +
                                            std::to_string(vec[i].t) + " for " + key.str());
    }
    return store;
}

std::vector<Event> EventStore::query_window(const NodeKey& node, int64_t a, int64_t b) const {
    if (a >= b) throw std::invalid_argument("query_window: need a < b");
    std::vector<Event> out;
    auto it = by_node_.find(node);
    if (it == by_node_.end()) return out;
    const auto& vec = it->second;
    auto lo = std::lower_bound(vec.begin(), vec.end(), a,
                               [](const Stored& e, int64_t t) { return e.t < t; });
    auto hi = std::lower_bound(lo, vec.end(), b,
                               [](const Stored& e, int64_t t) { return e.t < t; });
    out.reserve(static_cast<size_t>(hi - lo));
    for (auto p = lo; p != hi; ++p) out.push_back(Event{node, p->t, p->features});
    return out;
}

int64_t EventStore::count_in_window(const NodeKey& node, int64_t a, int64_t b) const {
    if (a >= b) throw std::invalid_argument("count_in_window: need a < b");
    auto it = by_node_.find(node);
    if (it == by_node_.end()) return 0;
    const auto& vec = it->second;
    auto lo = std::lower_bound(vec.begin(), vec.end(), a,
                               [](const Stored& e, int64_t t) { return e.t < t; });
    auto hi = std::lower_bound(lo, vec.end(), b,
                               [](const Stored& e, int64_t t) { return e.t < t; });
    return hi - lo;
}

std::vector<NodeKey> EventStore::node_keys() const {
    std::vector<NodeKey> out;
    for (const auto& [key, _] : by_node_) out.push_back(key);
    return out;
}

int64_t EventStore::total_events() const {
    int64_t n = 0;
    for (const auto& [_, vec] : by_node_) n += static_cast<int64_t>(vec.size());
    return n;
}

std::optional<std::pair<int64_t, int64_t>> EventStore::time_span() const {
    std::optional<std::pair<int64_t, int64_t>> span;
    for (const auto& [_, vec] : by_node_) {
        if (vec.empty()) continue;
        if (!span) span = {vec.front().t, vec.back().t};
        span->first = std::min(span->first, vec.front().t);
        span->second = std::max(span->second, vec.back().t);
    }
    return span;
}

NormStats EventStore::fit_normalization(int64_t t0, int64_t t1) const {
    if (t0 >= t1) throw std::invalid_argument("fit_normalization: empty range");
    NormStats ns;
    for (const auto& [key, vec] : by_node_) {
        const int k = registry_->type(key.var_type).k();
        auto lo = std::lower_bound(vec.begin(), vec.end(), t0,
                                   [](const Stored& e, int64_t t) { return e.t < t; });
        auto hi = std::lower_bound(lo, vec.end(), t1,
                                   [](const Stored& e, int64_t t) { return e.t < t; });
        const int64_t n = hi - lo;
        for (int c = 0; c < k; ++c) {
            ColumnStats s;
            if (n < 2) {
                s.passthrough = true;
            } else {
                double sum = 0.0;
                for (auto p = lo; p != hi; ++p) sum += p->features[c];
                s.mean = sum / static_cast<double>(n);
                double ss = 0.0;
                for (auto p = lo; p != hi; ++p) {
                    const double d = p->features[c] - s.mean;
                    ss += d * d;
                }
                // population convention, denominator n
                s.std_dev = std::sqrt(ss / static_cast<double>(n));
                if (s.std_dev <= 1e-12 * std::max(1.0, std::fabs(s.mean))) {
                    s.passthrough = true;
                    s.std_dev = 1.0;
                }
            }
            ns.set(key, c, s);
        }
    }
    return ns;
}

std::map<NodeKey, MissingnessEntry> EventStore::missingness_report(int64_t expected_period) const {
    if (expected_period <= 0) throw std::invalid_argument("missingness_report: period must be > 0");
    std::map<NodeKey, MissingnessEntry> out;
    for (const auto& [key, vec] : by_node_) {
        MissingnessEntry e;
        e.events = static_cast<int64_t>(vec.size());
        if (vec.size() < 2) {
            e.defined = false;
        } else {
            const int64_t span = vec.back().t - vec.front().t;
            e.expected_slots = span / expected_period + 1;
            const double frac = 1.0 - static_cast<double>(e.events) /
                                          static_cast<double>(e.expected_slots);
            e.fraction = std::clamp(frac, 0.0, 1.0);
        }
        out[key] = e;
    }
    return out;
}

EventStore EventStore::restricted_to(const std::set<std::string>& var_types) const {
    EventStore store;
    store.registry_ = registry_;
    for (const auto& [key, vec] : by_node_)
        if (var_types.count(key.var_type)) store.by_node_[key] = vec;
    return store;
}

uint64_t EventStore::digest() const {
    uint64_t h = 14695981039346656037ULL;
    auto mix_bytes = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [key, vec] : by_node_) {
        mix_bytes(key.var_type.data(), key.var_type.size());
        mix_bytes(key.location.data(), key.location.size());
        for (const auto& e : vec) {
            mix_bytes(&e.t, sizeof(e.t));
            mix_bytes(e.features.data(), e.features.size() * sizeof(double));
        }
    }
    return h;
}

}  // namespace tidegraph::events
