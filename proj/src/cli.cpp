#include "tidegraph/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "tidegraph/baselines.hpp"
#include "tidegraph/graph.hpp"
#include "tidegraph/model.hpp"
#include "tidegraph/sampler.hpp"
#include "tidegraph/synth.hpp"
#include "tidegraph/train.hpp"

namespace tidegraph::cli {

const char* const kOutputRootEnv = "TIDEGRAPH_OUT";

namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    const fs::path dir = fs::path(path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f << text;
}

std::string resolve_out(const std::string& out_dir) {
    if (out_dir.empty() || fs::path(out_dir).is_absolute()) return out_dir;
    const char* root = std::getenv(kOutputRootEnv);
    if (root == nullptr || *root == '\0') return out_dir;
    return (fs::path(root) / out_dir).string();
}

// The generator sidecar nests the world under "config"; accept both forms.
synth::WorldConfig load_world(const std::string& path) {
    const auto j = nlohmann::json::parse(read_text(path));
    if (j.contains("config")) return synth::WorldConfig::from_json_text(j.at("config").dump());
    return synth::WorldConfig::from_json_text(j.dump());
}

std::string fmt(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

// ------------------------------------------------------- ExperimentConfig

void ExperimentConfig::validate() const {
    if (encoder != "lstm" && encoder != "transformer")
        throw std::invalid_argument("config: encoder must be 'lstm' or 'transformer'");
    graph::topology_from_string(topology);  // throws on unknown mode
    if (past_len_s <= 0 || future_len_s <= 0)
        throw std::invalid_argument("config: window lengths must be positive");
    if (embed_size <= 0 || embed_size % 2 != 0)
        throw std::invalid_argument("config: embed_size must be a positive even number");
    if (gnn_blocks < 0) throw std::invalid_argument("config: negative gnn_blocks");
    if (epochs < 1 || batch_size < 1 || patience < 0)
        throw std::invalid_argument("config: bad optimizer settings");
    if (!(lr >= 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("config: learning rate must be finite and >= 0");
    if (n_snapshots < 1) throw std::invalid_argument("config: need at least one snapshot");
    if (!(split_train > 0.0) || !(split_val > 0.0) || !(split_test > 0.0) ||
        std::fabs(split_train + split_val + split_test - 1.0) > 1e-9)
        throw std::invalid_argument("config: split fractions must be positive and sum to 1");
    if (seeds.empty()) throw std::invalid_argument("config: need at least one seed");
    std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
    if (uniq.size() != seeds.size())
        throw std::invalid_argument("config: duplicate seeds collide on output paths");
    if (inputs.empty()) throw std::invalid_argument("config: no input var_types");
    if (targets.empty()) throw std::invalid_argument("config: no target var_types");
    if (out_dir.empty()) throw std::invalid_argument("config: empty out_dir");
}

void ExperimentConfig::validate_against(const events::Registry& registry) const {
    for (const auto& name : inputs)
        if (!registry.has_type(name))
            throw std::invalid_argument("config: unknown input var_type '" + name + "'");
    const std::set<std::string> in(inputs.begin(), inputs.end());
    for (const auto& name : targets) {
        if (!registry.has_type(name))
            throw std::invalid_argument("config: unknown target var_type '" + name + "'");
        if (in.count(name) == 0)
            throw std::invalid_argument("config: target '" + name +
                                        "' is not among the inputs");
        const auto& spec = registry.type(name);
        if (spec.l() < 1 || spec.decoder == "none")
            throw std::invalid_argument("config: target '" + name +
                                        "' has no labels or no decoder");
    }
}

std::string ExperimentConfig::scenario_name() const {
    std::vector<std::string> sorted = inputs;
    std::sort(sorted.begin(), sorted.end());
    std::string out;
    for (const auto& s : sorted) {
        if (!out.empty()) out += "+";
        out += s;
    }
    return out;
}

std::string ExperimentConfig::resolved_out_dir() const { return resolve_out(out_dir); }

std::string ExperimentConfig::to_json_text() const {
    nlohmann::ordered_json j;
    j["events_csv"] = events_csv;
    j["world_json"] = world_json;
    j["inputs"] = inputs;
    j["targets"] = targets;
    j["encoder"] = encoder;
    j["topology"] = topology;
    j["past_len_s"] = past_len_s;
    j["future_len_s"] = future_len_s;
    j["embed_size"] = embed_size;
    j["gnn_blocks"] = gnn_blocks;
    j["bypass_gnn"] = bypass_gnn;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["patience"] = patience;
    j["lr"] = lr;
    j["n_snapshots"] = n_snapshots;
    j["split"] = {split_train, split_val, split_test};
    j["seeds"] = seeds;
    j["out_dir"] = out_dir;
    j["run_name"] = run_name;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    static const std::set<std::string> known{
        "events_csv", "world_json", "inputs",      "targets",   "encoder",
        "topology",   "past_len_s", "future_len_s", "embed_size", "gnn_blocks",
        "bypass_gnn", "epochs",     "batch_size",  "patience",  "lr",
        "n_snapshots", "split",     "seeds",       "out_dir",   "run_name"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (known.count(it.key()) == 0)
            throw std::invalid_argument("config: unknown field '" + it.key() + "'");

    ExperimentConfig c;
    c.events_csv = j.value("events_csv", c.events_csv);
    c.world_json = j.value("world_json", c.world_json);
    if (j.contains("inputs")) c.inputs = j.at("inputs").get<std::vector<std::string>>();
    if (j.contains("targets")) c.targets = j.at("targets").get<std::vector<std::string>>();
    c.encoder = j.value("encoder", c.encoder);
    c.topology = j.value("topology", c.topology);
    c.past_len_s = j.value("past_len_s", c.past_len_s);
    c.future_len_s = j.value("future_len_s", c.future_len_s);
    c.embed_size = j.value("embed_size", c.embed_size);
    c.gnn_blocks = j.value("gnn_blocks", c.gnn_blocks);
    c.bypass_gnn = j.value("bypass_gnn", c.bypass_gnn);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.lr = j.value("lr", c.lr);
    c.n_snapshots = j.value("n_snapshots", c.n_snapshots);
    if (j.contains("split")) {
        const auto s = j.at("split").get<std::vector<double>>();
        if (s.size() != 3)
            throw std::invalid_argument("config: split must be [train, val, test]");
        c.split_train = s[0];
        c.split_val = s[1];
        c.split_test = s[2];
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.out_dir = j.value("out_dir", c.out_dir);
    c.run_name = j.value("run_name", c.run_name);
    return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    return from_json_text(read_text(path));
}

// ------------------------------------------------------------- data flow

namespace {

struct Loaded {
    synth::WorldConfig world;
    events::Registry registry;  // full registry: model parameters stay
                                // comparable across input-set scenarios
    events::EventStore store;   // restricted to the configured inputs
};

Loaded load_experiment_data(const ExperimentConfig& cfg) {
    if (cfg.events_csv.empty() || !fs::exists(cfg.events_csv))
        throw std::invalid_argument("config: dataset not found: '" + cfg.events_csv + "'");
    if (cfg.world_json.empty() || !fs::exists(cfg.world_json))
        throw std::invalid_argument("config: world file not found: '" + cfg.world_json + "'");

    synth::WorldConfig world = load_world(cfg.world_json);
    events::Registry registry = synth::make_registry(world);
    cfg.validate_against(registry);

    auto [store, report] = events::EventStore::ingest_csv(cfg.events_csv, registry);
    events::EventStore restricted =
        store.restricted_to(std::set<std::string>(cfg.inputs.begin(), cfg.inputs.end()));
    return Loaded{std::move(world), std::move(registry), std::move(restricted)};
}

sampler::SplitResult make_splits(const ExperimentConfig& cfg, const events::EventStore& store) {
    const auto span = store.time_span();
    if (!span) throw std::invalid_argument("config: dataset holds no events");
    const sampler::WindowSpec w{cfg.past_len_s, cfg.future_len_s};
    const std::int64_t a = span->first + cfg.past_len_s;
    const std::int64_t b = span->second - cfg.future_len_s;
    if (b <= a)
        throw std::invalid_argument("config: dataset span too short for the windows");
    auto ds = sampler::sample_dtdg(store, cfg.n_snapshots, a, b, w,
                                   graph::topology_from_string(cfg.topology),
                                   std::set<std::string>(cfg.targets.begin(),
                                                         cfg.targets.end()));
    return sampler::chronological_split(ds, cfg.split_train, cfg.split_val, cfg.split_test);
}

model::ModelConfig model_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    model::ModelConfig mc;
    mc.encoder.kind = enc::encoder_from_string(cfg.encoder);
    mc.encoder.embed_size = cfg.embed_size;
    mc.gnn_blocks = cfg.gnn_blocks;
    mc.bypass_gnn = cfg.bypass_gnn;
    mc.param_seed = seed;
    return mc;
}

std::string run_dir_for(const ExperimentConfig& cfg) {
    const std::string name = cfg.run_name.empty() ? cfg.scenario_name() : cfg.run_name;
    return (fs::path(cfg.resolved_out_dir()) / name).string();
}

void print_entries(const std::vector<train::MetricEntry>& entries) {
    for (const auto& e : entries) {
        std::cout << "  " << e.var_type << "." << e.quantity << ": ioa="
                  << (e.ioa_defined ? fmt(e.ioa) : std::string("undefined"))
                  << " rmse=" << fmt(e.rmse, 6) << " points=" << e.points;
        if (e.excluded > 0) std::cout << " excluded=" << e.excluded;
        std::cout << "\n";
    }
}

void print_aggregate(const train::MultiSeedResult& msr) {
    for (const auto& a : msr.aggregate)
        std::cout << "  " << a.var_type << "." << a.quantity << ": ioa=" << fmt(a.ioa_mean)
                  << "+/-" << fmt(a.ioa_std) << " rmse=" << fmt(a.rmse_mean, 6) << "+/-"
                  << fmt(a.rmse_std, 6) << " runs=" << a.runs << "\n";
}

// One seed of one experiment: fit, train, checkpoint, score the test split.
train::MetricReport run_seed(const ExperimentConfig& cfg, const Loaded& data,
                             const sampler::SplitResult& sp, std::uint64_t seed,
                             const std::string& run_dir) {
    const std::string seed_dir =
        (fs::path(run_dir) / ("seed_" + std::to_string(seed))).string();
    fs::create_directories(seed_dir);

    model::ForecastModel m(data.registry, model_config(cfg, seed));
    m.fit(data.store, sp.train);

    train::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.patience = cfg.patience;
    tc.lr = cfg.lr;
    tc.seed = seed;
    tc.checkpoint_path = seed_dir + "/checkpoint.bin";
    tc.history_path = seed_dir + "/history.csv";
    const auto res = train::fit(m, sp.train, sp.val, tc);

    nlohmann::ordered_json summary;
    summary["seed"] = seed;
    summary["epochs_run"] = res.epochs_run;
    summary["best_epoch"] = res.best_epoch;
    summary["best_val_loss"] = res.best_val_loss;
    summary["stopped_early"] = res.stopped_early;
    write_text(seed_dir + "/train_summary.json", summary.dump(2));

    train::EvalOptions eo;
    eo.seed = seed;
    eo.overlay_dir = seed_dir + "/overlays";
    const auto rep = train::evaluate(m, sp.test, eo);
    write_text(seed_dir + "/metrics.json", rep.to_json_text());
    return rep;
}

// Shared by cmd_train and cmd_ablate_topology: the full multi-seed pipeline
// for one configuration, artifacts under `run_dir`.
train::MultiSeedResult run_experiment(const ExperimentConfig& cfg, const std::string& run_dir) {
    const Loaded data = load_experiment_data(cfg);
    const auto sp = make_splits(cfg, data.store);
    fs::create_directories(run_dir);
    write_text(run_dir + "/experiment_config.json", cfg.to_json_text());

    const auto msr = train::multi_seed(cfg.seeds, [&](std::uint64_t seed) {
        return run_seed(cfg, data, sp, seed, run_dir);
    });
    write_text(run_dir + "/aggregate.json", msr.to_json_text());
    return msr;
}

// ------------------------------------------------------------- commands

int cmd_train(const ExperimentConfig& cfg) {
    const std::string run_dir = run_dir_for(cfg);
    const auto msr = run_experiment(cfg, run_dir);
    std::cout << "run " << run_dir << " (" << msr.per_seed.size() << " seeds)\n";
    print_aggregate(msr);
    for (const auto& f : msr.failures) std::cerr << "failed: " << f << "\n";
    return msr.complete() ? 0 : 1;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint,
                 const std::string& split, const std::string& station, bool per_snapshot,
                 const std::string& overlay_dir) {
    if (!fs::exists(checkpoint))
        throw std::invalid_argument("checkpoint not found: '" + checkpoint + "'");
    const Loaded data = load_experiment_data(cfg);
    const auto sp = make_splits(cfg, data.store);
    const sampler::DtdgDataset* ds = &sp.test;
    if (split == "train")
        ds = &sp.train;
    else if (split == "val")
        ds = &sp.val;
    else if (split != "test")
        throw std::invalid_argument("--split must be train, val or test");

    model::ForecastModel m(data.registry, model_config(cfg, cfg.seeds.front()));
    m.fit(data.store, sp.train);
    m.params().load(checkpoint);

    train::EvalOptions eo;
    eo.seed = cfg.seeds.front();
    eo.per_snapshot = per_snapshot;
    eo.overlay_dir = overlay_dir;
    if (!station.empty()) eo.station = station;
    const auto rep = train::evaluate(m, *ds, eo);

    const std::string out = (fs::path(run_dir_for(cfg)) / ("eval_" + split + ".json")).string();
    write_text(out, rep.to_json_text());
    std::cout << "evaluated " << checkpoint << " on " << split << " -> " << out << "\n";
    print_entries(rep.entries);
    return 0;
}

int cmd_ablate_topology(const ExperimentConfig& cfg) {
    static const std::vector<std::string> modes{"full", "same_type", "disconnected"};
    const std::string base =
        (fs::path(cfg.resolved_out_dir()) /
         (cfg.run_name.empty() ? std::string("ablate") : cfg.run_name))
            .string();

    std::vector<train::MultiSeedResult> results;
    bool ok = true;
    for (const auto& mode : modes) {
        ExperimentConfig mc = cfg;
        mc.topology = mode;
        const std::string run_dir = (fs::path(base) / mode).string();
        std::cout << "topology " << mode << "\n";
        const auto msr = run_experiment(mc, run_dir);
        print_aggregate(msr);
        for (const auto& f : msr.failures) std::cerr << "failed: " << f << "\n";
        ok = ok && msr.complete();
        results.push_back(msr);
    }

    // One wide table: a row per topology, a column block per quantity.
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& a : results.front().aggregate) keys.push_back({a.var_type, a.quantity});

    std::string csv = "topology";
    for (const auto& k : keys) {
        const std::string q = k.first + "." + k.second;
        csv += "," + q + ".ioa_mean," + q + ".ioa_std," + q + ".rmse_mean," + q +
               ".rmse_std," + q + ".runs";
    }
    csv += "\n";
    nlohmann::ordered_json jrows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < modes.size(); ++i) {
        csv += modes[i];
        nlohmann::ordered_json row;
        row["topology"] = modes[i];
        nlohmann::ordered_json agg = nlohmann::ordered_json::array();
        for (const auto& k : keys) {
            const train::AggregateEntry* found = nullptr;
            for (const auto& a : results[i].aggregate)
                if (a.var_type == k.first && a.quantity == k.second) found = &a;
            if (found == nullptr) {
                csv += ",,,,,";
                continue;
            }
            csv += "," + events::format_double(found->ioa_mean) + "," +
                   events::format_double(found->ioa_std) + "," +
                   events::format_double(found->rmse_mean) + "," +
                   events::format_double(found->rmse_std) + "," + std::to_string(found->runs);
            agg.push_back({{"var_type", found->var_type},
                           {"quantity", found->quantity},
                           {"ioa_mean", found->ioa_mean},
                           {"ioa_std", found->ioa_std},
                           {"rmse_mean", found->rmse_mean},
                           {"rmse_std", found->rmse_std},
                           {"runs", found->runs}});
        }
        csv += "\n";
        row["aggregate"] = agg;
        jrows.push_back(row);
    }
    write_text(base + "/table.csv", csv);
    write_text(base + "/table.json", jrows.dump(2));
    std::cout << "table -> " << base << "/table.csv\n";
    return ok ? 0 : 1;
}

int cmd_baselines(const ExperimentConfig& cfg) {
    const Loaded data = load_experiment_data(cfg);
    const auto sp = make_splits(cfg, data.store);
    const std::string run_dir =
        (fs::path(cfg.resolved_out_dir()) /
         (cfg.run_name.empty() ? std::string("baselines") : cfg.run_name))
            .string();

    // Constituent periods advertised by the world, deduplicated and sorted.
    std::set<double> periods;
    for (const auto& st : data.world.stations)
        for (const auto& c : st.constituents)
            if (c.amplitude_m > 0.0) periods.insert(c.period_h);

    baselines::BaselineConfig bc;
    bc.train_t0 = sp.train.snapshots.front().t - cfg.past_len_s;
    bc.train_t1 = sp.train.snapshots.back().t + cfg.future_len_s;
    bc.seed = cfg.seeds.front();

    for (const auto kind : {baselines::Kind::Persistence, baselines::Kind::Harmonic}) {
        bc.kind = kind;
        bc.periods_h.assign(periods.begin(), periods.end());
        if (kind == baselines::Kind::Harmonic && bc.periods_h.empty())
            throw std::invalid_argument("baseline: world advertises no constituents");
        const auto rep = baselines::evaluate_baseline(data.store, sp.test, bc);
        const std::string out =
            (fs::path(run_dir) / (baselines::kind_to_string(kind) + ".json")).string();
        write_text(out, rep.to_json_text());
        std::cout << baselines::kind_to_string(kind) << " -> " << out << "\n";
        print_entries(rep.entries);
    }
    return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    const std::string out = resolve_out(out_dir);
    std::string csv = "run,source,var_type,quantity,ioa_mean,ioa_std,rmse_mean,rmse_std,runs\n";
    nlohmann::ordered_json jrows = nlohmann::ordered_json::array();
    std::string overlays = "run,file\n";

    for (const auto& dir : run_dirs) {
        if (!fs::exists(dir)) throw std::invalid_argument("run dir not found: '" + dir + "'");
        const std::string run = fs::path(dir).filename().string();

        auto add_row = [&](const std::string& source, const std::string& ty,
                           const std::string& q, double im, double is, double rm, double rs,
                           int runs) {
            csv += run + "," + source + "," + ty + "," + q + "," + events::format_double(im) +
                   "," + events::format_double(is) + "," + events::format_double(rm) + "," +
                   events::format_double(rs) + "," + std::to_string(runs) + "\n";
            jrows.push_back({{"run", run},
                             {"source", source},
                             {"var_type", ty},
                             {"quantity", q},
                             {"ioa_mean", im},
                             {"ioa_std", is},
                             {"rmse_mean", rm},
                             {"rmse_std", rs},
                             {"runs", runs}});
        };

        bool found = false;
        const std::string agg_path = dir + "/aggregate.json";
        if (fs::exists(agg_path)) {
            found = true;
            const auto j = nlohmann::json::parse(read_text(agg_path));
            for (const auto& a : j.at("aggregate"))
                add_row("aggregate", a.at("var_type"), a.at("quantity"), a.at("ioa_mean"),
                        a.at("ioa_std"), a.at("rmse_mean"), a.at("rmse_std"), a.at("runs"));
        }
        for (const char* leaf : {"metrics.json", "persistence.json", "harmonic.json"}) {
            const std::string p = dir + "/" + std::string(leaf);
            if (!fs::exists(p)) continue;
            found = true;
            const auto rep = train::MetricReport::from_json_text(read_text(p));
            const std::string source = fs::path(leaf).stem().string();
            for (const auto& e : rep.entries)
                add_row(source, e.var_type, e.quantity, e.ioa, 0.0, e.rmse, 0.0,
                        e.ioa_defined ? 1 : 0);
        }
        if (!found)
            throw std::invalid_argument("no metric files under run dir: '" + dir + "'");

        std::vector<std::string> series;
        for (const auto& entry : fs::recursive_directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().filename().string().rfind(
                                               "overlay_", 0) == 0)
                series.push_back(entry.path().string());
        std::sort(series.begin(), series.end());
        for (const auto& s : series) overlays += run + "," + s + "\n";
    }

    write_text(out + "/merged.csv", csv);
    write_text(out + "/merged.json", jrows.dump(2));
    write_text(out + "/overlays_index.csv", overlays);
    std::cout << "merged " << run_dirs.size() << " run dir(s) -> " << out << "/merged.csv\n";
    return 0;
}

int cmd_generate(const std::string& world_path, std::optional<double> days,
                 std::optional<std::uint64_t> seed, std::optional<int> stations,
                 bool no_gaps, const std::string& out_dir, const std::string& stem) {
    synth::WorldConfig wc;
    if (!world_path.empty()) {
        if (!fs::exists(world_path))
            throw std::invalid_argument("world file not found: '" + world_path + "'");
        wc = load_world(world_path);
        if (stations)
            throw std::invalid_argument("--stations conflicts with an explicit --world");
    } else {
        wc = synth::WorldConfig::defaults(stations.value_or(6));
    }
    if (days) wc.duration_days = *days;
    if (seed) wc.seed = *seed;
    if (no_gaps) wc.missing_rates.clear();

    const std::string out = resolve_out(out_dir);
    fs::create_directories(out);
    const auto res = synth::generate(wc, out, stem);
    std::int64_t total = 0;
    for (const auto& [node, n] : res.emitted) total += n;
    std::cout << "events -> " << res.events_path << "\n"
              << "truth  -> " << res.truth_path << "\n"
              << "world  -> " << res.world_path << "\n"
              << "slots per node: " << res.slots_per_node << ", events kept: " << total
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- parser

// Optional overrides collected from flags; applied over the config file.
struct Overrides {
    std::optional<std::string> events, world, encoder, topology, out_dir, run_name;
    std::vector<std::string> inputs, targets;
    std::optional<std::int64_t> past_len, future_len;
    std::optional<int> embed, blocks, epochs, batch, patience, snapshots;
    std::optional<double> lr;
    std::vector<double> split;
    std::vector<std::uint64_t> seeds;
    std::optional<bool> bypass;
};

void add_common_options(CLI::App* sub, std::string& config_path, Overrides& ov) {
    sub->add_option("--config", config_path, "experiment config JSON file");
    sub->add_option("--events", ov.events, "events CSV path");
    sub->add_option("--world", ov.world, "world JSON path");
    sub->add_option("--inputs", ov.inputs, "input var_types")->delimiter(',');
    sub->add_option("--targets", ov.targets, "target var_types")->delimiter(',');
    sub->add_option("--encoder", ov.encoder, "lstm | transformer");
    sub->add_option("--topology", ov.topology, "full | same_type | disconnected");
    sub->add_option("--past-len-s", ov.past_len, "past window, seconds");
    sub->add_option("--future-len-s", ov.future_len, "future window, seconds");
    sub->add_option("--embed-size", ov.embed, "node embedding width");
    sub->add_option("--gnn-blocks", ov.blocks, "message-passing blocks");
    sub->add_flag_callback("--bypass-gnn", [&ov] { ov.bypass = true; },
                           "skip message passing");
    sub->add_flag_callback("--no-bypass-gnn", [&ov] { ov.bypass = false; },
                           "force message passing on");
    sub->add_option("--epochs", ov.epochs, "max training epochs");
    sub->add_option("--batch-size", ov.batch, "snapshots per batch");
    sub->add_option("--patience", ov.patience, "early-stopping patience");
    sub->add_option("--lr", ov.lr, "learning rate");
    sub->add_option("--snapshots", ov.snapshots, "snapshots to sample");
    sub->add_option("--splits", ov.split, "train,val,test fractions")->delimiter(',');
    sub->add_option("--seeds", ov.seeds, "run seeds")->delimiter(',');
    sub->add_option("--out-dir", ov.out_dir, "output directory");
    sub->add_option("--run-name", ov.run_name, "artifact directory name");
}

ExperimentConfig build_config(const std::string& config_path, const Overrides& ov) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = ExperimentConfig::from_json_file(config_path);
    if (ov.events) cfg.events_csv = *ov.events;
    if (ov.world) cfg.world_json = *ov.world;
    if (!ov.inputs.empty()) cfg.inputs = ov.inputs;
    if (!ov.targets.empty()) cfg.targets = ov.targets;
    if (ov.encoder) cfg.encoder = *ov.encoder;
    if (ov.topology) cfg.topology = *ov.topology;
    if (ov.past_len) cfg.past_len_s = *ov.past_len;
    if (ov.future_len) cfg.future_len_s = *ov.future_len;
    if (ov.embed) cfg.embed_size = *ov.embed;
    if (ov.blocks) cfg.gnn_blocks = *ov.blocks;
    if (ov.bypass) cfg.bypass_gnn = *ov.bypass;
    if (ov.epochs) cfg.epochs = *ov.epochs;
    if (ov.batch) cfg.batch_size = *ov.batch;
    if (ov.patience) cfg.patience = *ov.patience;
    if (ov.lr) cfg.lr = *ov.lr;
    if (ov.snapshots) cfg.n_snapshots = *ov.snapshots;
    if (!ov.split.empty()) {
        if (ov.split.size() != 3)
            throw std::invalid_argument("--splits needs exactly three fractions");
        cfg.split_train = ov.split[0];
        cfg.split_val = ov.split[1];
        cfg.split_test = ov.split[2];
    }
    if (!ov.seeds.empty()) cfg.seeds = ov.seeds;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    if (ov.run_name) cfg.run_name = *ov.run_name;
    cfg.validate();
    return cfg;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Spatio-temporal forecasting over irregular sensor networks", "tidegraph"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "synthesize an estuary dataset");
    std::string gen_world, gen_out = "out", gen_stem = "estuary";
    std::optional<double> gen_days;
    std::optional<std::uint64_t> gen_seed;
    std::optional<int> gen_stations;
    bool gen_no_gaps = false;
    gen->add_option("--world", gen_world, "world config or sidecar JSON");
    gen->add_option("--days", gen_days, "duration in days");
    gen->add_option("--seed", gen_seed, "world seed");
    gen->add_option("--stations", gen_stations, "station count (default world only)");
    gen->add_flag("--no-gaps", gen_no_gaps, "disable outage injection");
    gen->add_option("--out-dir", gen_out, "output directory");
    gen->add_option("--stem", gen_stem, "output file stem");

    // train / evaluate / ablate-topology / baselines share the config options
    std::string train_cfg_path, eval_cfg_path, ablate_cfg_path, base_cfg_path;
    Overrides train_ov, eval_ov, ablate_ov, base_ov;
    auto* tr = app.add_subcommand("train", "train and score the forecasting model");
    add_common_options(tr, train_cfg_path, train_ov);

    auto* ev = app.add_subcommand("evaluate", "score an existing checkpoint");
    add_common_options(ev, eval_cfg_path, eval_ov);
    std::string eval_checkpoint, eval_split = "test", eval_station, eval_overlays;
    bool eval_per_snapshot = false;
    ev->add_option("--checkpoint", eval_checkpoint, "trained parameter file")->required();
    ev->add_option("--split", eval_split, "train | val | test");
    ev->add_option("--station", eval_station, "score a single station");
    ev->add_flag("--per-snapshot", eval_per_snapshot, "average per-snapshot metrics");
    ev->add_option("--overlays", eval_overlays, "write truth-vs-forecast CSVs here");

    auto* ab = app.add_subcommand("ablate-topology",
                                  "compare full, same-type and disconnected graphs");
    add_common_options(ab, ablate_cfg_path, ablate_ov);

    auto* bl = app.add_subcommand("baselines", "persistence and harmonic reference scores");
    add_common_options(bl, base_cfg_path, base_ov);

    auto* rp = app.add_subcommand("report", "merge run artifacts into plot-ready tables");
    std::vector<std::string> report_dirs;
    std::string report_out = "report";
    rp->add_option("dirs", report_dirs, "run directories")->required();
    rp->add_option("--out-dir", report_out, "output directory");

    std::vector<std::string> raw = args;
    std::reverse(raw.begin(), raw.end());  // CLI11's vector overload wants reversed args
    try {
        app.parse(raw);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_generate(gen_world, gen_days, gen_seed, gen_stations, gen_no_gaps,
                                gen_out, gen_stem);
        if (tr->parsed()) return cmd_train(build_config(train_cfg_path, train_ov));
        if (ev->parsed())
            return cmd_evaluate(build_config(eval_cfg_path, eval_ov), eval_checkpoint,
                                eval_split, eval_station, eval_per_snapshot, eval_overlays);
        if (ab->parsed()) return cmd_ablate_topology(build_config(ablate_cfg_path, ablate_ov));
        if (bl->parsed()) return cmd_baselines(build_config(base_cfg_path, base_ov));
        if (rp->parsed()) return cmd_report(report_dirs, report_out);
        std::cerr << "usage error: no command\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace tidegraph::cli
