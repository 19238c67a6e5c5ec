#include "tidegraph/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "tidegraph/events.hpp"

namespace tidegraph::train {

namespace {

constexpr double kDenEps = 1e-12;
constexpr double kPi = 3.141592653589793238462643383279502884;

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double rmse_of(const std::vector<double>& err) {
    double s = 0.0;
    for (double e : err) s += e * e;
    return std::sqrt(s / static_cast<double>(err.size()));
}

}  // namespace

IoaValue ioa(const std::vector<double>& y, const std::vector<double>& y_hat) {
    if (y.size() != y_hat.size()) throw std::invalid_argument("ioa: length mismatch");
    if (y.size() < 2) throw std::invalid_argument("ioa: need at least 2 points");
    const double ybar = mean_of(y);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y_hat[i];
        num += d * d;
        const double s = std::fabs(y_hat[i] - ybar) + std::fabs(y[i] - ybar);
        den += s * s;
    }
    if (den < kDenEps) return {0.0, false};
    return {1.0 - num / den, true};
}

LossBatch ioa_loss_terms(Tape& t, const std::vector<model::TargetForecast>& forecasts) {
    LossBatch out;
    for (const auto& tf : forecasts) {
        if (tf.fs < 2) continue;
        for (int c = 0; c < tf.l; ++c) {
            Tensor ycol(tf.fs, 1);
            double ybar = 0.0;
            for (int r = 0; r < tf.fs; ++r) {
                ycol.at(r, 0) = tf.y.at(r, c);
                ybar += tf.y.at(r, c);
            }
            ybar /= static_cast<double>(tf.fs);
            Tensor ydev(tf.fs, 1);  // |y - ybar|, a constant of the labels
            for (int r = 0; r < tf.fs; ++r) ydev.at(r, 0) = std::fabs(ycol.at(r, 0) - ybar);

            Var yh = t.slice_cols(tf.y_hat, c, c + 1);
            Var diff = t.sub(yh, t.input(ycol));
            Var num = t.sum_all(t.mul(diff, diff));
            Var spread = t.add(t.abs(t.add_scalar(yh, -ybar)), t.input(ydev));
            Var den = t.sum_all(t.mul(spread, spread));
            if (t.val(den).item() < kDenEps) continue;  // unscorable pair
            Var term = t.div(num, den);                 // = 1 - ioa for this pair
            out.total = out.pairs == 0 ? term : t.add(out.total, term);
            ++out.pairs;
        }
    }
    return out;
}

// Metrics --------------------------------------------------------------

double bearing_deg(double u, double v) {
    const double d = std::atan2(u, v) * 180.0 / kPi;
    const double w = std::fmod(d + 360.0, 360.0);
    return w == 360.0 ? 0.0 : w;
}

double wrap_deg(double e) {
    double w = std::fmod(e + 180.0, 360.0);
    if (w <= 0.0) w += 360.0;
    return w - 180.0;
}

const MetricEntry* MetricReport::find(const std::string& var_type,
                                      const std::string& quantity) const {
    for (const auto& e : entries)
        if (e.var_type == var_type && e.quantity == quantity) return &e;
    return nullptr;
}

std::string MetricReport::to_json_text() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : entries)
        arr.push_back({{"var_type", e.var_type},
                       {"quantity", e.quantity},
                       {"ioa", e.ioa},
                       {"ioa_defined", e.ioa_defined},
                       {"rmse", e.rmse},
                       {"points", e.points},
                       {"excluded", e.excluded}});
    j["entries"] = arr;
    return j.dump(2);
}

std::string MetricReport::to_csv_text() const {
    std::string out = "var_type,quantity,ioa,ioa_defined,rmse,points,excluded\n";
    for (const auto& e : entries) {
        out += e.var_type + "," + e.quantity + "," + events::format_double(e.ioa) + "," +
               (e.ioa_defined ? "1" : "0") + "," + events::format_double(e.rmse) + "," +
               std::to_string(e.points) + "," + std::to_string(e.excluded) + "\n";
    }
    return out;
}

MetricReport MetricReport::from_json_text(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MetricReport r;
    r.seed = j.at("seed");
    for (const auto& e : j.at("entries")) {
        MetricEntry m;
        m.var_type = e.at("var_type");
        m.quantity = e.at("quantity");
        m.ioa = e.at("ioa");
        m.ioa_defined = e.at("ioa_defined");
        m.rmse = e.at("rmse");
        m.points = e.at("points");
        m.excluded = e.at("excluded");
        r.entries.push_back(std::move(m));
    }
    return r;
}

namespace {

// IoA + RMSE either pooled or averaged over per-snapshot groups.
void fill_scores(MetricEntry& e, const std::vector<double>& y, const std::vector<double>& yh,
                 const std::vector<int>& snap, bool per_snapshot) {
    e.points = static_cast<std::int64_t>(y.size());
    if (y.size() < 2) return;
    if (!per_snapshot) {
        const IoaValue v = ioa(y, yh);
        e.ioa = v.value;
        e.ioa_defined = v.defined;
        std::vector<double> err(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) err[i] = y[i] - yh[i];
        e.rmse = rmse_of(err);
        return;
    }
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < y.size(); ++i) {
        auto& g = groups[snap[i]];
        g.first.push_back(y[i]);
        g.second.push_back(yh[i]);
    }
    double ioa_sum = 0.0, rmse_sum = 0.0;
    int ioa_n = 0, rmse_n = 0;
    for (const auto& [si, g] : groups) {
        if (g.first.size() < 2) continue;
        const IoaValue v = ioa(g.first, g.second);
        if (v.defined) {
            ioa_sum += v.value;
            ++ioa_n;
        }
        std::vector<double> err(g.first.size());
        for (std::size_t i = 0; i < g.first.size(); ++i) err[i] = g.first[i] - g.second[i];
        rmse_sum += rmse_of(err);
        ++rmse_n;
    }
    e.ioa_defined = ioa_n > 0;
    e.ioa = ioa_n > 0 ? ioa_sum / ioa_n : 0.0;
    e.rmse = rmse_n > 0 ? rmse_sum / rmse_n : 0.0;
}

}  // namespace

MetricReport metrics_from_points(
    const std::map<std::pair<std::string, std::string>, PooledColumn>& columns,
    const events::Registry& registry, std::uint64_t seed, bool per_snapshot) {
    MetricReport rep;
    rep.seed = seed;

    std::vector<std::string> types;
    for (const auto& [key, col] : columns)
        if (types.empty() || types.back() != key.first) types.push_back(key.first);

    for (const std::string& ty : types) {
        const auto& spec = registry.type(ty);
        const int base = spec.k() - spec.l();
        for (int c = 0; c < spec.l(); ++c) {
            const std::string& name = spec.internal_names[static_cast<std::size_t>(base + c)];
            auto it = columns.find({ty, name});
            if (it == columns.end()) continue;
            MetricEntry e;
            e.var_type = ty;
            e.quantity = name;
            fill_scores(e, it->second.y, it->second.y_hat, it->second.snap, per_snapshot);
            rep.entries.push_back(std::move(e));
        }

        // Derived polar quantities for east/north vector pairs.
        if (spec.l() != 2) continue;
        auto iu = columns.find({ty, "u_east"});
        auto iv = columns.find({ty, "v_north"});
        if (iu == columns.end() || iv == columns.end()) continue;
        const PooledColumn& cu = iu->second;
        const PooledColumn& cv = iv->second;
        if (cu.y.size() != cv.y.size()) continue;

        MetricEntry sp;
        sp.var_type = ty;
        sp.quantity = "speed";
        std::vector<double> st(cu.y.size()), sh(cu.y.size());
        for (std::size_t i = 0; i < cu.y.size(); ++i) {
            st[i] = std::hypot(cu.y[i], cv.y[i]);
            sh[i] = std::hypot(cu.y_hat[i], cv.y_hat[i]);
        }
        fill_scores(sp, st, sh, cu.snap, per_snapshot);
        rep.entries.push_back(std::move(sp));

        MetricEntry dir;
        dir.var_type = ty;
        dir.quantity = "direction";
        std::vector<double> dt, dref;
        std::vector<int> snaps;
        for (std::size_t i = 0; i < cu.y.size(); ++i) {
            const bool truth_zero = cu.y[i] == 0.0 && cv.y[i] == 0.0;
            const bool fc_zero = cu.y_hat[i] == 0.0 && cv.y_hat[i] == 0.0;
            if (truth_zero || fc_zero) {
                ++dir.excluded;
                continue;
            }
            const double b_true = bearing_deg(cu.y[i], cv.y[i]);
            const double b_hat = bearing_deg(cu.y_hat[i], cv.y_hat[i]);
            const double err = wrap_deg(b_hat - b_true);
            dt.push_back(b_true);
            dref.push_back(b_true + err);  // forecast enters via the wrapped error
            snaps.push_back(cu.snap[i]);
        }
        fill_scores(dir, dt, dref, snaps, per_snapshot);
        rep.entries.push_back(std::move(dir));
    }
    return rep;
}

// Training -------------------------------------------------------------

namespace {

struct SplitAccum {
    double sum = 0.0;
    std::int64_t pairs = 0;
};

SplitAccum accumulate_loss(const model::ForecastModel& m, const sampler::DtdgDataset& ds) {
    SplitAccum acc;
    for (const auto& snap : ds.snapshots) {
        Tape t;
        const auto fcs = m.forward(t, snap, ds.window, ds.targets);
        LossBatch lb = ioa_loss_terms(t, fcs);
        if (lb.pairs == 0) continue;
        acc.sum += t.val(lb.total).item();
        acc.pairs += lb.pairs;
    }
    return acc;
}

}  // namespace

double split_loss(const model::ForecastModel& m, const sampler::DtdgDataset& ds) {
    const SplitAccum acc = accumulate_loss(m, ds);
    if (acc.pairs == 0) throw std::runtime_error("loss: no scorable (node, column) pair");
    return acc.sum / static_cast<double>(acc.pairs);
}

TrainResult fit(model::ForecastModel& m, const sampler::DtdgDataset& ds_train,
                const sampler::DtdgDataset& ds_val, const TrainConfig& cfg) {
    if (ds_train.snapshots.empty() || ds_val.snapshots.empty())
        throw std::invalid_argument("train: empty train or validation split");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.patience < 0)
        throw std::invalid_argument("train: bad epoch/batch/patience settings");

    ndiff::AdamConfig ac;
    ac.lr = cfg.lr;
    ndiff::Adam adam(ac);
    auto& params = m.params();

    std::vector<int> order(ds_train.snapshots.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::mt19937_64 rng(cfg.seed);

    TrainResult res;
    res.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best;  // values of params.ordered(), in order
    int bad_epochs = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_sum = 0.0;
        std::int64_t epoch_pairs = 0;

        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
            params.zero_grads();
            double batch_sum = 0.0;
            std::int64_t batch_pairs = 0;
            for (std::size_t i = at; i < end; ++i) {
                const auto& snap = ds_train.snapshots[static_cast<std::size_t>(order[i])];
                Tape t;
                const auto fcs = m.forward(t, snap, ds_train.window, ds_train.targets);
                LossBatch lb = ioa_loss_terms(t, fcs);
                if (lb.pairs == 0) continue;
                batch_sum += t.val(lb.total).item();
                batch_pairs += lb.pairs;
                t.backward(lb.total);  // raw sum; rescaled to the mean below
            }
            if (batch_pairs == 0)
                throw std::runtime_error("train: batch with no scorable node (epoch " +
                                         std::to_string(epoch) + ")");
            const double batch_loss = batch_sum / static_cast<double>(batch_pairs);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: diverged, non-finite loss at epoch " +
                                         std::to_string(epoch));
            const double inv = 1.0 / static_cast<double>(batch_pairs);
            for (ndiff::Parameter* p : params.ordered()) p->grad.scale_(inv);
            adam.step(params);
            epoch_sum += batch_sum;
            epoch_pairs += batch_pairs;
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_loss = epoch_sum / static_cast<double>(epoch_pairs);
        st.val_loss = split_loss(m, ds_val);
        if (!std::isfinite(st.val_loss))
            throw std::runtime_error("train: diverged, non-finite validation loss at epoch " +
                                     std::to_string(epoch));
        res.history.push_back(st);
        res.epochs_run = epoch;

        if (st.val_loss < res.best_val_loss) {
            res.best_val_loss = st.val_loss;
            res.best_epoch = epoch;
            best.clear();
            for (ndiff::Parameter* p : params.ordered()) best.push_back(p->value);
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (cfg.patience > 0 && bad_epochs >= cfg.patience) {
                res.stopped_early = true;
                break;
            }
        }
    }

    // leave the model at its best validation point
    if (!best.empty()) {
        std::size_t i = 0;
        for (ndiff::Parameter* p : params.ordered()) p->value = best[i++];
    }
    if (!cfg.checkpoint_path.empty()) {
        const auto dir = std::filesystem::path(cfg.checkpoint_path).parent_path();
        if (!dir.empty()) std::filesystem::create_directories(dir);
        params.save(cfg.checkpoint_path);
    }
    if (!cfg.history_path.empty()) {
        const auto dir = std::filesystem::path(cfg.history_path).parent_path();
        if (!dir.empty()) std::filesystem::create_directories(dir);
        std::ofstream f(cfg.history_path, std::ios::binary);
        f << "epoch,train_loss,val_loss\n";
        for (const auto& h : res.history)
            f << h.epoch << "," << events::format_double(h.train_loss) << ","
              << events::format_double(h.val_loss) << "\n";
    }
    return res;
}

MetricReport evaluate(const model::ForecastModel& m, const sampler::DtdgDataset& ds,
                      const EvalOptions& opts) {
    std::map<std::pair<std::string, std::string>, PooledColumn> columns;
    std::map<events::NodeKey, std::string> overlays;
    std::int64_t matched = 0;

    for (std::size_t si = 0; si < ds.snapshots.size(); ++si) {
        const auto& snap = ds.snapshots[si];
        Tape t;
        const auto fcs = m.forward(t, snap, ds.window, ds.targets);
        for (const auto& tf : fcs) {
            if (opts.station && tf.node.location != *opts.station) continue;
            ++matched;
            const Tensor y_hat = m.denormalize_labels(tf.node, t.val(tf.y_hat));
            const auto& spec = m.registry().type(tf.node.var_type);
            const int base = spec.k() - spec.l();
            const auto& node_sample = snap.nodes[static_cast<std::size_t>(tf.node_index)];
            for (int c = 0; c < tf.l; ++c) {
                const std::string& name =
                    spec.internal_names[static_cast<std::size_t>(base + c)];
                PooledColumn& col = columns[{tf.node.var_type, name}];
                for (int r = 0; r < tf.fs; ++r) {
                    col.y.push_back(tf.y_raw.at(r, c));
                    col.y_hat.push_back(y_hat.at(r, c));
                    col.snap.push_back(static_cast<int>(si));
                }
            }
            if (!opts.overlay_dir.empty()) {
                std::string& txt = overlays[tf.node];
                for (int r = 0; r < tf.fs; ++r) {
                    txt += std::to_string(snap.t) + "," +
                           std::to_string(node_sample.future_offsets[static_cast<std::size_t>(
                               r)]);
                    for (int c = 0; c < tf.l; ++c)
                        txt += "," + events::format_double(tf.y_raw.at(r, c)) + "," +
                               events::format_double(y_hat.at(r, c));
                    txt += "\n";
                }
            }
        }
    }
    if (matched == 0)
        throw std::runtime_error("evaluate: no target node matched" +
                                 (opts.station ? " at station " + *opts.station : ""));

    if (!opts.overlay_dir.empty()) {
        std::filesystem::create_directories(opts.overlay_dir);
        for (const auto& [node, txt] : overlays) {
            const auto& spec = m.registry().type(node.var_type);
            const int base = spec.k() - spec.l();
            std::string header = "snapshot_t,offset_s";
            for (int c = 0; c < spec.l(); ++c) {
                const auto& nm = spec.internal_names[static_cast<std::size_t>(base + c)];
                header += "," + nm + "_true," + nm + "_forecast";
            }
            std::ofstream f(opts.overlay_dir + "/overlay_" + node.var_type + "_" +
                                node.location + ".csv",
                            std::ios::binary);
            f << header << "\n" << txt;
        }
    }
    return metrics_from_points(columns, m.registry(), opts.seed, opts.per_snapshot);
}

// Multi-seed aggregation -----------------------------------------------

MultiSeedResult multi_seed(const std::vector<std::uint64_t>& seeds,
                           const std::function<MetricReport(std::uint64_t)>& run) {
    if (seeds.empty()) throw std::invalid_argument("multi_seed: need at least one seed");
    MultiSeedResult out;
    out.seeds = seeds;
    for (std::uint64_t s : seeds) {
        try {
            out.per_seed.push_back(run(s));
        } catch (const std::exception& ex) {
            out.per_seed.push_back(MetricReport{});
            out.failures.push_back("seed " + std::to_string(s) + ": " + ex.what());
        }
    }

    // aggregate keys in first-seen order across reports
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& rep : out.per_seed)
        for (const auto& e : rep.entries) {
            const std::pair<std::string, std::string> k{e.var_type, e.quantity};
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
        }
    for (const auto& k : keys) {
        AggregateEntry a;
        a.var_type = k.first;
        a.quantity = k.second;
        std::vector<double> ioas, rmses;
        for (const auto& rep : out.per_seed) {
            const MetricEntry* e = rep.find(k.first, k.second);
            if (!e) continue;
            if (e->ioa_defined) ioas.push_back(e->ioa);
            rmses.push_back(e->rmse);
        }
        auto mean_std = [](const std::vector<double>& v) -> std::pair<double, double> {
            if (v.empty()) return {0.0, 0.0};
            const double m = mean_of(v);
            if (v.size() < 2) return {m, 0.0};
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
        };
        std::tie(a.ioa_mean, a.ioa_std) = mean_std(ioas);
        std::tie(a.rmse_mean, a.rmse_std) = mean_std(rmses);
        a.runs = static_cast<int>(ioas.size());
        out.aggregate.push_back(std::move(a));
    }
    return out;
}

std::string MultiSeedResult::to_json_text() const {
    nlohmann::ordered_json j;
    j["seeds"] = seeds;
    j["complete"] = complete();
    j["failures"] = failures;
    nlohmann::ordered_json agg = nlohmann::ordered_json::array();
    for (const auto& a : aggregate)
        agg.push_back({{"var_type", a.var_type},
                       {"quantity", a.quantity},
                       {"ioa_mean", a.ioa_mean},
                       {"ioa_std", a.ioa_std},
                       {"rmse_mean", a.rmse_mean},
                       {"rmse_std", a.rmse_std},
                       {"runs", a.runs}});
    j["aggregate"] = agg;
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (const auto& rep : per_seed) per.push_back(nlohmann::ordered_json::parse(rep.to_json_text()));
    j["per_seed"] = per;
    return j.dump(2);
}

}  // namespace tidegraph::train
