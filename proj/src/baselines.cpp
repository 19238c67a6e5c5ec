#include "tidegraph/baselines.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace tidegraph::baselines {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

Kind kind_from_string(const std::string& s) {
    if (s == "persistence") return Kind::Persistence;
    if (s == "harmonic") return Kind::Harmonic;
    throw std::invalid_argument("baseline: unknown kind '" + s + "'");
}

std::string kind_to_string(Kind k) {
    return k == Kind::Persistence ? "persistence" : "harmonic";
}

void BaselineConfig::validate() const {
    if (kind == Kind::Harmonic) {
        if (periods_h.empty()) throw std::invalid_argument("baseline: no harmonic periods");
        for (std::size_t i = 0; i < periods_h.size(); ++i) {
            if (!(periods_h[i] > 0.0))
                throw std::invalid_argument("baseline: periods must be positive");
            for (std::size_t j = i + 1; j < periods_h.size(); ++j)
                if (periods_h[i] == periods_h[j])
                    throw std::invalid_argument("baseline: duplicate harmonic period");
        }
        if (train_t1 <= train_t0)
            throw std::invalid_argument("baseline: empty harmonic training range");
    }
}

namespace {

// Gaussian elimination with partial pivoting on the (small) normal equations.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        if (std::fabs(a[piv][col]) < 1e-12)
            throw std::invalid_argument("baseline: singular harmonic system");
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double s = b[static_cast<std::size_t>(r)];
        for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[static_cast<std::size_t>(c)];
        x[static_cast<std::size_t>(r)] = s / a[r][r];
    }
    return x;
}

std::vector<double> design_row(const std::vector<double>& periods_h, std::int64_t t) {
    std::vector<double> row{1.0};
    for (double p : periods_h) {
        const double w = 2.0 * kPi / (p * 3600.0);
        row.push_back(std::cos(w * static_cast<double>(t)));
        row.push_back(std::sin(w * static_cast<double>(t)));
    }
    return row;
}

}  // namespace

std::vector<double> fit_harmonics(const std::vector<std::int64_t>& t,
                                  const std::vector<double>& y,
                                  const std::vector<double>& periods_h) {
    if (t.size() != y.size()) throw std::invalid_argument("baseline: length mismatch");
    const std::size_t ncoef = 1 + 2 * periods_h.size();
    if (t.size() < ncoef)
        throw std::invalid_argument("baseline: underdetermined harmonic fit");
    for (double p : periods_h)
        if (!(p > 0.0)) throw std::invalid_argument("baseline: periods must be positive");

    std::vector<std::vector<double>> ata(ncoef, std::vector<double>(ncoef, 0.0));
    std::vector<double> aty(ncoef, 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto row = design_row(periods_h, t[i]);
        for (std::size_t r = 0; r < ncoef; ++r) {
            aty[r] += row[r] * y[i];
            for (std::size_t c = r; c < ncoef; ++c) ata[r][c] += row[r] * row[c];
        }
    }
    for (std::size_t r = 0; r < ncoef; ++r)
        for (std::size_t c = 0; c < r; ++c) ata[r][c] = ata[c][r];
    return solve_dense(std::move(ata), std::move(aty));
}

double eval_harmonics(const std::vector<double>& coef, const std::vector<double>& periods_h,
                      std::int64_t t) {
    const auto row = design_row(periods_h, t);
    if (coef.size() != row.size())
        throw std::invalid_argument("baseline: coefficient count mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < coef.size(); ++i) s += coef[i] * row[i];
    return s;
}

namespace {

// Per-node harmonic state: one coefficient vector per label column, or a
// constant-mean fallback, or nothing when the node has no training samples.
struct NodeFit {
    bool usable = false;
    std::vector<std::vector<double>> coef;  // per label column
};

NodeFit fit_node(const events::EventStore& store, const events::NodeKey& node,
                 const events::VarTypeSpec& spec, const BaselineConfig& cfg) {
    NodeFit fit;
    const auto evs = store.query_window(node, cfg.train_t0, cfg.train_t1);
    if (evs.empty()) return fit;

    const int base = spec.k() - spec.l();
    std::vector<std::int64_t> ts(evs.size());
    for (std::size_t i = 0; i < evs.size(); ++i) ts[i] = evs[i].timestamp;

    const std::size_t ncoef = 1 + 2 * cfg.periods_h.size();
    fit.usable = true;
    for (int c = 0; c < spec.l(); ++c) {
        std::vector<double> y(evs.size());
        for (std::size_t i = 0; i < evs.size(); ++i)
            y[i] = evs[i].features[static_cast<std::size_t>(base + c)];
        if (evs.size() >= 2 * ncoef) {
            fit.coef.push_back(fit_harmonics(ts, y, cfg.periods_h));
        } else {
            double m = 0.0;
            for (double v : y) m += v;
            m /= static_cast<double>(y.size());
            std::vector<double> constant(ncoef, 0.0);
            constant[0] = m;
            fit.coef.push_back(std::move(constant));
        }
    }
    return fit;
}

}  // namespace

train::MetricReport evaluate_baseline(const events::EventStore& store,
                                      const sampler::DtdgDataset& ds,
                                      const BaselineConfig& cfg) {
    cfg.validate();
    const auto& registry = store.registry();
    std::map<std::pair<std::string, std::string>, train::PooledColumn> columns;
    std::map<events::NodeKey, NodeFit> fits;
    std::int64_t matched = 0;

    for (std::size_t si = 0; si < ds.snapshots.size(); ++si) {
        const auto& snap = ds.snapshots[si];
        for (const auto& node : snap.nodes) {
            if (ds.targets.count(node.node.var_type) == 0) continue;
            const auto& spec = registry.type(node.node.var_type);
            if (spec.l() < 1) continue;
            const int base = spec.k() - spec.l();
            const int fs = node.x_future.rows;
            if (fs == 0) {
                ++matched;  // present but nothing to score this snapshot
                continue;
            }

            // Forecast matrix, fs x l.
            std::vector<std::vector<double>> y_hat(
                static_cast<std::size_t>(fs), std::vector<double>(static_cast<std::size_t>(spec.l()), 0.0));
            if (cfg.kind == Kind::Persistence) {
                const int last = node.x_past.rows - 1;
                for (int r = 0; r < fs; ++r)
                    for (int c = 0; c < spec.l(); ++c)
                        y_hat[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                            node.x_past.at(last, base + c);
            } else {
                auto it = fits.find(node.node);
                if (it == fits.end())
                    it = fits.emplace(node.node, fit_node(store, node.node, spec, cfg)).first;
                if (!it->second.usable) continue;  // no training samples at all
                for (int r = 0; r < fs; ++r) {
                    const std::int64_t t_abs =
                        snap.t + node.future_offsets[static_cast<std::size_t>(r)];
                    for (int c = 0; c < spec.l(); ++c)
                        y_hat[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                            eval_harmonics(it->second.coef[static_cast<std::size_t>(c)],
                                           cfg.periods_h, t_abs);
                }
            }

            ++matched;
            for (int c = 0; c < spec.l(); ++c) {
                const std::string& name =
                    spec.internal_names[static_cast<std::size_t>(base + c)];
                train::PooledColumn& col = columns[{node.node.var_type, name}];
                for (int r = 0; r < fs; ++r) {
                    col.y.push_back(node.y.at(r, c));
                    col.y_hat.push_back(
                        y_hat[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
                    col.snap.push_back(static_cast<int>(si));
                }
            }
        }
    }
    if (matched == 0) throw std::runtime_error("baseline: no targeted node in any snapshot");
    return train::metrics_from_points(columns, registry, cfg.seed, cfg.per_snapshot);
}

}  // namespace tidegraph::baselines
