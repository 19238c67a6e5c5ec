#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tidegraph/model.hpp"
#include "tidegraph/sampler.hpp"
#include "tidegraph/tape.hpp"

namespace tidegraph::train {

using ndiff::Tape;
using ndiff::Tensor;
using ndiff::Var;

// Index of agreement (Willmott form, squared residuals):
//   ioa = 1 - sum (y - yhat)^2 / sum (|yhat - ybar| + |y - ybar|)^2.
// `defined` is false when the denominator vanishes (constant y matched by a
// constant forecast); the value is then meaningless and must not be scored.
struct IoaValue {
    double value = 0.0;
    bool defined = false;
};

IoaValue ioa(const std::vector<double>& y, const std::vector<double>& y_hat);

// Differentiable batch loss: for every forecast and every label column with
// at least 2 rows, one term (1 - ioa) is formed over that (node, column)
// pair; the batch loss is the plain mean of all terms. Pairs whose
// denominator vanishes are skipped; callers must check `pairs` before using
// `total` (fit/split_loss throw when an entire batch has no scorable pair).
struct LossBatch {
    Var total;       // 1x1: sum of per-pair loss terms on this tape
    int pairs = 0;   // terms contributed by this tape
};
LossBatch ioa_loss_terms(Tape& t, const std::vector<model::TargetForecast>& forecasts);

// Metrics --------------------------------------------------------------

struct MetricEntry {
    std::string var_type;
    std::string quantity;  // label column name, or derived "speed"/"direction"
    double ioa = 0.0;
    bool ioa_defined = false;
    double rmse = 0.0;
    std::int64_t points = 0;    // scored points
    std::int64_t excluded = 0;  // zero-speed direction exclusions
};

struct MetricReport {
    std::uint64_t seed = 0;
    std::vector<MetricEntry> entries;

    const MetricEntry* find(const std::string& var_type, const std::string& quantity) const;
    std::string to_json_text() const;
    std::string to_csv_text() const;
    static MetricReport from_json_text(const std::string& text);
};

// Direction helpers (shared with tests and baselines). Bearings are degrees
// clockwise from north: (u, v) = (0, 1) -> 0, (1, 0) -> 90.
double bearing_deg(double u, double v);
double wrap_deg(double e);  // into (-180, 180]

// Pooled point set for one (var_type, column): matched truth/forecast pairs
// in raw units, concatenated over snapshots and nodes. `snap` tags each point
// with its snapshot ordinal for the per-snapshot aggregation mode.
struct PooledColumn {
    std::vector<double> y;
    std::vector<double> y_hat;
    std::vector<int> snap;
};

// Metric assembly from pooled raw-unit points. Var_types whose label columns
// are exactly {u_east, v_north} additionally get derived speed/direction
// entries. `per_snapshot` averages per-snapshot IoA/RMSE (over snapshots
// where they are defined) instead of pooling all points.
MetricReport metrics_from_points(
    const std::map<std::pair<std::string, std::string>, PooledColumn>& columns,
    const events::Registry& registry, std::uint64_t seed, bool per_snapshot = false);

// Training -------------------------------------------------------------

struct TrainConfig {
    int epochs = 60;
    int batch_size = 8;
    int patience = 20;          // early-stopping epochs without improvement
    double lr = 1e-3;
    std::uint64_t seed = 1;     // batch shuffling
    std::string checkpoint_path;  // best parameters, written when non-empty
    std::string history_path;     // per-epoch CSV, written when non-empty
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    int epochs_run = 0;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    std::vector<EpochStats> history;
    bool stopped_early = false;
};

// Epoch loop with Adam, shuffled mini-batches, early stopping on validation
// loss, and in-memory best-checkpoint restore (plus optional file). Aborts
// with std::runtime_error on a non-finite batch loss. The model ends holding
// the best-validation parameters.
TrainResult fit(model::ForecastModel& m, const sampler::DtdgDataset& ds_train,
                const sampler::DtdgDataset& ds_val, const TrainConfig& cfg);

// Mean batch loss over a whole split without touching parameters.
double split_loss(const model::ForecastModel& m, const sampler::DtdgDataset& ds);

struct EvalOptions {
    std::optional<std::string> station;  // score only nodes at this location
    bool per_snapshot = false;           // average per-snapshot metrics
    std::string overlay_dir;             // when set: truth-vs-forecast CSVs
    std::uint64_t seed = 0;              // stamped into the report
};

// Pure evaluation in raw units. Throws when the filter matches no target
// node in any snapshot.
MetricReport evaluate(const model::ForecastModel& m, const sampler::DtdgDataset& ds,
                      const EvalOptions& opts);

// Multi-seed aggregation -----------------------------------------------

struct AggregateEntry {
    std::string var_type;
    std::string quantity;
    double ioa_mean = 0.0, ioa_std = 0.0;
    double rmse_mean = 0.0, rmse_std = 0.0;
    int runs = 0;  // runs where the metric was defined
};

struct MultiSeedResult {
    std::vector<std::uint64_t> seeds;
    std::vector<MetricReport> per_seed;          // aligned with seeds
    std::vector<std::string> failures;           // "seed N: reason"
    std::vector<AggregateEntry> aggregate;
    bool complete() const { return failures.empty(); }
    std::string to_json_text() const;
};

MultiSeedResult multi_seed(const std::vector<std::uint64_t>& seeds,
                           const std::function<MetricReport(std::uint64_t)>& run);

}  // namespace tidegraph::train
