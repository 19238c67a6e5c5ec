#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tidegraph/events.hpp"
#include "tidegraph/sampler.hpp"
#include "tidegraph/train.hpp"

namespace tidegraph::baselines {

// Reference forecasters scored through the exact metrics pipeline the learned
// model uses, so their reports are directly comparable.
enum class Kind { Persistence, Harmonic };

Kind kind_from_string(const std::string& s);  // "persistence" | "harmonic"
std::string kind_to_string(Kind k);

// Least-squares fit of y(t) ~ c0 + sum_j (a_j cos(w_j t) + b_j sin(w_j t))
// with w_j = 2*pi / (periods_h[j] * 3600). Returns [c0, a_1, b_1, a_2, ...].
// Throws std::invalid_argument when the system is underdetermined
// (fewer samples than coefficients) or the periods are invalid.
std::vector<double> fit_harmonics(const std::vector<std::int64_t>& t,
                                  const std::vector<double>& y,
                                  const std::vector<double>& periods_h);

double eval_harmonics(const std::vector<double>& coef, const std::vector<double>& periods_h,
                      std::int64_t t);

struct BaselineConfig {
    Kind kind = Kind::Persistence;
    std::vector<double> periods_h;  // harmonic only; positive, distinct
    std::int64_t train_t0 = 0;      // harmonic fit range [train_t0, train_t1)
    std::int64_t train_t1 = 0;
    std::uint64_t seed = 0;         // stamped into the report
    bool per_snapshot = false;

    void validate() const;
};

// Scores the baseline over every targeted node of every snapshot, in raw
// units. Persistence holds the node's most recent past label row across the
// future window. Harmonic fits each (node, label column) once on the
// training range and extrapolates; nodes with fewer than twice the
// coefficient count of training samples fall back to their training mean,
// and nodes with no training samples contribute no points. The evaluation
// range is never used for fitting. Throws when no snapshot contains a
// targeted node.
train::MetricReport evaluate_baseline(const events::EventStore& store,
                                      const sampler::DtdgDataset& ds,
                                      const BaselineConfig& cfg);

}  // namespace tidegraph::baselines
