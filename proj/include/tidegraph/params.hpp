#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tidegraph/tensor.hpp"

namespace tidegraph::ndiff {

uint64_t fnv1a(const std::string& s);
uint64_t mix64(uint64_t a, uint64_t b);

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Named parameter collection. Initialization is derived from
// (seed, parameter name) alone, so two stores holding different parameter
// subsets still agree on the shared ones.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    Parameter& glorot(const std::string& name, int rows, int cols);
    Parameter& zeros(const std::string& name, int rows, int cols);
    Parameter& constant(const std::string& name, int rows, int cols, double value);

    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return by_name_.count(name) > 0; }

    // Registration order; stable across runs.
    const std::vector<Parameter*>& ordered() { return order_; }
    std::vector<const Parameter*> ordered() const;

    void zero_grads();
    size_t total_size() const;
    uint64_t seed() const { return seed_; }

    // Checkpoint container: 8-byte magic, little-endian sizes, a JSON index
    // of {name, rows, cols, offset}, then raw IEEE-754 doubles. Bit-exact
    // round trip.
    void save(const std::string& path) const;
    void load(const std::string& path);  // shapes must match the store

private:
    Parameter& create(const std::string& name, int rows, int cols,
                      const std::function<void(Tensor&, std::mt19937_64&)>& init);

    uint64_t seed_;
    std::map<std::string, std::unique_ptr<Parameter>> by_name_;
    std::vector<Parameter*> order_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. A step with any non-finite gradient
// is skipped entirely (counted in skipped_steps) and leaves state untouched.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& params);
    int64_t timestep() const { return t_; }
    int64_t skipped_steps() const { return skipped_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
    int64_t skipped_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> state_;  // name -> (m, v)
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    int coords_checked = 0;
    std::string worst_param;
};

// Central finite differences against the analytic gradient produced by
// loss_fn(true). loss_fn(false) must evaluate the same closure without
// touching gradients. Coordinates are sampled per parameter.
GradCheckResult grad_check(ParamStore& params,
                           const std::function<double(bool)>& loss_fn,
                           int coords_per_param = 8, double h = 1e-5,
                           uint64_t seed = 1234);

}  // namespace tidegraph::ndiff
