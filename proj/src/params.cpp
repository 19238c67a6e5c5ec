#include "tidegraph/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

namespace tidegraph::ndiff {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t mix64(uint64_t a, uint64_t b) {
    uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

Parameter& ParamStore::create(const std::string& name, int rows, int cols,
                              const std::function<void(Tensor&, std::mt19937_64&)>& init) {
    if (by_name_.count(name)) throw std::logic_error("param exists: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(rows, cols);
    p->grad = Tensor(rows, cols);
    std::mt19937_64 rng(mix64(seed_, fnv1a(name)));
    init(p->value, rng);
    Parameter* raw = p.get();
    by_name_[name] = std::move(p);
    order_.push_back(raw);
    return *raw;
}

Parameter& ParamStore::glorot(const std::string& name, int rows, int cols) {
    return create(name, rows, cols, [](Tensor& t, std::mt19937_64& rng) {
        const double limit = std::sqrt(6.0 / (t.rows + t.cols));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (double& x : t.v) x = u(rng);
    });
}

Parameter& ParamStore::zeros(const std::string& name, int rows, int cols) {
    return create(name, rows, cols, [](Tensor&, std::mt19937_64&) {});
}

Parameter& ParamStore::constant(const std::string& name, int rows, int cols, double value) {
    return create(name, rows, cols, [value](Tensor& t, std::mt19937_64&) {
        std::fill(t.v.begin(), t.v.end(), value);
    });
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no such param: " + name);
    return *it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no such param: " + name);
    return *it->second;
}

std::vector<const Parameter*> ParamStore::ordered() const {
    return {order_.begin(), order_.end()};
}

void ParamStore::zero_grads() {
    for (Parameter* p : order_) std::fill(p->grad.v.begin(), p->grad.v.end(), 0.0);
}

size_t ParamStore::total_size() const {
    size_t n = 0;
    for (const Parameter* p : order_) n += p->value.v.size();
    return n;
}

namespace {
constexpr char kMagic[8] = {'T', 'G', 'C', 'K', 'P', 'T', '0', '1'};
}

void ParamStore::save(const std::string& path) const {
    nlohmann::ordered_json index = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (const Parameter* p : order_) {
        index.push_back({{"name", p->name},
                         {"rows", p->value.rows},
                         {"cols", p->value.cols},
                         {"offset", offset}});
        offset += p->value.v.size();
    }
    const std::string idx = index.dump();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for write: " + path);
    f.write(kMagic, 8);
    const uint64_t idx_len = idx.size();
    f.write(reinterpret_cast<const char*>(&idx_len), 8);
    f.write(idx.data(), static_cast<std::streamsize>(idx.size()));
    for (const Parameter* p : order_)
        f.write(reinterpret_cast<const char*>(p->value.v.data()),
                static_cast<std::streamsize>(p->value.v.size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

void ParamStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    uint64_t idx_len = 0;
    f.read(reinterpret_cast<char*>(&idx_len), 8);
    std::string idx(idx_len, '\0');
    f.read(idx.data(), static_cast<std::streamsize>(idx_len));
    if (!f) throw std::runtime_error("truncated checkpoint index: " + path);
    const auto index = nlohmann::json::parse(idx);
    const std::streampos blob_start = f.tellg();
    for (const auto& entry : index) {
        const std::string name = entry.at("name");
        Parameter& p = get(name);
        const int rows = entry.at("rows"), cols = entry.at("cols");
        if (rows != p.value.rows || cols != p.value.cols)
            throw std::runtime_error("checkpoint shape mismatch for " + name + ": file has " +
                                     std::to_string(rows) + "x" + std::to_string(cols) +
                                     ", store has " + p.value.shape_str());
        const uint64_t offset = entry.at("offset");
        f.seekg(blob_start + static_cast<std::streamoff>(offset * sizeof(double)));
        f.read(reinterpret_cast<char*>(p.value.v.data()),
               static_cast<std::streamsize>(p.value.v.size() * sizeof(double)));
        if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
    }
}

void Adam::step(ParamStore& params) {
    for (Parameter* p : params.ordered())
        if (!p->grad.all_finite()) {
            ++skipped_;
            return;
        }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params.ordered()) {
        auto it = state_.find(p->name);
        if (it == state_.end())
            it = state_.emplace(p->name, std::make_pair(Tensor(p->value.rows, p->value.cols),
                                                        Tensor(p->value.rows, p->value.cols)))
                     .first;
        Tensor& m = it->second.first;
        Tensor& v = it->second.second;
        for (size_t i = 0; i < p->value.v.size(); ++i) {
            const double g = p->grad.v[i];
            m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * g;
            v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m.v[i] / bc1;
            const double vhat = v.v[i] / bc2;
            p->value.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

GradCheckResult grad_check(ParamStore& params, const std::function<double(bool)>& loss_fn,
                           int coords_per_param, double h, uint64_t seed) {
    params.zero_grads();
    loss_fn(true);  // fill analytic grads

    GradCheckResult res;
    std::mt19937_64 rng(seed);
    for (Parameter* p : params.ordered()) {
        const int n = static_cast<int>(p->value.v.size());
        if (n == 0) continue;
        std::vector<int> coords;
        if (n <= coords_per_param) {
            for (int i = 0; i < n; ++i) coords.push_back(i);
        } else {
            std::uniform_int_distribution<int> pick(0, n - 1);
            for (int i = 0; i < coords_per_param; ++i) coords.push_back(pick(rng));
        }
        for (int c : coords) {
            const double keep = p->value.v[c];
            p->value.v[c] = keep + h;
            const double lp = loss_fn(false);
            p->value.v[c] = keep - h;
            const double lm = loss_fn(false);
            p->value.v[c] = keep;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = p->grad.v[c];
            // The 1e-6 floor is an absolute deadband: when both sides are
            // below it, the finite difference is dominated by roundoff in the
            // loss evaluations and the ratio would be meaningless noise.
            const double rel = std::fabs(fd - an) / std::max(1e-6, std::fabs(fd) + std::fabs(an));
            ++res.coords_checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = p->name;
            }
        }
    }
    return res;
}

}  // namespace tidegraph::ndiff
