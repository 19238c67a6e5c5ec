#include "tidegraph/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "tidegraph/params.hpp"

namespace tidegraph::synth {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Independent, name-keyed random stream so adding stations or types never
// shifts anyone else's draws.
std::mt19937_64 stream(std::uint64_t seed, const std::string& name) {
    return std::mt19937_64(ndiff::mix64(seed, ndiff::fnv1a(name)));
}

double harmonic_height(const StationConfig& st, std::int64_t t) {
    double h = 0.0;
    for (const auto& c : st.constituents)
        h += c.amplitude_m *
             std::cos(2.0 * kPi * static_cast<double>(t) / (c.period_h * 3600.0) + c.phase_rad);
    return h;
}

}  // namespace

WorldConfig WorldConfig::defaults(int n_stations) {
    WorldConfig w;
    for (int i = 0; i < n_stations; ++i) {
        StationConfig st;
        st.name = "st" + std::to_string(i);
        st.channel_pos = n_stations > 1 ? static_cast<double>(i) / (n_stations - 1) : 0.0;
        // Amplitudes grow and phases shift toward the head of the estuary;
        // three incommensurate constituents give a slowly repeating beat.
        st.constituents = {
            {"M2", 0.50 * (1.0 + 0.20 * st.channel_pos), 12.4206012, 0.30 * st.channel_pos},
            {"S2", 0.16 * (1.0 + 0.20 * st.channel_pos), 12.0, 0.8 + 0.35 * st.channel_pos},
            {"O1", 0.12 * (1.0 + 0.10 * st.channel_pos), 25.8193417, 2.1 + 0.25 * st.channel_pos},
        };
        st.current_gain = 6000.0 * (1.0 - 0.25 * st.channel_pos);
        st.current_dir_deg = 25.0 + 15.0 * st.channel_pos;
        st.surge_lag_s = static_cast<std::int64_t>(st.channel_pos * 4.0) * w.period_s;
        w.stations.push_back(std::move(st));
    }
    w.missing_rates = {{"current", 0.243}, {"ssh", 0.421}, {"wind", 0.841}};
    return w;
}

void WorldConfig::validate() const {
    if (stations.empty()) throw std::invalid_argument("world: no stations");
    if (period_s <= 0) throw std::invalid_argument("world: period must be > 0");
    if (duration_days <= 0) throw std::invalid_argument("world: duration must be > 0");
    if (std::fabs(wind_ar) >= 1.0 || std::fabs(surge_ar) >= 1.0)
        throw std::invalid_argument("world: AR coefficients must be in (-1, 1)");
    if (burst_mean_slots < 1.0) throw std::invalid_argument("world: burst mean must be >= 1");
    for (const auto& [ty, rate] : missing_rates) {
        if (rate < 0.0 || rate >= 1.0)
            throw std::invalid_argument("world: missing rate for " + ty + " must be in [0,1)");
        // start probability of an outage run; must be a valid probability
        if (rate > 0.0 && rate / ((1.0 - rate) * burst_mean_slots) > 1.0)
            throw std::invalid_argument("world: rate " + std::to_string(rate) +
                                        " unreachable with burst mean " +
                                        std::to_string(burst_mean_slots));
    }
    for (const auto& st : stations) {
        if (st.name.empty()) throw std::invalid_argument("world: station with empty name");
        if (st.surge_lag_s < 0) throw std::invalid_argument("world: negative surge lag");
        for (const auto& c : st.constituents) {
            if (c.amplitude_m < 0) throw std::invalid_argument("world: negative amplitude");
            if (c.period_h <= 0) throw std::invalid_argument("world: period must be > 0");
        }
    }
}

std::string WorldConfig::to_json_text() const {
    nlohmann::ordered_json j;
    nlohmann::ordered_json sts = nlohmann::ordered_json::array();
    for (const auto& st : stations) {
        nlohmann::ordered_json s;
        s["name"] = st.name;
        s["channel_pos"] = st.channel_pos;
        s["current_gain"] = st.current_gain;
        s["current_dir_deg"] = st.current_dir_deg;
        s["surge_lag_s"] = st.surge_lag_s;
        nlohmann::ordered_json cs = nlohmann::ordered_json::array();
        for (const auto& c : st.constituents)
            cs.push_back({{"name", c.name},
                          {"amplitude_m", c.amplitude_m},
                          {"period_h", c.period_h},
                          {"phase_rad", c.phase_rad}});
        s["constituents"] = cs;
        sts.push_back(s);
    }
    j["stations"] = sts;
    j["wind_ar"] = wind_ar;
    j["wind_noise"] = wind_noise;
    j["surge_ar"] = surge_ar;
    j["surge_noise"] = surge_noise;
    j["wind_to_surge"] = wind_to_surge;
    j["channel_bearing_deg"] = channel_bearing_deg;
    j["station_wind_noise"] = station_wind_noise;
    j["current_noise"] = current_noise;
    j["missing_rates"] = missing_rates;
    j["burst_mean_slots"] = burst_mean_slots;
    j["period_s"] = period_s;
    j["duration_days"] = duration_days;
    j["start_epoch"] = start_epoch;
    j["seed"] = seed;
    return j.dump(2);
}

WorldConfig WorldConfig::from_json_text(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    WorldConfig w;
    w.stations.clear();
    for (const auto& s : j.at("stations")) {
        StationConfig st;
        st.name = s.at("name");
        st.channel_pos = s.value("channel_pos", 0.0);
        st.current_gain = s.value("current_gain", 6000.0);
        st.current_dir_deg = s.value("current_dir_deg", 30.0);
        st.surge_lag_s = s.value("surge_lag_s", static_cast<std::int64_t>(0));
        for (const auto& c : s.value("constituents", nlohmann::json::array()))
            st.constituents.push_back({c.at("name"), c.at("amplitude_m"), c.at("period_h"),
                                       c.at("phase_rad")});
        w.stations.push_back(std::move(st));
    }
    w.wind_ar = j.value("wind_ar", w.wind_ar);
    w.wind_noise = j.value("wind_noise", w.wind_noise);
    w.surge_ar = j.value("surge_ar", w.surge_ar);
    w.surge_noise = j.value("surge_noise", w.surge_noise);
    w.wind_to_surge = j.value("wind_to_surge", w.wind_to_surge);
    w.channel_bearing_deg = j.value("channel_bearing_deg", w.channel_bearing_deg);
    w.station_wind_noise = j.value("station_wind_noise", w.station_wind_noise);
    w.current_noise = j.value("current_noise", w.current_noise);
    if (j.contains("missing_rates"))
        w.missing_rates = j.at("missing_rates").get<std::map<std::string, double>>();
    w.burst_mean_slots = j.value("burst_mean_slots", w.burst_mean_slots);
    w.period_s = j.value("period_s", w.period_s);
    w.duration_days = j.value("duration_days", w.duration_days);
    w.start_epoch = j.value("start_epoch", w.start_epoch);
    w.seed = j.value("seed", w.seed);
    return w;
}

WorldConfig WorldConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open world config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

events::Registry make_registry(const WorldConfig& w) {
    events::Registry reg;
    events::VarTypeSpec current;
    current.name = "current";
    current.columns = {"u_east", "v_north"};
    current.labels = {"u_east", "v_north"};
    current.decoder = "fixed";
    reg.add_type(std::move(current));

    events::VarTypeSpec ssh;
    ssh.name = "ssh";
    ssh.columns = {"height", "astro_tide", "sin_tod", "cos_tod"};
    ssh.labels = {"height"};
    ssh.known_future = {"astro_tide", "sin_tod", "cos_tod"};
    ssh.decoder = "dynamic";
    reg.add_type(std::move(ssh));

    events::VarTypeSpec wind;
    wind.name = "wind";
    wind.columns = {"u_east", "v_north"};
    reg.add_type(std::move(wind));

    for (const auto& st : w.stations)
        for (const auto& ty : {"current", "ssh", "wind"})
            reg.add_node(events::NodeKey{ty, st.name});
    return reg;
}

std::vector<bool> outage_mask(std::int64_t n, double rate, double burst_mean,
                              std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("outage_mask: rate not in [0,1)");
    if (burst_mean < 1.0) throw std::invalid_argument("outage_mask: burst mean must be >= 1");
    std::vector<bool> keep(static_cast<std::size_t>(n), true);
    if (rate == 0.0 || n == 0) return keep;

    // Two-state renewal chain: up-runs end with probability p_start per slot,
    // outage runs end with probability 1/burst_mean per slot. Stationary
    // dropped fraction = rate (p_start solves that balance).
    const double p_start = rate / ((1.0 - rate) * burst_mean);
    if (p_start > 1.0)
        throw std::invalid_argument("outage_mask: rate unreachable with this burst mean");
    const double p_end = 1.0 / burst_mean;

    auto rng = stream(seed, "outage");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool down = u(rng) < rate;  // stationary start
    for (std::int64_t i = 0; i < n; ++i) {
        keep[static_cast<std::size_t>(i)] = !down;
        if (down) {
            if (u(rng) < p_end) down = false;
        } else {
            if (u(rng) < p_start) down = true;
        }
    }
    return keep;
}

GenerateResult generate(const WorldConfig& w, const std::string& out_dir,
                        const std::string& stem) {
    w.validate();
    std::filesystem::create_directories(out_dir);
    const events::Registry reg = make_registry(w);

    const auto n_slots = static_cast<std::int64_t>(w.duration_days * 86400.0 /
                                                   static_cast<double>(w.period_s));
    if (n_slots < 2) throw std::invalid_argument("generate: world too short");
    const auto n_st = static_cast<std::int64_t>(w.stations.size());

    // Longest surge lag decides how much pre-roll the shared processes need
    // so that every station sees a warmed-up, lag-shifted surge from slot 0.
    std::int64_t max_lag_slots = 0;
    for (const auto& st : w.stations)
        max_lag_slots = std::max(max_lag_slots, st.surge_lag_s / w.period_s);
    const std::int64_t pre = max_lag_slots + 1;  // +1 for the gradient at slot 0

    // Shared wind (u,v) and the surge it drives, indexed by slot + pre.
    std::vector<double> wind_u(static_cast<std::size_t>(n_slots + pre), 0.0);
    std::vector<double> wind_v = wind_u, surge = wind_u;
    {
        auto rng = stream(w.seed, "shared_wind_surge");
        std::normal_distribution<double> g(0.0, 1.0);
        const double br = w.channel_bearing_deg * kPi / 180.0;
        double wu = 0.0, wv = 0.0, s = 0.0;
        // burn-in so slot 0 starts from the stationary distribution
        for (int k = 0; k < 500; ++k) {
            wu = w.wind_ar * wu + w.wind_noise * g(rng);
            wv = w.wind_ar * wv + w.wind_noise * g(rng);
            const double along = wu * std::sin(br) + wv * std::cos(br);
            s = w.surge_ar * s + w.wind_to_surge * along + w.surge_noise * g(rng);
        }
        for (std::int64_t i = 0; i < n_slots + pre; ++i) {
            wu = w.wind_ar * wu + w.wind_noise * g(rng);
            wv = w.wind_ar * wv + w.wind_noise * g(rng);
            const double along = wu * std::sin(br) + wv * std::cos(br);
            s = w.surge_ar * s + w.wind_to_surge * along + w.surge_noise * g(rng);
            wind_u[static_cast<std::size_t>(i)] = wu;
            wind_v[static_cast<std::size_t>(i)] = wv;
            surge[static_cast<std::size_t>(i)] = s;
        }
    }

    // Per-station series. ssh[k] is the water level at slot k (0-based from
    // start_epoch); the extra leading sample (index -1, stored at the front of
    // a padded array) feeds the gradient at slot 0.
    struct StationSeries {
        std::vector<double> ssh;    // n_slots + 1, padded by one leading sample
        std::vector<double> astro;  // n_slots
        std::vector<double> cur_u, cur_v, wu, wv;
    };
    std::vector<StationSeries> series(w.stations.size());
    for (std::size_t si = 0; si < w.stations.size(); ++si) {
        const StationConfig& st = w.stations[si];
        StationSeries& out = series[si];
        const std::int64_t lag_slots = st.surge_lag_s / w.period_s;
        out.ssh.resize(static_cast<std::size_t>(n_slots + 1));
        out.astro.resize(static_cast<std::size_t>(n_slots));
        out.cur_u.resize(static_cast<std::size_t>(n_slots));
        out.cur_v.resize(static_cast<std::size_t>(n_slots));
        out.wu.resize(static_cast<std::size_t>(n_slots));
        out.wv.resize(static_cast<std::size_t>(n_slots));

        auto rng_cur = stream(w.seed, "current_noise:" + st.name);
        auto rng_wind = stream(w.seed, "wind_noise:" + st.name);
        std::normal_distribution<double> g(0.0, 1.0);

        for (std::int64_t k = -1; k < n_slots; ++k) {
            const std::int64_t t = w.start_epoch + k * w.period_s;
            const double har = harmonic_height(st, t);
            // surge index: slot k sees the shared surge from lag_slots ago
            const double sg = surge[static_cast<std::size_t>(k + pre - lag_slots)];
            out.ssh[static_cast<std::size_t>(k + 1)] = har + sg;
            if (k < 0) continue;
            out.astro[static_cast<std::size_t>(k)] = har;
        }
        const double dir = st.current_dir_deg * kPi / 180.0;
        for (std::int64_t k = 0; k < n_slots; ++k) {
            const double grad = (out.ssh[static_cast<std::size_t>(k + 1)] -
                                 out.ssh[static_cast<std::size_t>(k)]) /
                                static_cast<double>(w.period_s);
            const double speed = st.current_gain * grad;
            out.cur_u[static_cast<std::size_t>(k)] =
                speed * std::sin(dir) + w.current_noise * g(rng_cur);
            out.cur_v[static_cast<std::size_t>(k)] =
                speed * std::cos(dir) + w.current_noise * g(rng_cur);
            out.wu[static_cast<std::size_t>(k)] =
                wind_u[static_cast<std::size_t>(k + pre)] + w.station_wind_noise * g(rng_wind);
            out.wv[static_cast<std::size_t>(k)] =
                wind_v[static_cast<std::size_t>(k + pre)] + w.station_wind_noise * g(rng_wind);
        }
    }

    // Outage masks, one independent stream per node.
    std::map<events::NodeKey, std::vector<bool>> keep;
    for (const auto& st : w.stations)
        for (const auto& ty : {"current", "ssh", "wind"}) {
            const events::NodeKey key{ty, st.name};
            double rate = 0.0;
            auto it = w.missing_rates.find(ty);
            if (it != w.missing_rates.end()) rate = it->second;
            keep[key] = outage_mask(n_slots, rate, w.burst_mean_slots,
                                    ndiff::mix64(w.seed, ndiff::fnv1a("mask:" + key.str())));
        }

    const std::string events_path = out_dir + "/" + stem + "_events.csv";
    const std::string truth_path = out_dir + "/" + stem + "_truth.csv";
    const std::string world_path = out_dir + "/" + stem + "_world.json";

    GenerateResult res;
    res.events_path = events_path;
    res.truth_path = truth_path;
    res.world_path = world_path;
    res.slots_per_node = n_slots;

    std::ofstream ev(events_path, std::ios::binary);
    std::ofstream tr(truth_path, std::ios::binary);
    if (!ev || !tr) throw std::runtime_error("generate: cannot write into " + out_dir);
    ev << events::csv_header(reg) << "\n";
    tr << events::csv_header(reg) << "\n";

    using events::format_double;
    std::string buf_ev, buf_tr;
    for (std::int64_t k = 0; k < n_slots; ++k) {
        const std::int64_t t = w.start_epoch + k * w.period_s;
        const auto tod = static_cast<double>(((t % 86400) + 86400) % 86400);
        const double sin_tod = std::sin(2.0 * kPi * tod / 86400.0);
        const double cos_tod = std::cos(2.0 * kPi * tod / 86400.0);
        const std::string ts = std::to_string(t);
        for (std::int64_t si = 0; si < n_st; ++si) {
            const StationConfig& st = w.stations[static_cast<std::size_t>(si)];
            const StationSeries& s = series[static_cast<std::size_t>(si)];
            const auto kk = static_cast<std::size_t>(k);
            // rows in CSV column order; two padding commas where k < max_k
            const std::string row_cur = ts + ",current," + st.name + "," +
                                        format_double(s.cur_u[kk]) + "," +
                                        format_double(s.cur_v[kk]) + ",,\n";
            const std::string row_ssh = ts + ",ssh," + st.name + "," +
                                        format_double(s.ssh[kk + 1]) + "," +
                                        format_double(s.astro[kk]) + "," +
                                        format_double(sin_tod) + "," + format_double(cos_tod) +
                                        "\n";
            const std::string row_wind = ts + ",wind," + st.name + "," +
                                         format_double(s.wu[kk]) + "," +
                                         format_double(s.wv[kk]) + ",,\n";
            buf_tr += row_cur;
            buf_tr += row_ssh;
            buf_tr += row_wind;
            if (keep[{"current", st.name}][kk]) {
                buf_ev += row_cur;
                ++res.emitted[{"current", st.name}];
            }
            if (keep[{"ssh", st.name}][kk]) {
                buf_ev += row_ssh;
                ++res.emitted[{"ssh", st.name}];
            }
            if (keep[{"wind", st.name}][kk]) {
                buf_ev += row_wind;
                ++res.emitted[{"wind", st.name}];
            }
        }
        if (buf_ev.size() > (1u << 20)) {
            ev << buf_ev;
            buf_ev.clear();
        }
        if (buf_tr.size() > (1u << 20)) {
            tr << buf_tr;
            buf_tr.clear();
        }
    }
    ev << buf_ev;
    tr << buf_tr;
    ev.close();
    tr.close();

    nlohmann::ordered_json sidecar;
    sidecar["config"] = nlohmann::ordered_json::parse(w.to_json_text());
    sidecar["slots_per_node"] = n_slots;
    nlohmann::ordered_json counts;
    for (const auto& [key, n] : res.emitted) counts[key.str()] = n;
    sidecar["emitted"] = counts;
    std::ofstream wj(world_path, std::ios::binary);
    if (!wj) throw std::runtime_error("generate: cannot write " + world_path);
    wj << sidecar.dump(2) << "\n";
    return res;
}

}  // namespace tidegraph::synth
