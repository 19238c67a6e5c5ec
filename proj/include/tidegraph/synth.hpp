#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tidegraph/events.hpp"

namespace tidegraph::synth {

// One tidal harmonic: height contribution amplitude * cos(2*pi*t/period + phase).
struct Constituent {
    std::string name;
    double amplitude_m = 0.0;
    double period_h = 12.0;
    double phase_rad = 0.0;
};

struct StationConfig {
    std::string name;
    double channel_pos = 0.0;      // 0..1 along the estuary axis (mouth -> head)
    double current_gain = 6000.0;  // m/s of current per m/s of water-level gradient
    double current_dir_deg = 30.0; // flow axis bearing (degrees clockwise from north)
    std::int64_t surge_lag_s = 0;  // surge propagation delay to this station
    std::vector<Constituent> constituents;
};

// Parameters of the synthetic estuary. The physics is deliberately simple:
// water level = station harmonics + wind-driven surge (shared AR(1) process
// reaching stations with individual lags), and depth-averaged current is a
// station-oriented response to the local water-level gradient. That creates
// real cross-type structure (levels forecast currents) and cross-station
// structure (lags) for the graph model to exploit.
struct WorldConfig {
    std::vector<StationConfig> stations;

    double wind_ar = 0.97;             // AR(1) coefficient per 30-min step
    double wind_noise = 0.6;           // innovation std, m/s
    double surge_ar = 0.95;
    double surge_noise = 0.008;        // innovation std, m
    double wind_to_surge = 0.004;      // m of surge per m/s of along-channel wind
    double channel_bearing_deg = 200.0;
    double station_wind_noise = 0.3;   // per-station wind measurement spread, m/s
    double current_noise = 0.02;       // per-component current noise, m/s

    std::map<std::string, double> missing_rates;  // per var_type, in [0, 1)
    double burst_mean_slots = 6.0;                // mean outage length

    std::int64_t period_s = 1800;
    double duration_days = 974.0;
    std::int64_t start_epoch = 0;
    std::uint64_t seed = 1;

    static WorldConfig defaults(int n_stations = 6);
    void validate() const;

    std::string to_json_text() const;
    static WorldConfig from_json_text(const std::string& text);
    static WorldConfig from_json_file(const std::string& path);
};

// Registry describing the three variable types at every configured station.
events::Registry make_registry(const WorldConfig& w);

// Keep/drop mask over n uniform slots with expected dropped fraction `rate`,
// dropped runs geometric with mean `burst_mean`. Deterministic per seed.
std::vector<bool> outage_mask(std::int64_t n, double rate, double burst_mean,
                              std::uint64_t seed);

struct GenerateResult {
    std::string events_path;
    std::string truth_path;
    std::string world_path;
    std::int64_t slots_per_node = 0;
    std::map<events::NodeKey, std::int64_t> emitted;  // event counts after outages
};

// Writes <stem>_events.csv (gap-ridden), <stem>_truth.csv (gap-free) and
// <stem>_world.json (config + emitted counts) into out_dir.
GenerateResult generate(const WorldConfig& w, const std::string& out_dir,
                        const std::string& stem = "estuary");

}  // namespace tidegraph::synth
