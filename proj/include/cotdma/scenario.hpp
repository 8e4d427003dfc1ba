#pragma once

#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotdma/network.hpp"
#include "cotdma/rng.hpp"
#include "cotdma/traffic.hpp"

namespace cotdma {

enum class ScenarioKind : std::uint8_t { Rtmg, Vr };
enum class SystemKind : std::uint8_t { Coordinated, Uncoordinated };

inline const char* to_string(ScenarioKind s) { return s == ScenarioKind::Rtmg ? "RTMG" : "VR"; }
inline const char* to_string(SystemKind s) {
    return s == SystemKind::Coordinated ? "coordinated" : "uncoordinated";
}

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Experiment configuration.  Every value defaults to the evaluated setup:
// four co-channel BSSs in 20 m rooms, one LL station and one background
// station per BSS plus the configured number of VC stations, 5 s runs,
// 50 iterations.
struct ScenarioConfig {
    ScenarioKind scenario = ScenarioKind::Rtmg;
    SystemKind system = SystemKind::Uncoordinated;
    int n_vc_stas = 2;
    int n_bss = 4;
    TimeNs sim_time_ns = ms_to_ns(std::int64_t{5000});
    TimeNs warmup_ns = ms_to_ns(std::int64_t{250});
    int n_iterations = 50;
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> placement_seed;

    std::pair<int, int> mapc_pair{0, 1}; // BSS indices of the paired APs
    InfoChannel info_channel = InfoChannel::Backhaul;
    bool bidirectional_sharing = true;
    bool ul_mu_in_baseline = true;

    double room_m = 20.0;
    double cluster_radius_m = 5.0;
    int walls_between_bss = 0;

    PhyConfig phy{};
    EdcaParams edca = EdcaParams::defaults();

    // Per (model, direction) overrides.
    std::map<std::string, FlowSpec> traffic_overrides;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return s.substr(b, e - b);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") {
        return true;
    }
    if (v == "false" || v == "off" || v == "0") {
        return false;
    }
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

inline double parse_num(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument(v);
        }
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

inline DistKind parse_dist(const std::string& key, const std::string& v) {
    if (v == "constant") return DistKind::Constant;
    if (v == "trunc_normal") return DistKind::TruncNormal;
    if (v == "lognormal") return DistKind::Lognormal;
    throw ConfigError("config: key '" + key + "' expects constant|trunc_normal|lognormal");
}

} // namespace config_detail

// Parses the hierarchical key-value configuration text.  Accepted forms:
//   key: value            (one per line, dotted keys for nesting)
//   { key: value, ... }   (single-line flow form)
// '#' starts a comment.  Unknown keys are diagnosed by name.
inline ScenarioConfig parse_config(const std::string& text) {
    using namespace config_detail;
    ScenarioConfig cfg;
    bool mapc_pair_given = false;

    std::string normalized = text;
    for (char& c : normalized) {
        if (c == '{' || c == '}' || c == ',') {
            c = '\n';
        }
    }

    std::istringstream is(normalized);
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        std::size_t sep = line.find(':');
        if (sep == std::string::npos) {
            sep = line.find('=');
        }
        if (sep == std::string::npos) {
            throw ConfigError("config: malformed line '" + line + "'");
        }
        const std::string key = trim(line.substr(0, sep));
        const std::string val = trim(line.substr(sep + 1));
        if (key.empty() || val.empty()) {
            throw ConfigError("config: malformed line '" + line + "'");
        }

        if (key == "scenario") {
            if (val == "RTMG" || val == "rtmg") {
                cfg.scenario = ScenarioKind::Rtmg;
            } else if (val == "VR" || val == "vr") {
                cfg.scenario = ScenarioKind::Vr;
            } else {
                throw ConfigError("config: key 'scenario' expects RTMG|VR, got '" + val + "'");
            }
        } else if (key == "system") {
            if (val == "coordinated") {
                cfg.system = SystemKind::Coordinated;
            } else if (val == "uncoordinated") {
                cfg.system = SystemKind::Uncoordinated;
            } else {
                throw ConfigError("config: key 'system' expects coordinated|uncoordinated");
            }
        } else if (key == "n_vc_stas") {
            cfg.n_vc_stas = static_cast<int>(parse_num(key, val));
            if (cfg.n_vc_stas < 0) {
                throw ConfigError("config: n_vc_stas must be >= 0");
            }
        } else if (key == "n_bss") {
            cfg.n_bss = static_cast<int>(parse_num(key, val));
            if (cfg.n_bss < 1) {
                throw ConfigError("config: n_bss must be >= 1");
            }
        } else if (key == "sim_time_us") {
            cfg.sim_time_ns = us_to_ns(parse_num(key, val));
        } else if (key == "warmup_us") {
            cfg.warmup_ns = us_to_ns(parse_num(key, val));
        } else if (key == "n_iterations") {
            cfg.n_iterations = static_cast<int>(parse_num(key, val));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_num(key, val));
        } else if (key == "placement_seed") {
            cfg.placement_seed = static_cast<std::uint64_t>(parse_num(key, val));
        } else if (key == "mapc_pair") {
            const std::size_t dash = val.find_first_of("-/ ");
            if (dash == std::string::npos) {
                throw ConfigError("config: mapc_pair expects two BSS indices, e.g. '0 1'");
            }
            cfg.mapc_pair = {static_cast<int>(parse_num(key, trim(val.substr(0, dash)))),
                             static_cast<int>(parse_num(key, trim(val.substr(dash + 1))))};
            mapc_pair_given = true;
        } else if (key == "info_channel") {
            if (val == "backhaul") {
                cfg.info_channel = InfoChannel::Backhaul;
            } else if (val == "in_band") {
                cfg.info_channel = InfoChannel::InBand;
            } else {
                throw ConfigError("config: info_channel expects backhaul|in_band");
            }
        } else if (key == "bidirectional_sharing") {
            cfg.bidirectional_sharing = parse_bool(key, val);
        } else if (key == "ul_mu_in_baseline") {
            cfg.ul_mu_in_baseline = parse_bool(key, val);
        } else if (key == "room_m") {
            cfg.room_m = parse_num(key, val);
        } else if (key == "cluster_radius_m") {
            cfg.cluster_radius_m = parse_num(key, val);
        } else if (key == "walls_between_bss") {
            cfg.walls_between_bss = static_cast<int>(parse_num(key, val));
        } else if (key.rfind("phy.", 0) == 0) {
            const std::string sub = key.substr(4);
            if (sub == "data_mcs") cfg.phy.data_mcs = static_cast<int>(parse_num(key, val));
            else if (sub == "ctrl_mcs") cfg.phy.ctrl_mcs = static_cast<int>(parse_num(key, val));
            else if (sub == "tx_power_dbm") cfg.phy.tx_power_dbm = parse_num(key, val);
            else if (sub == "gi_ns") cfg.phy.gi_ns = static_cast<int>(parse_num(key, val));
            else if (sub == "bandwidth_mhz") cfg.phy.bandwidth_mhz = static_cast<int>(parse_num(key, val));
            else if (sub == "n_ss") cfg.phy.n_ss = static_cast<int>(parse_num(key, val));
            else if (sub == "max_ppdu_us") cfg.phy.max_ppdu_ns = us_to_ns(parse_num(key, val));
            else if (sub == "pd_threshold_dbm") cfg.phy.pd_threshold_dbm = parse_num(key, val);
            else if (sub == "ed_threshold_dbm") cfg.phy.ed_threshold_dbm = parse_num(key, val);
            else if (sub == "capture_margin_db") cfg.phy.capture_margin_db = parse_num(key, val);
            else throw ConfigError("config: unknown key '" + key + "'");
        } else if (key.rfind("edca.", 0) == 0) {
            const std::string sub = key.substr(5);
            const std::size_t dot = sub.find('.');
            if (dot == std::string::npos) {
                throw ConfigError("config: unknown key '" + key + "'");
            }
            const std::string acs = sub.substr(0, dot);
            const std::string field = sub.substr(dot + 1);
            Ac a;
            if (acs == "vo") a = Ac::Vo;
            else if (acs == "vi") a = Ac::Vi;
            else if (acs == "be") a = Ac::Be;
            else throw ConfigError("config: unknown key '" + key + "'");
            AcParams& p = cfg.edca[a];
            if (field == "aifsn") p.aifsn = static_cast<int>(parse_num(key, val));
            else if (field == "cw_min") p.cw_min = static_cast<int>(parse_num(key, val));
            else if (field == "cw_max") p.cw_max = static_cast<int>(parse_num(key, val));
            else if (field == "txop_limit_us") p.txop_limit_ns = us_to_ns(parse_num(key, val));
            else throw ConfigError("config: unknown key '" + key + "'");
        } else if (key.rfind("traffic.", 0) == 0) {
            const std::string sub = key.substr(8); // model.dir.field
            std::size_t d1 = sub.find('.');
            std::size_t d2 = d1 == std::string::npos ? std::string::npos : sub.find('.', d1 + 1);
            if (d2 == std::string::npos) {
                throw ConfigError("config: unknown key '" + key + "'");
            }
            const std::string model_s = sub.substr(0, d1);
            const std::string dir_s = sub.substr(d1 + 1, d2 - d1 - 1);
            const std::string field = sub.substr(d2 + 1);
            TrafficModel model;
            if (model_s == "rtmg") model = TrafficModel::Rtmg;
            else if (model_s == "vr") model = TrafficModel::Vr;
            else if (model_s == "vc") model = TrafficModel::Vc;
            else if (model_s == "background") model = TrafficModel::Background;
            else throw ConfigError("config: unknown key '" + key + "'");
            Direction dir;
            if (dir_s == "dl") dir = Direction::Dl;
            else if (dir_s == "ul") dir = Direction::Ul;
            else throw ConfigError("config: unknown key '" + key + "'");
            const std::string map_key = model_s + "." + dir_s;
            if (cfg.traffic_overrides.find(map_key) == cfg.traffic_overrides.end()) {
                cfg.traffic_overrides[map_key] = default_flow_spec(model, dir);
            }
            FlowSpec& fs = cfg.traffic_overrides[map_key];
            if (field == "mean_bytes") fs.mean_pkt_bytes = parse_num(key, val);
            else if (field == "mean_iat_us") fs.mean_iat_us = parse_num(key, val);
            else if (field == "size_cv") fs.size_dist.cv = parse_num(key, val);
            else if (field == "iat_cv") fs.iat_dist.cv = parse_num(key, val);
            else if (field == "size_dist") fs.size_dist.kind = config_detail::parse_dist(key, val);
            else if (field == "iat_dist") fs.iat_dist.kind = config_detail::parse_dist(key, val);
            else throw ConfigError("config: unknown key '" + key + "'");
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }

    if (cfg.system == SystemKind::Uncoordinated && mapc_pair_given) {
        throw ConfigError("config: mapc_pair is set but system is uncoordinated");
    }
    if (cfg.system == SystemKind::Coordinated) {
        const auto [a, b] = cfg.mapc_pair;
        if (a == b || a < 0 || b < 0 || a >= cfg.n_bss || b >= cfg.n_bss) {
            throw ConfigError("config: mapc_pair must name two distinct BSS indices");
        }
    }
    if (cfg.phy.pd_threshold_dbm >= cfg.phy.ed_threshold_dbm) {
        throw ConfigError("config: phy.pd_threshold_dbm must be below phy.ed_threshold_dbm");
    }
    return cfg;
}

inline FlowSpec scenario_flow_spec(const ScenarioConfig& cfg, TrafficModel model, Direction dir) {
    std::string key;
    switch (model) {
    case TrafficModel::Rtmg: key = "rtmg"; break;
    case TrafficModel::Vr: key = "vr"; break;
    case TrafficModel::Vc: key = "vc"; break;
    case TrafficModel::Background: key = "background"; break;
    }
    key += dir == Direction::Dl ? ".dl" : ".ul";
    auto it = cfg.traffic_overrides.find(key);
    if (it != cfg.traffic_overrides.end()) {
        return it->second;
    }
    return default_flow_spec(model, dir);
}

// Builds the enterprise topology: n_bss co-channel BSSs in a row of square
// rooms, an AP at each room center, stations uniform within the cluster
// radius.  Each BSS holds one background station, n_vc_stas VC stations and
// one station carrying the scenario's LL traffic.
inline NetworkSetup build_scenario(const ScenarioConfig& cfg) {
    NetworkSetup net;
    net.phy = cfg.phy;
    net.edca = cfg.edca;
    net.n_walls = cfg.walls_between_bss;
    net.sim_time_ns = cfg.sim_time_ns;
    net.warmup_ns = cfg.warmup_ns;
    net.ul_mu_enabled = cfg.ul_mu_in_baseline || cfg.system == SystemKind::Coordinated;
    net.info_channel = cfg.info_channel;
    net.bidirectional_sharing = cfg.bidirectional_sharing;

    const std::uint64_t pseed = cfg.placement_seed.value_or(cfg.seed);
    const TrafficModel ll_model =
        cfg.scenario == ScenarioKind::Rtmg ? TrafficModel::Rtmg : TrafficModel::Vr;

    // Device slots within a BSS: 0 = AP, 1 = LL STA, 2 = background STA,
    // 3+k = VC STA k.
    std::vector<int> ap_ids(cfg.n_bss, -1);
    int next_id = 0;
    for (int b = 0; b < cfg.n_bss; ++b) {
        // The co-BSS label marks the studied pair in both systems so the
        // per-group metrics compare like for like; only the coordination
        // wiring below depends on the system kind.
        const bool co = b == cfg.mapc_pair.first || b == cfg.mapc_pair.second;
        const Position center{cfg.room_m * (0.5 + b), cfg.room_m * 0.5};

        auto place_sta = [&](int slot) {
            RngStream r(pseed, stream_salt::kPlacement ^ device_stream_key(b, slot));
            const double rad = cfg.cluster_radius_m * std::sqrt(r.uniform01());
            const double ang = 2.0 * 3.14159265358979323846 * r.uniform01();
            return Position{center.x + rad * std::cos(ang), center.y + rad * std::sin(ang)};
        };

        DevicePlan ap;
        ap.info = DeviceInfo{next_id++, Role::Ap, b, co};
        ap.pos = center;
        ap.stream_key = device_stream_key(b, 0);
        ap_ids[b] = ap.info.id;
        net.devices.push_back(ap);

        DevicePlan ll;
        ll.info = DeviceInfo{next_id++, Role::Sta, b, co};
        ll.pos = place_sta(1);
        ll.stream_key = device_stream_key(b, 1);
        ll.is_ll_sta = true;
        net.devices.push_back(ll);

        DevicePlan bg;
        bg.info = DeviceInfo{next_id++, Role::Sta, b, co};
        bg.pos = place_sta(2);
        bg.stream_key = device_stream_key(b, 2);
        net.devices.push_back(bg);

        std::vector<int> vc_ids;
        for (int k = 0; k < cfg.n_vc_stas; ++k) {
            DevicePlan vc;
            vc.info = DeviceInfo{next_id++, Role::Sta, b, co};
            vc.pos = place_sta(3 + k);
            vc.stream_key = device_stream_key(b, 3 + k);
            net.devices.push_back(vc);
            vc_ids.push_back(vc.info.id);
        }

        auto add_flow = [&](TrafficModel model, Direction dir, int src, int dst,
                            std::uint64_t key) {
            FlowPlan fp;
            fp.spec = scenario_flow_spec(cfg, model, dir);
            fp.src_device = src;
            fp.dst_device = dst;
            fp.bss = b;
            fp.co_bss = co;
            fp.stream_key = key;
            net.flows.push_back(fp);
        };

        const int apd = ap.info.id;
        add_flow(ll_model, Direction::Dl, apd, ll.info.id, device_stream_key(b, 1) << 4 | 0);
        add_flow(ll_model, Direction::Ul, ll.info.id, apd, device_stream_key(b, 1) << 4 | 1);
        add_flow(TrafficModel::Background, Direction::Dl, apd, bg.info.id,
                 device_stream_key(b, 2) << 4 | 0);
        add_flow(TrafficModel::Background, Direction::Ul, bg.info.id, apd,
                 device_stream_key(b, 2) << 4 | 1);
        for (int k = 0; k < cfg.n_vc_stas; ++k) {
            add_flow(TrafficModel::Vc, Direction::Dl, apd, vc_ids[k],
                     device_stream_key(b, 3 + k) << 4 | 0);
            add_flow(TrafficModel::Vc, Direction::Ul, vc_ids[k], apd,
                     device_stream_key(b, 3 + k) << 4 | 1);
        }
    }

    if (cfg.system == SystemKind::Coordinated) {
        net.mapc_pair = {ap_ids[cfg.mapc_pair.first], ap_ids[cfg.mapc_pair.second]};
        // The latency analysis presumes the paired APs detect each other.
        const Position pa = net.devices[net.mapc_pair->first].pos;
        const Position pb = net.devices[net.mapc_pair->second].pos;
        const double rx = cfg.phy.tx_power_dbm -
                          path_loss_db(distance_m(pa, pb), cfg.walls_between_bss);
        if (rx < cfg.phy.pd_threshold_dbm) {
            net.warnings.push_back(
                "mapc pair APs are outside each other's PD range; coordination analysis "
                "assumptions do not hold for this geometry");
        }
    }
    return net;
}

} // namespace cotdma
