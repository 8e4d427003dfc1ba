#include <doctest.h>

#include <chrono>
#include <set>

#include "cotdma/experiment.hpp"
#include "cotdma/network.hpp"
#include "cotdma/scenario.hpp"

using namespace cotdma;

TEST_CASE("minimal flow-form config fills defaults from the parameter tables") {
    const ScenarioConfig cfg =
        parse_config("{scenario: RTMG, system: coordinated, n_vc_stas: 3}");
    CHECK(cfg.scenario == ScenarioKind::Rtmg);
    CHECK(cfg.system == SystemKind::Coordinated);
    CHECK(cfg.n_vc_stas == 3);
    CHECK(cfg.n_bss == 4);
    CHECK(cfg.sim_time_ns == 5 * kNsPerSec);
    CHECK(cfg.n_iterations == 50);
    CHECK(cfg.phy.data_mcs == 7);
    CHECK(cfg.phy.ctrl_mcs == 0);
    CHECK(cfg.phy.tx_power_dbm == 21.0);
    CHECK(cfg.phy.gi_ns == 800);
    CHECK(cfg.phy.bandwidth_mhz == 80);
    CHECK(cfg.phy.max_ppdu_ns == us_to_ns(std::int64_t{5484}));
    CHECK(cfg.phy.max_ampdu_mpdus == 64);
    CHECK(cfg.phy.max_ru == 4);
    CHECK(cfg.edca[Ac::Vo].cw_min == 3);
    CHECK(cfg.edca[Ac::Be].txop_limit_ns == us_to_ns(std::int64_t{2528}));
    CHECK(cfg.mapc_pair == std::pair<int, int>{0, 1});
}

TEST_CASE("line-form config with comments and overrides") {
    const ScenarioConfig cfg = parse_config(
        "# experiment\n"
        "scenario: VR\n"
        "system = uncoordinated\n"
        "n_vc_stas: 0\n"
        "phy.tx_power_dbm: 18\n"
        "edca.vo.txop_limit_us: 1500\n"
        "traffic.vc.dl.mean_bytes: 9000  # larger video frames\n");
    CHECK(cfg.scenario == ScenarioKind::Vr);
    CHECK(cfg.n_vc_stas == 0);
    CHECK(cfg.phy.tx_power_dbm == 18.0);
    CHECK(cfg.edca[Ac::Vo].txop_limit_ns == us_to_ns(std::int64_t{1500}));
    CHECK(scenario_flow_spec(cfg, TrafficModel::Vc, Direction::Dl).mean_pkt_bytes == 9000.0);
    CHECK(scenario_flow_spec(cfg, TrafficModel::Vc, Direction::Ul).mean_pkt_bytes == 7810.0);
}

TEST_CASE("validation diagnostics name the offending key") {
    CHECK_THROWS_WITH_AS(parse_config("scenario: RTMG\nspam: 1\n"),
                         doctest::Contains("spam"), ConfigError);
    CHECK_THROWS_AS(parse_config("{system: uncoordinated, mapc_pair: 0 1}"), ConfigError);
    CHECK_THROWS_AS(parse_config("{system: coordinated, mapc_pair: 1 1}"), ConfigError);
    CHECK_THROWS_AS(parse_config("n_vc_stas: -2"), ConfigError);
    CHECK_THROWS_AS(parse_config("phy.pd_threshold_dbm: -50"), ConfigError);
}

TEST_CASE("built scenario satisfies the per-BSS composition") {
    ScenarioConfig cfg = parse_config("{scenario: RTMG, system: coordinated, n_vc_stas: 2}");
    const NetworkSetup net = build_scenario(cfg);
    // 4 BSSs x (1 AP + 1 LL + 1 BG + 2 VC) devices.
    CHECK(net.devices.size() == 4 * 5);
    // 4 BSSs x (LL DL/UL + BG DL/UL + 2 x VC DL/UL) flows.
    CHECK(net.flows.size() == 4 * 8);
    int aps = 0;
    int ll = 0;
    for (const DevicePlan& d : net.devices) {
        aps += d.info.role == Role::Ap ? 1 : 0;
        ll += d.is_ll_sta ? 1 : 0;
    }
    CHECK(aps == 4);
    CHECK(ll == 4);
    // Exactly the two designated APs are wired as the pair.
    REQUIRE(net.mapc_pair.has_value());
    CHECK(net.devices[net.mapc_pair->first].info.bss == 0);
    CHECK(net.devices[net.mapc_pair->second].info.bss == 1);
    int co_devices = 0;
    for (const DevicePlan& d : net.devices) {
        co_devices += d.info.co_bss ? 1 : 0;
    }
    CHECK(co_devices == 2 * 5);
}

TEST_CASE("placement is deterministic in the placement seed") {
    ScenarioConfig cfg = parse_config("{scenario: RTMG, system: uncoordinated, n_vc_stas: 3}");
    cfg.placement_seed = 77;
    const NetworkSetup a = build_scenario(cfg);
    const NetworkSetup b = build_scenario(cfg);
    REQUIRE(a.devices.size() == b.devices.size());
    for (std::size_t i = 0; i < a.devices.size(); ++i) {
        CHECK(a.devices[i].pos.x == b.devices[i].pos.x);
        CHECK(a.devices[i].pos.y == b.devices[i].pos.y);
    }
    // Stations stay within the cluster radius of their AP.
    for (const DevicePlan& d : a.devices) {
        const Position ap = a.devices[d.info.bss * 6].pos;
        CHECK(distance_m(d.pos, ap) <= cfg.cluster_radius_m + 1e-9);
    }
}

TEST_CASE("uncoordinated runs of one seed are byte-identical") {
    ScenarioConfig cfg = parse_config("{scenario: RTMG, system: uncoordinated, n_vc_stas: 2}");
    cfg.sim_time_ns = ms_to_ns(std::int64_t{300});
    cfg.warmup_ns = ms_to_ns(std::int64_t{50});
    const NetworkSetup setup = build_scenario(cfg);
    TraceOptions topt;
    topt.frames = true;
    Network n1(setup, 5, topt);
    Network n2(setup, 5, topt);
    n1.run();
    n2.run();
    CHECK(n1.trace().frames_csv() == n2.trace().frames_csv());
    CHECK(n1.trace().frames().size() > 100);
    CHECK_FALSE(TraceChecker::has_coordination_frames(n1.trace()));
}

TEST_CASE("a single-seed smoke run finishes well under a minute") {
    ScenarioConfig cfg = parse_config("{scenario: RTMG, system: coordinated, n_vc_stas: 3}");
    const auto t0 = std::chrono::steady_clock::now();
    const RunReport r = run_single(cfg, 3);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(wall < 60.0);
    CHECK(r.group(Group::CoBssLl).n_samples > 100);
    CHECK(r.network_throughput_bps > 50e6);
}

TEST_CASE("aggregation identity: a shared seed reports the same run") {
    ScenarioConfig cfg = parse_config("{scenario: RTMG, system: uncoordinated, n_vc_stas: 2}");
    cfg.sim_time_ns = ms_to_ns(std::int64_t{400});
    cfg.warmup_ns = ms_to_ns(std::int64_t{100});
    const ExperimentSummary one =
        run_experiment(cfg, {9}, {2}, {SystemKind::Uncoordinated}, 1);
    const ExperimentSummary three =
        run_experiment(cfg, {9, 10, 11}, {2}, {SystemKind::Uncoordinated}, 1);
    const RunReport& a = one.cell(SystemKind::Uncoordinated, 2).runs[0];
    const RunReport& b = three.cell(SystemKind::Uncoordinated, 2).runs[0];
    nlohmann::json ja = a;
    nlohmann::json jb = b;
    CHECK(ja == jb);
}

TEST_CASE("pooled mode reports pooled percentiles") {
    ScenarioConfig cfg = parse_config("{scenario: RTMG, system: uncoordinated, n_vc_stas: 2}");
    cfg.sim_time_ns = ms_to_ns(std::int64_t{400});
    cfg.warmup_ns = ms_to_ns(std::int64_t{100});
    const ExperimentSummary s =
        run_experiment(cfg, {1, 2}, {2}, {SystemKind::Uncoordinated}, 1, true);
    const CellResult& c = s.cell(SystemKind::Uncoordinated, 2);
    REQUIRE(c.pooled_latency_us.count("co_ll") == 1);
    const auto& pool = c.pooled_latency_us.at("co_ll");
    CHECK(static_cast<int>(pool.size()) ==
          c.runs[0].group(Group::CoBssLl).n_samples + c.runs[1].group(Group::CoBssLl).n_samples);
    CHECK(results_csv(s).find("p95_latency_pooled_us") != std::string::npos);
}

TEST_CASE("summary csv and json round-trip") {
    ScenarioConfig cfg = parse_config("{scenario: RTMG, system: uncoordinated, n_vc_stas: 2}");
    cfg.sim_time_ns = ms_to_ns(std::int64_t{400});
    cfg.warmup_ns = ms_to_ns(std::int64_t{100});
    const ExperimentSummary s = run_experiment(
        cfg, {1, 2}, {2}, {SystemKind::Uncoordinated, SystemKind::Coordinated}, 1);
    const std::string csv = results_csv(s);
    CHECK(csv.find("scenario,system,vc_stas,group,metric,mean,ci_low,ci_high,n_iter") == 0);
    CHECK(csv.find("co_ll,p95_latency_us") != std::string::npos);

    nlohmann::json j = s;
    const ExperimentSummary back = j.get<ExperimentSummary>();
    nlohmann::json j2 = back;
    CHECK(j == j2);

    const auto panels = plot_data_files(s);
    CHECK(panels.size() == 6);
    CHECK(panels.count("fig3a_co_ll_latency.csv") == 1);
}
