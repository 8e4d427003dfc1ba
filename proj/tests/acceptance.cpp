// Acceptance suite: runs the complete coordinated-vs-uncoordinated
// comparison (both traffic scenarios, congestion sweep 2..5, 50 paired
// seeds), the analytic-model validation, the deterministic oracles and the
// protocol-conformance trace checks, and prints one PASS/FAIL line per
// criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "cotdma/analytic.hpp"
#include "cotdma/experiment.hpp"
#include "cotdma/network.hpp"
#include "cotdma/scenario.hpp"
#include "cotdma/trace.hpp"

using namespace cotdma;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s%s%s\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!pass) {
        ++g_failures;
    }
}

std::string fmt(double v, int prec = 2) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

double mean_of(const CellResult& c, Group g, bool jitter_metric = false) {
    double acc = 0.0;
    for (const RunReport& r : c.runs) {
        acc += jitter_metric ? r.group(g).jitter_us : r.group(g).p95_latency_us;
    }
    return acc / static_cast<double>(c.runs.size());
}

double mean_throughput(const CellResult& c) {
    double acc = 0.0;
    for (const RunReport& r : c.runs) {
        acc += r.network_throughput_bps;
    }
    return acc / static_cast<double>(c.runs.size());
}

// Per-seed paired differences coordinated - uncoordinated for a group metric.
std::vector<double> paired_diff(const CellResult& u, const CellResult& c, Group g) {
    std::vector<double> d;
    for (std::size_t i = 0; i < u.runs.size(); ++i) {
        d.push_back(c.runs[i].group(g).p95_latency_us - u.runs[i].group(g).p95_latency_us);
    }
    return d;
}

struct SweepStats {
    std::vector<double> p95_u, p95_c;        // per level means, co-BSS LL
    std::vector<std::vector<double>> gaps;   // per level, per seed: u - c
    double wall_seconds = 0.0;
};

SweepStats sweep_stats(const ExperimentSummary& s, const std::vector<int>& levels) {
    SweepStats st;
    for (int n : levels) {
        const CellResult& u = s.cell(SystemKind::Uncoordinated, n);
        const CellResult& c = s.cell(SystemKind::Coordinated, n);
        st.p95_u.push_back(mean_of(u, Group::CoBssLl));
        st.p95_c.push_back(mean_of(c, Group::CoBssLl));
        std::vector<double> gap;
        for (std::size_t i = 0; i < u.runs.size(); ++i) {
            gap.push_back(u.runs[i].group(Group::CoBssLl).p95_latency_us -
                          c.runs[i].group(Group::CoBssLl).p95_latency_us);
        }
        st.gaps.push_back(std::move(gap));
    }
    return st;
}

} // namespace

int main() {
    const std::vector<int> levels = {2, 3, 4, 5};
    std::vector<std::uint64_t> seeds;
    for (int i = 1; i <= 50; ++i) {
        seeds.push_back(static_cast<std::uint64_t>(i));
    }
    const std::vector<SystemKind> both = {SystemKind::Uncoordinated, SystemKind::Coordinated};

    // ---- criterion 9 first: deterministic oracles (seconds) ----
    {
        bool ok = true;
        std::string why;

        // Airtime against the independent rate formula: 4900 bits per
        // 13.6 us symbol plus the 44 us preamble.
        PhyConfig phy;
        RngStream rng(2024, 1);
        for (int i = 0; i < 1000 && ok; ++i) {
            const int n_mpdus = 1 + static_cast<int>(rng.uniform_below(64));
            const std::int64_t payload =
                static_cast<std::int64_t>(rng.uniform_below(3000)) * n_mpdus;
            const std::int64_t symbols = (payload * 8 + 4899) / 4900;
            const TimeNs expected = 44'000 + symbols * 13'600;
            if (expected > phy.max_ppdu_ns) {
                try {
                    (void)ppdu_airtime_ns(payload, 7, n_mpdus, phy);
                    ok = false;
                    why = "oversize aggregate not rejected";
                } catch (const OversizeError&) {
                }
            } else if (ppdu_airtime_ns(payload, 7, n_mpdus, phy) != expected) {
                ok = false;
                why = "airtime mismatch vs rate-formula oracle";
            }
        }

        // Percentile against a full-sort oracle, jitter against two-pass.
        std::vector<double> samples;
        RngStream r2(7, 7);
        for (int i = 0; i < 10'000; ++i) {
            samples.push_back(r2.uniform01() * 1e6);
        }
        std::vector<double> sorted = samples;
        std::sort(sorted.begin(), sorted.end());
        for (double p : {0.05, 0.5, 0.95, 0.99}) {
            const std::size_t rank =
                static_cast<std::size_t>(std::ceil(p * static_cast<double>(sorted.size())));
            if (percentile(samples, p) != sorted[rank - 1]) {
                ok = false;
                why = "percentile mismatch vs sort oracle";
            }
        }
        double m = 0.0;
        for (double v : samples) {
            m += v;
        }
        m /= samples.size();
        double var = 0.0;
        for (double v : samples) {
            var += (v - m) * (v - m);
        }
        const double oracle_sd = std::sqrt(var / samples.size());
        if (std::abs(jitter(samples) - oracle_sd) > 1e-9 * oracle_sd) {
            ok = false;
            why = "jitter mismatch vs two-pass oracle";
        }

        // Backoff uniformity, chi-square at significance 0.01.
        {
            RngStream br(99, 4242);
            std::vector<int> bins(4, 0);
            for (int i = 0; i < 10'000; ++i) {
                bins[DeviceMac::draw_backoff(br, 3)]++;
            }
            double stat = 0.0;
            for (int b : bins) {
                stat += (b - 2500.0) * (b - 2500.0) / 2500.0;
            }
            if (stat >= 11.345) { // df = 3
                ok = false;
                why = "backoff draws fail chi-square uniformity";
            }
        }

        // Same-seed runs are byte identical.
        {
            ScenarioConfig cfg =
                parse_config("{scenario: RTMG, system: coordinated, n_vc_stas: 3}");
            cfg.sim_time_ns = ms_to_ns(std::int64_t{500});
            const NetworkSetup setup = build_scenario(cfg);
            TraceOptions topt;
            topt.frames = true;
            Network a(setup, 17, topt);
            Network b(setup, 17, topt);
            a.run();
            b.run();
            if (a.trace().frames_csv() != b.trace().frames_csv()) {
                ok = false;
                why = "same-seed frame traces differ";
            }
            nlohmann::json ja = a.collector().finalize(17);
            nlohmann::json jb = b.collector().finalize(17);
            if (ja.dump() != jb.dump()) {
                ok = false;
                why = "same-seed metric reports differ";
            }
        }
        report(9, ok, "deterministic oracles (airtime, percentile, jitter, backoff, replay)",
               why);
    }

    // ---- main sweeps ----
    std::printf("... running RTMG sweep (2 systems x 4 levels x 50 seeds x 5 s)\n");
    std::fflush(stdout);
    ScenarioConfig rtmg = parse_config("{scenario: RTMG, system: coordinated, n_vc_stas: 2}");
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentSummary srt = run_experiment(rtmg, seeds, levels, both);
    const double rtmg_wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("... RTMG sweep done in %.1f min\n", rtmg_wall / 60.0);

    std::printf("... running VR sweep\n");
    std::fflush(stdout);
    ScenarioConfig vr = parse_config("{scenario: VR, system: coordinated, n_vc_stas: 2}");
    ExperimentSummary svr = run_experiment(vr, seeds, levels, both);

    const SweepStats rt = sweep_stats(srt, levels);
    const SweepStats vs = sweep_stats(svr, levels);

    // ---- criterion 1: coordinated beats uncoordinated (RTMG) ----
    {
        bool ok = true;
        std::string detail;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const double rel = (rt.p95_u[i] - rt.p95_c[i]) / rt.p95_u[i];
            detail += "n=" + std::to_string(levels[i]) + ": " + fmt(rt.p95_u[i] / 1000.0) + "/" +
                      fmt(rt.p95_c[i] / 1000.0) + " ms (-" + fmt(100.0 * rel, 1) + "%) ";
            if (rt.p95_c[i] >= rt.p95_u[i]) {
                ok = false;
            }
            if ((levels[i] == 4 || levels[i] == 5) && rel < 0.10) {
                ok = false;
            }
        }
        detail += "| sweep wall " + fmt(rtmg_wall / 60.0, 1) + " min";
        report(1, ok, "coordinated beats uncoordinated (RTMG), >=10% at n=4,5", detail);
    }

    // ---- criterion 2: gap nondecreasing with congestion ----
    {
        int inversions = 0;
        bool significant_inversion = false;
        std::string detail = "gaps(us):";
        for (std::size_t i = 0; i < levels.size(); ++i) {
            detail += " " + fmt(mean_ci(rt.gaps[i]).mean, 0);
        }
        for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
            std::vector<double> step;
            for (std::size_t s = 0; s < rt.gaps[i].size(); ++s) {
                step.push_back(rt.gaps[i + 1][s] - rt.gaps[i][s]);
            }
            const CiStat st = mean_ci(step);
            if (st.mean < 0) {
                ++inversions;
                if (st.ci_high < 0) {
                    significant_inversion = true;
                }
            }
        }
        const bool ok = inversions <= 1 && !significant_inversion;
        report(2, ok, "p95 gap nondecreasing in congestion (<=1 inversion within CI)",
               detail + " | inversions " + std::to_string(inversions));
    }

    // ---- criterion 3: diminishing gap growth ----
    {
        bool ok = true;
        std::string detail = "increments(us):";
        std::vector<std::vector<double>> steps;
        for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
            std::vector<double> step;
            for (std::size_t s = 0; s < rt.gaps[i].size(); ++s) {
                step.push_back(rt.gaps[i + 1][s] - rt.gaps[i][s]);
            }
            detail += " " + fmt(mean_ci(step).mean, 0);
            steps.push_back(std::move(step));
        }
        for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
            std::vector<double> second;
            for (std::size_t s = 0; s < steps[i].size(); ++s) {
                second.push_back(steps[i + 1][s] - steps[i][s]);
            }
            const CiStat st = mean_ci(second);
            if (st.mean > 0 && st.ci_low > 0) {
                ok = false; // increment grew, significantly
            }
        }
        report(3, ok, "gap increments nonincreasing within CI", detail);
    }

    // ---- criterion 4: jitter reduction in all 8 cells ----
    {
        bool ok = true;
        std::string detail;
        for (const auto* sw : {&srt, &svr}) {
            for (int n : levels) {
                const double ju = mean_of(sw->cell(SystemKind::Uncoordinated, n), Group::CoBssLl,
                                          true);
                const double jc = mean_of(sw->cell(SystemKind::Coordinated, n), Group::CoBssLl,
                                          true);
                if (jc >= ju) {
                    ok = false;
                    detail += (sw == &srt ? "RTMG" : "VR") + std::string(" n=") +
                              std::to_string(n) + " " + fmt(ju, 0) + "<=" + fmt(jc, 0) + " ";
                }
            }
        }
        report(4, ok, "coordinated jitter below uncoordinated in all 8 cells", detail);
    }

    // ---- criterion 5: VR attenuation ----
    {
        bool ok = true;
        std::string detail;
        for (std::size_t i = 0; i < levels.size(); ++i) {
            const double rel_rt = (rt.p95_u[i] - rt.p95_c[i]) / rt.p95_u[i];
            const double rel_vr = (vs.p95_u[i] - vs.p95_c[i]) / vs.p95_u[i];
            detail += "n=" + std::to_string(levels[i]) + ": " + fmt(100 * rel_rt, 1) + "% vs " +
                      fmt(100 * rel_vr, 1) + "% ";
            if (rel_vr >= rel_rt) {
                ok = false;
            }
        }
        report(5, ok, "relative reduction smaller in VR than in RTMG at every level", detail);
    }

    // ---- criterion 6: throughput neutrality ----
    {
        bool ok = true;
        std::string detail;
        for (const auto* sw : {&srt, &svr}) {
            for (int n : levels) {
                const double tu = mean_throughput(sw->cell(SystemKind::Uncoordinated, n));
                const double tc = mean_throughput(sw->cell(SystemKind::Coordinated, n));
                const double rel = std::abs(tc - tu) / tu;
                if (rel > 0.05) {
                    ok = false;
                }
                if (sw == &srt) {
                    detail += "n=" + std::to_string(n) + ": " + fmt(100 * rel, 1) + "% ";
                }
            }
        }
        report(6, ok, "network throughput difference <= 5% at every level", detail);
    }

    // ---- criterion 7: side-effect signs ----
    {
        int nonco_fail = 0;
        int vc_fail = 0;
        std::string detail;
        for (int n : levels) {
            const CellResult& u = srt.cell(SystemKind::Uncoordinated, n);
            const CellResult& c = srt.cell(SystemKind::Coordinated, n);
            const CiStat dn = mean_ci(paired_diff(u, c, Group::NonCoBssLl));
            // Expected coordinated >= uncoordinated; a failure is a
            // significantly negative difference.
            if (dn.mean < 0 && dn.ci_high < 0) {
                ++nonco_fail;
            }
            const CiStat dv = mean_ci(paired_diff(u, c, Group::CoBssVc));
            // Expected coordinated <= uncoordinated; a failure is a
            // significantly positive difference.
            if (dv.mean > 0 && dv.ci_low > 0) {
                ++vc_fail;
            }
            detail += "n=" + std::to_string(n) + ": nonco " + fmt(dn.mean, 0) + " vc " +
                      fmt(dv.mean, 0) + " ";
        }
        const bool ok = nonco_fail <= 1 && vc_fail <= 1;
        report(7, ok,
               "side effects: non-co-BSS LL not better, co-BSS VC not worse (<=1 level each)",
               detail + "| fails " + std::to_string(nonco_fail) + "/" + std::to_string(vc_fail));
    }

    // ---- criterion 8: analytic-model validation ----
    {
        std::printf("... running analytic validation (matched + congested profiles)\n");
        std::fflush(stdout);
        const GainValidation matched =
            run_gain_validation(1000, levels, 130, ValidationMode::Matched);
        int bound_violations = 0;
        int identity_violations = 0;
        std::size_t pairs = 0;
        for (const auto& lvl : matched.levels) {
            for (const ExtractedPair& p : lvl.pairs) {
                ++pairs;
                const double eq1 = access_delay_gain(p.components);
                const double eq2 = access_delay_gain_lower_bound(p.components);
                if (eq2 > eq1 + 1e-9) {
                    ++bound_violations;
                }
                if (std::abs(eq1 - p.measured_gain_us()) > 1.0) {
                    ++identity_violations;
                }
            }
        }

        const GainValidation congested =
            run_gain_validation(5000, {5}, 130, ValidationMode::Congested);
        double eq3_mean = 0.0;
        double meas_mean = 0.0;
        const auto& top = congested.levels.back();
        for (const ExtractedPair& p : top.pairs) {
            eq3_mean += access_delay_gain_approx(
                p.components.busy(Sys::U, PairAp::I),
                GainComponents::require(p.components.t_cotdma, "t_cotdma"));
            meas_mean += p.measured_gain_us();
        }
        eq3_mean /= std::max<std::size_t>(top.pairs.size(), 1);
        meas_mean /= std::max<std::size_t>(top.pairs.size(), 1);
        const double rel_err = std::abs(eq3_mean - meas_mean) / std::abs(meas_mean);

        const bool ok = pairs >= 500 && bound_violations == 0 && identity_violations == 0 &&
                        rel_err <= 0.20;
        report(8, ok, "analytic model: Eq2<=Eq1 with zero violations; Eq3 within 20%",
               std::to_string(pairs) + " pairs, " + std::to_string(bound_violations) +
                   " bound violations, " + std::to_string(identity_violations) +
                   " identity violations; eq3 " + fmt(eq3_mean, 0) + " vs measured " +
                   fmt(meas_mean, 0) + " us (err " + fmt(100 * rel_err, 1) + "%, n=" +
                   std::to_string(top.pairs.size()) + ")");
    }

    // ---- criterion 10: protocol conformance over 50 coordinated runs ----
    {
        std::printf("... running trace conformance checks\n");
        std::fflush(stdout);
        ScenarioConfig cfg = parse_config("{scenario: RTMG, system: coordinated, n_vc_stas: 3}");
        const NetworkSetup setup_template = build_scenario(cfg);
        TraceChecker checker(setup_template.phy);
        std::size_t violations = 0;
        std::string first;
        for (std::uint64_t seed = 1; seed <= 50; ++seed) {
            ScenarioConfig one = cfg;
            one.seed = seed;
            NetworkSetup setup = build_scenario(one);
            TraceOptions topt;
            topt.frames = true;
            topt.txops = true;
            topt.grants = true;
            Network net(setup, seed, topt);
            net.run();
            const auto v = checker.violations(net.trace());
            violations += v.size();
            if (!v.empty() && first.empty()) {
                first = "seed " + std::to_string(seed) + ": " + v.front();
            }
        }
        // Baseline purity on a few uncoordinated runs.
        ScenarioConfig ucfg = parse_config("{scenario: RTMG, system: uncoordinated, n_vc_stas: 3}");
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            NetworkSetup setup = build_scenario(ucfg);
            TraceOptions topt;
            topt.frames = true;
            Network net(setup, seed, topt);
            net.run();
            if (TraceChecker::has_coordination_frames(net.trace())) {
                ++violations;
                if (first.empty()) {
                    first = "coordination frame in uncoordinated run";
                }
            }
        }
        report(10, violations == 0,
               "zero single-share/containment/role/priority violations in 50 traced runs",
               violations == 0 ? "" : std::to_string(violations) + " violations; " + first);
    }

    std::printf("%s: %d criterion failure(s)\n", g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
                g_failures);
    return g_failures == 0 ? 0 : 1;
}
