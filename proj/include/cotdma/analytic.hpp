#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "cotdma/time_units.hpp"
#include "cotdma/trace.hpp"

namespace cotdma {

enum class Sys : int { U = 0, C = 1 };
enum class PairAp : int { I = 0, J = 1 };

// Time decomposition of one access interval of AP i, both systems, in
// microseconds.  t_busy[C][I] is kept for completeness but the exact-gain
// formula does not use it.
struct GainComponents {
    std::optional<double> t_fe[2][2];   // [system][ap]
    std::optional<double> t_busy[2][2]; // [system][ap]
    std::optional<double> t_overhead_u;
    std::optional<double> t_overhead_c;
    std::optional<double> t_cotdma;

    void set_fe(Sys s, PairAp k, double v) { t_fe[int(s)][int(k)] = v; }
    void set_busy(Sys s, PairAp k, double v) { t_busy[int(s)][int(k)] = v; }
    double fe(Sys s, PairAp k) const { return require(t_fe[int(s)][int(k)], "t_fe"); }
    double busy(Sys s, PairAp k) const { return require(t_busy[int(s)][int(k)], "t_busy"); }

    static double require(const std::optional<double>& v, const char* name) {
        if (!v) {
            throw std::invalid_argument(std::string("GainComponents: missing component ") + name);
        }
        return *v;
    }
};

// Exact access-delay gain: the uncoordinated access interval minus the
// coordinated one, both decomposed into overhead, frame-exchange, busy and
// shared-window time.
inline double access_delay_gain(const GainComponents& c) {
    const double u = GainComponents::require(c.t_overhead_u, "t_overhead_u") +
                     c.fe(Sys::U, PairAp::I) + c.fe(Sys::U, PairAp::J) +
                     c.busy(Sys::U, PairAp::J) + c.busy(Sys::U, PairAp::I);
    const double co = GainComponents::require(c.t_overhead_c, "t_overhead_c") +
                      c.fe(Sys::C, PairAp::I) + c.fe(Sys::C, PairAp::J) +
                      c.busy(Sys::C, PairAp::J) +
                      GainComponents::require(c.t_cotdma, "t_cotdma");
    return u - co;
}

// Lower bound under equal frame-exchange durations; a true lower bound
// whenever FE(u,j) >= FE(c,j) and FE(u,i) = FE(c,i).
inline double access_delay_gain_lower_bound(const GainComponents& c) {
    return GainComponents::require(c.t_overhead_u, "t_overhead_u") +
           c.busy(Sys::U, PairAp::J) + c.busy(Sys::U, PairAp::I) -
           (GainComponents::require(c.t_overhead_c, "t_overhead_c") +
            c.busy(Sys::C, PairAp::J) +
            GainComponents::require(c.t_cotdma, "t_cotdma"));
}

// High-congestion approximation: the busy wait the uncoordinated AP would
// have paid, minus the donated window.
inline double access_delay_gain_approx(double t_busy_ui_us, double t_cotdma_us) {
    if (t_busy_ui_us < 0.0 || t_cotdma_us < 0.0) {
        throw std::invalid_argument("access_delay_gain_approx: negative component");
    }
    return t_busy_ui_us - t_cotdma_us;
}

struct AccessIntervalMeasurement {
    Sys system = Sys::U;
    int ap = -1;
    TimeNs first_access_ns = 0;
    TimeNs second_access_ns = 0;

    TimeNs interval_ns() const { return second_access_ns - first_access_ns; }
};

// One matched pair of access intervals extracted from paired-seed traces.
struct ExtractedPair {
    GainComponents components;
    double interval_u_us = 0.0;
    double interval_c_us = 0.0;

    double measured_gain_us() const { return interval_u_us - interval_c_us; }
};

namespace analytic_detail {

struct TxopSums {
    double fe_us = 0.0;
    double overhead_us = 0.0; // polling + handshake + CF-End residue
    double window_us = 0.0;
    TimeNs span_ns = 0;
};

inline TxopSums sum_txop(const TxopRecord& t) {
    TxopSums s;
    for (const TxopSegment& seg : t.segments) {
        const double d = ns_to_us(seg.end_ns - seg.start_ns);
        switch (seg.kind) {
        case SegmentKind::OwnExchange: s.fe_us += d; break;
        case SegmentKind::Polling:
        case SegmentKind::Handshake:
        case SegmentKind::CfEndResidue: s.overhead_us += d; break;
        case SegmentKind::SharedWindow: s.window_us += d; break;
        }
    }
    s.span_ns = t.end_ns - t.access_ns;
    return s;
}

inline const TxopRecord* txop_at(const TraceLog& log, int holder, TimeNs access) {
    for (const TxopRecord& t : log.txops()) {
        if (t.holder == holder && t.access_ns == access) {
            return &t;
        }
    }
    return nullptr;
}

// Interval endpoints are successful accesses; failed (collided) TXOPs extend
// the waiting term instead of terminating the interval.
inline const TxopRecord* next_txop_after(const TraceLog& log, int holder, TimeNs after) {
    const TxopRecord* best = nullptr;
    for (const TxopRecord& t : log.txops()) {
        if (t.holder == holder && t.success && t.access_ns > after) {
            if (best == nullptr || t.access_ns < best->access_ns) {
                best = &t;
            }
        }
    }
    return best;
}

inline const TxopRecord* last_txop_before(const TraceLog& log, int holder, TimeNs before) {
    const TxopRecord* best = nullptr;
    for (const TxopRecord& t : log.txops()) {
        if (t.holder == holder && t.success && t.access_ns < before) {
            if (best == nullptr || t.access_ns > best->access_ns) {
                best = &t;
            }
        }
    }
    return best;
}

} // namespace analytic_detail

// Extracts the component set around the first shared-TXOP event of a
// paired-seed run pair.
//
// AP i is the AP that gains a channel access opportunity by the donation:
// the shared AP.  Its interval runs from its own access preceding the grant
// to its next access opportunity -- in the coordinated system that is the
// donated window (measured to the window close, which is why the exact gain
// carries the T^Co-TDMA term and no busy(c,i) term), in the uncoordinated
// system its next contention-won TXOP.  AP j is the sharing AP; everything
// up to j's granting TXOP is common to both systems under paired seeds, so
// the interval start and j's access instant match exactly across traces.
//
// Busy terms are the waiting spans between the TXOPs of the pair (busy time
// plus residual idle; under load they are busy-dominated), which makes the
// decomposition an exact partition of each measured interval.
inline std::optional<ExtractedPair> extract_first_grant_pair(const TraceLog& trace_u,
                                                             const TraceLog& trace_c,
                                                             int sharing_ap, int shared_ap) {
    using namespace analytic_detail;
    const GrantRecord* grant = nullptr;
    for (const GrantRecord& g : trace_c.grants()) {
        if (g.sharing_ap == sharing_ap && g.shared_ap == shared_ap && g.served_bytes > 0) {
            grant = &g;
            break;
        }
    }
    if (grant == nullptr) {
        return std::nullopt;
    }
    const TxopRecord* ta_c = nullptr;
    for (const TxopRecord& t : trace_c.txops()) {
        if (t.txop_id == grant->txop_id) {
            ta_c = &t;
            break;
        }
    }
    if (ta_c == nullptr || ta_c->holder != sharing_ap) {
        return std::nullopt;
    }
    const TimeNs t_div = ta_c->access_ns; // the two systems diverge inside this TXOP

    const TxopRecord* tb_c = last_txop_before(trace_c, shared_ap, t_div);
    if (tb_c == nullptr) {
        return std::nullopt;
    }
    const TimeNs a1 = tb_c->access_ns;
    const TxopRecord* tb_u = txop_at(trace_u, shared_ap, a1);
    const TxopRecord* ta_u = txop_at(trace_u, sharing_ap, t_div);
    const TxopRecord* b_next_u = next_txop_after(trace_u, shared_ap, a1);
    if (tb_u == nullptr || ta_u == nullptr || b_next_u == nullptr ||
        b_next_u->access_ns <= t_div) {
        return std::nullopt;
    }

    const TxopSums sb_u = sum_txop(*tb_u);
    const TxopSums sb_c = sum_txop(*tb_c);
    const TxopSums sa_u = sum_txop(*ta_u);
    if (sb_u.window_us > 0.0 || sb_c.window_us > 0.0 || sa_u.window_us > 0.0) {
        return std::nullopt; // a second donation overlaps the interval
    }

    // The granting TXOP, truncated at the window close: the polling and
    // handshake segments are the coordinated overhead, the window is the
    // Co-TDMA term, anything later is outside the interval.
    const TimeNs win_close = grant->window_close_ns;
    double fe_ca = 0.0;
    double ovh_ca = 0.0;
    double win_us = 0.0;
    for (const TxopSegment& seg : ta_c->segments) {
        if (seg.start_ns >= win_close) {
            continue;
        }
        const double d = ns_to_us(std::min(seg.end_ns, win_close) - seg.start_ns);
        switch (seg.kind) {
        case SegmentKind::OwnExchange: fe_ca += d; break;
        case SegmentKind::Polling:
        case SegmentKind::Handshake:
        case SegmentKind::CfEndResidue: ovh_ca += d; break;
        case SegmentKind::SharedWindow: win_us += d; break;
        }
    }

    ExtractedPair pair;
    GainComponents& comp = pair.components;
    comp.set_fe(Sys::U, PairAp::I, sb_u.fe_us);
    comp.set_fe(Sys::C, PairAp::I, sb_c.fe_us);
    comp.set_fe(Sys::U, PairAp::J, sa_u.fe_us);
    comp.set_fe(Sys::C, PairAp::J, fe_ca);
    comp.t_overhead_u = sb_u.overhead_us + sa_u.overhead_us;
    comp.t_overhead_c = sb_c.overhead_us + ovh_ca;
    comp.t_cotdma = win_us;
    comp.set_busy(Sys::U, PairAp::J, ns_to_us(t_div - tb_u->end_ns));
    comp.set_busy(Sys::C, PairAp::J, ns_to_us(t_div - tb_c->end_ns));
    comp.set_busy(Sys::U, PairAp::I, ns_to_us(b_next_u->access_ns - ta_u->end_ns));
    comp.set_busy(Sys::C, PairAp::I, 0.0);

    pair.interval_u_us = ns_to_us(b_next_u->access_ns - a1);
    pair.interval_c_us = ns_to_us(win_close - a1);
    return pair;
}

} // namespace cotdma
