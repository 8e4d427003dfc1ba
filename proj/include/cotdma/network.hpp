#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cotdma/cotdma.hpp"
#include "cotdma/edca.hpp"
#include "cotdma/event_queue.hpp"
#include "cotdma/medium.hpp"
#include "cotdma/metrics.hpp"
#include "cotdma/phy.hpp"
#include "cotdma/traffic.hpp"
#include "cotdma/trace.hpp"
#include "cotdma/wifi.hpp"

namespace cotdma {

struct DevicePlan {
    DeviceInfo info;
    Position pos;
    std::uint64_t stream_key = 0; // stable across configurations
    bool is_ll_sta = false;
};

// Stable per-device stream key: independent of how many stations other
// configurations hold, so paired-seed sweeps keep all common draws aligned.
inline std::uint64_t device_stream_key(int bss, int slot) {
    return (static_cast<std::uint64_t>(bss) << 10) | static_cast<std::uint64_t>(slot);
}

struct FlowPlan {
    FlowSpec spec;
    int src_device = -1;
    int dst_device = -1;
    int bss = -1;
    bool co_bss = false;
    std::uint64_t stream_key = 0;
    TimeNs start_offset_ns = 0; // first arrival is phased after this point
    bool fixed_start = false;   // skip the random phase; start exactly at offset
};

// Fully resolved simulation input: devices, flows and the coordination
// wiring.  Produced by the scenario builder (or assembled directly in
// tests).
struct NetworkSetup {
    PhyConfig phy{};
    EdcaParams edca = EdcaParams::defaults();
    int n_walls = 0;
    TimeNs sim_time_ns = ms_to_ns(std::int64_t{5000});
    TimeNs warmup_ns = ms_to_ns(std::int64_t{250});
    bool ul_mu_enabled = true;
    std::vector<DevicePlan> devices;
    std::vector<FlowPlan> flows;
    std::optional<std::pair<int, int>> mapc_pair; // device ids of the paired APs
    bool bidirectional_sharing = true;
    InfoChannel info_channel = InfoChannel::Backhaul;
    std::vector<std::string> warnings;
};

struct TraceOptions {
    bool frames = false;
    bool txops = false;
    bool grants = false;
    bool arrivals = false;
    std::vector<int> busy_interval_devices;
};

// One complete simulation instance.  Owns the event queue, the medium, all
// device MACs, traffic generation, coordination agents, metric collection
// and tracing; a run is deterministic in (setup, seed).
class Network {
  public:
    Network(const NetworkSetup& setup, std::uint64_t seed, TraceOptions topt = {})
        : setup_(setup), seed_(seed),
          medium_(queue_, setup.phy, setup.n_walls),
          collector_(setup.warmup_ns, setup.sim_time_ns) {
        trace_.frames_enabled = topt.frames;
        trace_.txops_enabled = topt.txops;
        trace_.grants_enabled = topt.grants;
        trace_.arrivals_enabled = topt.arrivals;

        build_devices();
        for (int d : topt.busy_interval_devices) {
            medium_.record_busy_intervals(d, true);
        }
        build_flows();
        install_frame_hook();
        wire_coordination();
    }

    EventQueue& queue() { return queue_; }
    Medium& medium() { return medium_; }
    TraceLog& trace() { return trace_; }
    MetricsCollector& collector() { return collector_; }
    DeviceMac& mac(int device) { return *macs_.at(device); }

    // Runs to the configured horizon and returns the per-run report.
    RunReport run() {
        queue_.run_until(setup_.sim_time_ns);
        return collector_.finalize(seed_);
    }

    std::size_t run_events(TimeNs until_ns) { return queue_.run_until(until_ns); }

    RunReport report() const { return collector_.finalize(seed_); }

  private:
    struct FlowRt {
        FlowPlan plan;
        std::optional<FlowState> state;
        std::int32_t flow_id = -1;
        std::int64_t next_packet_seq = 0;
        std::int64_t next_mpdu_seq = 0;
    };

    void build_devices() {
        for (const DevicePlan& p : setup_.devices) {
            const int id = medium_.add_device(p.pos);
            if (id != p.info.id) {
                throw std::logic_error("Network: device ids must be dense and ordered");
            }
        }
        view_.bss.resize(count_bss());
        for (const DevicePlan& p : setup_.devices) {
            RngStream backoff(seed_, stream_salt::kBackoff ^ p.stream_key);
            macs_.push_back(std::make_unique<DeviceMac>(queue_, medium_, setup_.phy, setup_.edca,
                                                        p.info, backoff, &ids_, &collector_,
                                                        &trace_));
            DeviceMac* mac = macs_.back().get();
            mac->set_network_view(&view_);
            mac->set_ul_mu_enabled(setup_.ul_mu_enabled && p.info.role == Role::Ap);
            mac->set_ll_ul_via_trigger(setup_.ul_mu_enabled);
            BssView& bv = view_.bss[p.info.bss];
            if (p.info.role == Role::Ap) {
                bv.ap = mac;
            } else {
                bv.stas.push_back(mac);
                if (p.is_ll_sta) {
                    bv.ll_stas.push_back(mac);
                }
            }
        }
    }

    int count_bss() const {
        int n = 0;
        for (const DevicePlan& p : setup_.devices) {
            n = std::max(n, p.info.bss + 1);
        }
        return n;
    }

    void build_flows() {
        for (const FlowPlan& plan : setup_.flows) {
            FlowRt rt;
            rt.plan = plan;
            rt.flow_id = static_cast<std::int32_t>(flows_.size());
            rt.state.emplace(plan.spec, RngStream(seed_, stream_salt::kTrafficSize ^ plan.stream_key),
                             RngStream(seed_, stream_salt::kTrafficIat ^ plan.stream_key));
            collector_.set_flow_labels(rt.flow_id, plan.bss, plan.co_bss);
            flows_.push_back(std::move(rt));
        }
        // First arrival of each flow is phase-staggered uniformly over one
        // mean IAT; avoids artificial BSS synchronization of periodic flows.
        for (std::size_t i = 0; i < flows_.size(); ++i) {
            TimeNs t0 = flows_[i].plan.start_offset_ns + 1;
            if (!flows_[i].plan.fixed_start) {
                RngStream phase(seed_, stream_salt::kTrafficIat ^ flows_[i].plan.stream_key ^
                                           0xA5A5A5A5ull);
                t0 += static_cast<TimeNs>(phase.uniform01() *
                                          us_to_ns(flows_[i].plan.spec.mean_iat_us));
            }
            const std::size_t idx = i;
            queue_.schedule(t0, EventKind::Arrival, flows_[i].plan.src_device,
                            [this, idx] { on_arrival(idx); });
        }
    }

    void on_arrival(std::size_t idx) {
        FlowRt& f = flows_[idx];
        const auto a = f.state->next_arrival();
        const TimeNs now = queue_.now();
        trace_.add_arrival(ArrivalRecord{now, f.flow_id, f.plan.spec.model, f.plan.spec.direction,
                                         a.size_bytes});
        const std::vector<std::int32_t> frags = fragment_packet(a.size_bytes);
        Mpdu proto;
        proto.flow_id = f.flow_id;
        proto.packet_seq = f.next_packet_seq++;
        proto.frag_count = static_cast<std::int32_t>(frags.size());
        proto.arrival_ns = now;
        proto.src = f.plan.src_device;
        proto.dst = f.plan.dst_device;
        proto.ac = f.plan.spec.ac;
        proto.dir = f.plan.spec.direction;
        proto.model = f.plan.spec.model;
        proto.is_ll = f.plan.spec.is_ll();
        bool first = true;
        for (std::size_t i = 0; i < frags.size(); ++i) {
            Mpdu m = proto;
            m.frag_index = static_cast<std::int32_t>(i);
            m.size_bytes = frags[i];
            m.mpdu_seq = f.next_mpdu_seq++;
            if (first) {
                collector_.on_packet_enqueued(m);
                first = false;
            }
            macs_[m.src]->enqueue(m);
        }
        // LL uplink backlog is trigger-served: the AP's contention
        // eligibility may have just changed.
        if (proto.is_ll && proto.dir == Direction::Ul) {
            view_.bss[f.plan.bss].ap->refresh_contention();
        }
        queue_.schedule(now + a.iat_ns, EventKind::Arrival, f.plan.src_device,
                        [this, idx] { on_arrival(idx); });
    }

    void install_frame_hook() {
        medium_.set_resolution_hook([this](const Ppdu& p, const std::vector<int>& rcpts,
                                           const std::vector<RxOutcome>& outs) {
            if (!trace_.frames_enabled) {
                return;
            }
            FrameRecord r;
            r.start_ns = p.start_ns;
            r.end_ns = p.start_ns + p.airtime_ns;
            r.device = p.tx_device;
            r.type = p.type;
            r.ac = p.ac;
            r.n_mpdus = static_cast<int>(p.mpdus.size());
            r.payload_bytes = p.payload_bytes();
            for (const Mpdu& m : p.mpdus) {
                r.all_ll = r.all_ll && m.is_ll;
            }
            r.txop_id = p.txop_id;
            r.in_shared_window = p.in_shared_window;
            r.grant_id = p.grant_id;
            bool any = rcpts.empty();
            for (const RxOutcome& o : outs) {
                any = any || o.delivered;
            }
            r.delivered = any;
            r.remaining_ns = p.cfend_remaining_ns;
            r.pending_eligible_bytes = p.cfend_pending_bytes;
            trace_.add_frame(r);
        });
    }

    void wire_coordination() {
        if (!setup_.mapc_pair) {
            return;
        }
        const auto [a, b] = *setup_.mapc_pair;
        if (macs_.at(a)->info().role != Role::Ap || macs_.at(b)->info().role != Role::Ap) {
            throw std::invalid_argument("mapc_pair: both members must be APs");
        }
        agents_.push_back(std::make_unique<CotdmaAgent>(*macs_[a], &ids_, &trace_));
        agents_.push_back(std::make_unique<CotdmaAgent>(*macs_[b], &ids_, &trace_));
        CotdmaAgent* aa = agents_[0].get();
        CotdmaAgent* ab = agents_[1].get();
        aa->set_partner(ab, macs_[b].get());
        ab->set_partner(aa, macs_[a].get());
        aa->set_info_channel(setup_.info_channel);
        ab->set_info_channel(setup_.info_channel);
        aa->set_sharing_enabled(true);
        ab->set_sharing_enabled(setup_.bidirectional_sharing);
        macs_[a]->set_coordinator(aa);
        macs_[b]->set_coordinator(ab);
    }

    NetworkSetup setup_;
    std::uint64_t seed_;
    EventQueue queue_;
    Medium medium_;
    MetricsCollector collector_;
    TraceLog trace_;
    IdGen ids_;
    NetworkView view_;
    std::vector<std::unique_ptr<DeviceMac>> macs_;
    std::vector<std::unique_ptr<CotdmaAgent>> agents_;
    std::vector<FlowRt> flows_;
};

} // namespace cotdma
