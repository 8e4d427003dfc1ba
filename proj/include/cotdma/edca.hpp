#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "cotdma/event_queue.hpp"
#include "cotdma/medium.hpp"
#include "cotdma/metrics.hpp"
#include "cotdma/phy.hpp"
#include "cotdma/rng.hpp"
#include "cotdma/trace.hpp"
#include "cotdma/wifi.hpp"

namespace cotdma {

class DeviceMac;

struct DeviceInfo {
    int id = -1;
    Role role = Role::Sta;
    int bss = -1;
    bool co_bss = false;
};

// Shared id counters for TXOPs, grants and MU response groups.
struct IdGen {
    int next_txop = 0;
    int next_grant = 0;
    int next_group = 0;
};

// Per-BSS device directory.  APs use it for ideal, instantaneous knowledge
// of their stations' low-latency uplink backlog.
struct BssView {
    DeviceMac* ap = nullptr;
    std::vector<DeviceMac*> ll_stas;
    std::vector<DeviceMac*> stas;
};

struct NetworkView {
    std::vector<BssView> bss;
};

// Hook points the TXOP action plan exposes to the coordination layer.  A MAC
// without a coordinator runs the degenerate plan (DL, UL MU, CF-End).
class TxopCoordinator {
  public:
    // When the ICF/ICR probe runs: at TXOP start (the only choice when the
    // probe is also the information channel) or right before the sharing
    // step (when backhaul information already scopes the opportunity).
    enum class PollTiming { AtTxopStart, BeforeSharing };

    virtual ~TxopCoordinator() = default;
    virtual PollTiming poll_timing() const = 0;
    virtual bool polling_enabled() const = 0;
    virtual void begin_polling() = 0;
    virtual bool try_share() = 0;
    virtual void on_control_frame(const Ppdu& ppdu, const RxOutcome& outcome) = 0;
    virtual void on_txop_finished() = 0;
};

// Per-device EDCA machine: per-AC queues, AIFS + binary-exponential backoff
// driven by medium busy/idle transitions, TXOP acquisition and limits,
// A-MPDU aggregation with block-ack, trigger-based UL MU, retransmission and
// CF-End truncation.  No per-slot events: the pending channel access is one
// scheduled event, recomputed when the medium state changes.
class DeviceMac : public MediumListener {
  public:
    DeviceMac(EventQueue& q, Medium& medium, const PhyConfig& phy, const EdcaParams& edca,
              DeviceInfo info, RngStream backoff_rng, IdGen* ids, MetricsCollector* metrics,
              TraceLog* trace)
        : q_(q), medium_(medium), phy_(phy), edca_(edca), info_(info),
          backoff_rng_(backoff_rng), ids_(ids), metrics_(metrics), trace_(trace) {
        medium_.set_listener(info_.id, this);
    }

    const DeviceInfo& info() const { return info_; }
    const PhyConfig& phy() const { return phy_; }
    EventQueue& queue() { return q_; }

    void set_network_view(NetworkView* v) { view_ = v; }
    void set_coordinator(TxopCoordinator* c) { coordinator_ = c; }
    void set_ul_mu_enabled(bool on) { ul_mu_enabled_ = on; }
    void set_ll_ul_via_trigger(bool on) { ll_ul_via_trigger_ = on; }

    static int draw_backoff(RngStream& rng, int cw) {
        return static_cast<int>(rng.uniform_cw(static_cast<std::uint32_t>(cw)));
    }

    // ---- queue ----

    void enqueue(Mpdu m) {
        AcSt& a = ac(m.ac);
        a.queue.push_back(m);
        a.queued_bytes += m.size_bytes;
        refresh_contention();
    }

    std::int64_t queued_bytes(Ac a) const { return ac(a).queued_bytes; }

    // Bytes this device itself contends for (LL uplink handled by triggers is
    // excluded on stations).
    std::int64_t contention_bytes(Ac a) const {
        const AcSt& s = ac(a);
        if (info_.role == Role::Sta && ll_ul_via_trigger_) {
            std::int64_t b = 0;
            for (const Mpdu& m : s.queue) {
                if (!m.is_ll) {
                    b += m.size_bytes;
                }
            }
            return b;
        }
        return s.queued_bytes;
    }

    std::int64_t ll_bytes(Ac a) const {
        std::int64_t b = 0;
        for (const Mpdu& m : ac(a).queue) {
            if (m.is_ll) {
                b += m.size_bytes;
            }
        }
        return b;
    }

    std::int64_t ll_dl_backlog_bytes() const { return ll_bytes(Ac::Vo); }

    std::int64_t ll_ul_backlog_bytes() const {
        // Uplink LL backlog across this AP's stations (ideal knowledge).
        if (view_ == nullptr || info_.role != Role::Ap) {
            return 0;
        }
        std::int64_t b = 0;
        for (const DeviceMac* sta : view_->bss[info_.bss].ll_stas) {
            b += sta->ll_bytes(Ac::Vo);
        }
        return b;
    }

    std::int64_t first_eligible_bytes(Ac a, bool ll_only) const {
        for (const Mpdu& m : ac(a).queue) {
            if (!ll_only || m.is_ll) {
                return m.size_bytes;
            }
        }
        return 0;
    }

    // ---- TXOP context access (coordination layer) ----

    bool in_txop() const { return txop_.has_value(); }
    int txop_id() const { return txop_ ? txop_->id : -1; }
    Ac txop_ac() const { return txop_ ? txop_->ac : Ac::Be; }
    TimeNs txop_next_tx() const { return txop_->next_tx; }
    TimeNs txop_limit_end() const { return txop_->limit_end; }
    TimeNs txop_remaining() const { return txop_->limit_end - txop_->next_tx; }

    void txop_mark_polling(bool ok, TimeNs segment_end) {
        txop_->polling_done = true;
        txop_->polled_ok = ok;
        add_segment(SegmentKind::Polling, segment_end);
    }

    void txop_mark_segment(SegmentKind kind, TimeNs end) { add_segment(kind, end); }

    // End of the holder's latest on-air activity (own frame or its
    // response).  The floor counts as lost only if a foreign transmission
    // began after this point, during the holder's silence; transmissions
    // already on the air (a captured collision's loser) do not revoke it.
    void txop_note_floor_activity(TimeNs end) { floor_activity_end_ = std::max(floor_activity_end_, end); }

    bool floor_lost() const {
        return medium_busy_ && medium_.busy_since(info_.id) > floor_activity_end_;
    }

    void txop_note_grant_issued() { txop_->grant_issued = true; }
    bool txop_grant_issued() const { return txop_->grant_issued; }
    bool txop_polled_ok() const { return txop_ && txop_->polled_ok; }

    // Resumes the action plan with the next frame start at next_tx.  A
    // response timeout leaves an idle gap longer than AIFS; if someone else
    // seized the medium during it, the floor is lost and the TXOP ends
    // without further transmission.
    void txop_resume(TimeNs next_tx) {
        if (floor_lost()) {
            end_txop(!txop_->failed);
            return;
        }
        txop_->next_tx = next_tx;
        txop_step();
    }

    void txop_abort_failed() { end_txop(false); }

    // Transmits a control frame at time t within the current TXOP/window
    // context.  decorate may fill frame-type specific payload fields.
    void transmit_control_at(TimeNs t, FrameType type, std::vector<int> recipients, int bytes,
                             std::function<void(Ppdu&)> decorate = {}) {
        const int txid = txop_ ? txop_->id : (window_ ? window_->txop_id : -1);
        const bool in_win = window_.has_value();
        const int grant = window_ ? window_->grant_id : -1;
        q_.schedule(t, EventKind::TxStart, info_.id,
                    [this, type, recipients = std::move(recipients), bytes, txid, in_win, grant,
                     decorate = std::move(decorate)]() mutable {
                        Ppdu p;
                        p.tx_device = info_.id;
                        p.type = type;
                        p.ac = txop_ ? txop_->ac : Ac::Vo;
                        p.recipients = std::move(recipients);
                        p.airtime_ns = ctrl_airtime_ns(bytes, phy_);
                        p.txop_id = txid;
                        p.in_shared_window = in_win;
                        p.grant_id = grant;
                        if (decorate) {
                            decorate(p);
                        }
                        medium_.start_ppdu(std::move(p));
                    });
    }

    // ---- shared TXOP window (shared-AP side) ----

    void begin_shared_window(const SharedGrantInfo& grant, int sharing_txop_id, TimeNs start,
                             TimeNs end, std::function<void(TimeNs, std::int64_t)> on_close) {
        if (txop_) {
            throw std::logic_error("begin_shared_window: device already holds a TXOP");
        }
        floor_activity_end_ = start;
        window_.emplace();
        window_->grant_id = grant.grant_id;
        window_->txop_id = sharing_txop_id;
        window_->end = end;
        window_->next_tx = start;
        window_->on_close = std::move(on_close);
        window_->served_bytes = 0;
        window_step();
    }

    bool in_shared_window() const { return window_.has_value(); }

    // ---- MediumListener ----

    void on_channel_busy(TimeNs t) override {
        // Account backoff slots elapsed during the idle period; a partially
        // elapsed slot does not count.
        if (!medium_busy_) {
            for (int i = 0; i < kNumAcs; ++i) {
                AcSt& a = acs_[i];
                if (a.backoff_slots > 0) {
                    const TimeNs elapsed = t - idle_since_ - aifs_ns(static_cast<Ac>(i));
                    if (elapsed > 0) {
                        const int dec = static_cast<int>(
                            std::min<std::int64_t>(a.backoff_slots, elapsed / phy_.slot_ns));
                        a.backoff_slots -= dec;
                    }
                }
            }
        }
        medium_busy_ = true;
        // A pending access at exactly t still fires: the transmission that
        // made the medium busy at t cannot be sensed yet.
        if (q_.pending(access_event_) && scheduled_access_ns_ > t) {
            q_.cancel(access_event_);
            access_event_ = EventHandle{};
        }
    }

    void on_channel_idle(TimeNs t) override {
        medium_busy_ = false;
        idle_since_ = t;
        refresh_contention();
    }

    void on_ppdu_received(const Ppdu& ppdu, const RxOutcome& outcome) override {
        switch (ppdu.type) {
        case FrameType::Data:
            if (outcome.delivered) {
                handle_data(ppdu);
            }
            break;
        case FrameType::BlockAck:
            if (outcome.delivered) {
                handle_block_ack(ppdu);
            }
            break;
        case FrameType::Trigger:
            if (outcome.delivered) {
                handle_trigger(ppdu);
            }
            break;
        case FrameType::Icf:
        case FrameType::Icr:
        case FrameType::MuRtsTxs:
        case FrameType::Cts:
            if (coordinator_ != nullptr) {
                coordinator_->on_control_frame(ppdu, outcome);
            }
            break;
        case FrameType::CfEnd:
            break; // carrier sense handles the medium state
        }
    }

    // ---- contention ----

    // Recomputes the pending channel access.  Called on enqueue, idle
    // transitions and TXOP completion; also by the AP when a station's LL
    // backlog changes (trigger eligibility).
    void refresh_contention() {
        // Backlog appearing while the medium is busy invokes the backoff
        // procedure even when an earlier post-backoff already ran out; a
        // stale zero counter must not grant next-idle access.
        for (int i = 0; i < kNumAcs; ++i) {
            const Ac a = static_cast<Ac>(i);
            const bool eligible = contention_eligible(a);
            if (eligible && !prev_eligible_[i] && medium_busy_ && acs_[i].backoff_slots == 0) {
                acs_[i].backoff_slots = draw_backoff(backoff_rng_, cw(a));
            }
            prev_eligible_[i] = eligible;
        }
        if (txop_ || window_ || medium_busy_) {
            return;
        }
        const TimeNs now = q_.now();
        TimeNs best = -1;
        for (int i = 0; i < kNumAcs; ++i) {
            const Ac a = static_cast<Ac>(i);
            if (!contention_eligible(a)) {
                access_time_[i] = -1;
                continue;
            }
            AcSt& s = acs_[i];
            if (s.backoff_slots < 0) {
                // Fresh backlog: immediate access if the medium has been
                // idle for AIFS already, otherwise start a backoff.
                if (now >= idle_since_ + aifs_ns(a)) {
                    s.backoff_slots = 0;
                } else {
                    s.backoff_slots = draw_backoff(backoff_rng_, cw(a));
                }
            }
            const TimeNs t =
                std::max(now, idle_since_ + aifs_ns(a) + s.backoff_slots * phy_.slot_ns);
            access_time_[i] = t;
            if (best < 0 || t < best) {
                best = t;
            }
        }
        if (best < 0) {
            if (q_.pending(access_event_)) {
                q_.cancel(access_event_);
                access_event_ = EventHandle{};
            }
            return;
        }
        if (q_.pending(access_event_) && scheduled_access_ns_ == best) {
            return;
        }
        if (q_.pending(access_event_)) {
            q_.cancel(access_event_);
        }
        scheduled_access_ns_ = best;
        access_event_ = q_.schedule(best, EventKind::BackoffSlot, info_.id,
                                    [this] { on_access_fired(); });
    }

  private:
    // ---- types ----

    struct AcSt {
        std::deque<Mpdu> queue;
        std::int64_t queued_bytes = 0;
        int cw_stage = 0;
        int backoff_slots = -1;
    };

    struct TxopCtx {
        int id = -1;
        Ac ac = Ac::Be;
        TimeNs access = 0;
        TimeNs limit_end = 0;
        TimeNs next_tx = 0;
        TimeNs anchor = 0; // start of the next labeled segment
        bool polling_done = false;
        bool polled_ok = false;
        bool grant_issued = false;
        bool single_exchange = false; // TXOP limit 0: one exchange, no sharing
        int exchanges = 0;
        bool failed = false;
        std::vector<TxopSegment> segments;
    };

    struct WindowCtx {
        int grant_id = -1;
        int txop_id = -1;
        TimeNs end = 0;
        TimeNs next_tx = 0;
        std::int64_t served_bytes = 0;
        std::function<void(TimeNs, std::int64_t)> on_close;
    };

    struct Exchange {
        enum class Kind { Su, Mu, UlMu } kind = Kind::Su;
        Ac ac = Ac::Be;
        TimeNs data_end = 0;
        TimeNs resp_end = 0;
        std::vector<int> dsts;
        std::vector<std::vector<Mpdu>> per_dst; // DL payload (empty for UlMu)
        std::vector<bool> acked;
        EventHandle timeout;
        bool in_window = false;
    };

    struct UlInFlight {
        std::vector<Mpdu> mpdus;
        EventHandle timeout;
    };

    // ---- small helpers ----

    AcSt& ac(Ac a) { return acs_[static_cast<int>(a)]; }
    const AcSt& ac(Ac a) const { return acs_[static_cast<int>(a)]; }

    TimeNs aifs_ns(Ac a) const { return phy_.sifs_ns + edca_[a].aifsn * phy_.slot_ns; }

    int cw(Ac a) const {
        const AcParams& p = edca_[a];
        const long long w = (static_cast<long long>(p.cw_min) + 1)
                            << std::min(ac(a).cw_stage, 16);
        return static_cast<int>(std::min<long long>(w - 1, p.cw_max));
    }

    bool contention_eligible(Ac a) const {
        if (contention_bytes(a) > 0) {
            return true;
        }
        if (a == Ac::Vo && info_.role == Role::Ap && ul_mu_enabled_ &&
            ll_ul_backlog_bytes() > 0) {
            return true;
        }
        return false;
    }

    TimeNs ba_airtime() const { return ctrl_airtime_ns(kBlockAckBytes, phy_); }
    TimeNs cfend_airtime() const { return ctrl_airtime_ns(kCfEndBytes, phy_); }

    void add_segment(SegmentKind kind, TimeNs end) {
        if (!txop_) {
            return;
        }
        txop_->segments.push_back(TxopSegment{kind, txop_->anchor, end});
        txop_->anchor = end;
    }

    // ---- access / TXOP ----

    void on_access_fired() {
        access_event_ = EventHandle{};
        const TimeNs now = q_.now();
        if (medium_busy_ && medium_.busy_since(info_.id) < now) {
            throw std::logic_error("access fired while medium busy");
        }
        // Winner: highest-priority AC whose access time is now; same-time
        // losers take an internal collision (CW doubling + redraw).
        int winner = -1;
        for (int i = 0; i < kNumAcs; ++i) {
            if (access_time_[i] == now && contention_eligible(static_cast<Ac>(i))) {
                if (winner < 0) {
                    winner = i;
                } else {
                    AcSt& l = acs_[i];
                    l.cw_stage = std::min(l.cw_stage + 1, 16);
                    l.backoff_slots = draw_backoff(backoff_rng_, cw(static_cast<Ac>(i)));
                }
            }
        }
        if (winner < 0) {
            refresh_contention();
            return;
        }
        begin_txop(static_cast<Ac>(winner), now);
    }

    void begin_txop(Ac a, TimeNs now) {
        floor_activity_end_ = now;
        txop_.emplace();
        txop_->id = ids_->next_txop++;
        txop_->ac = a;
        txop_->access = now;
        // A zero TXOP limit grants a single frame exchange of any duration
        // and can never share.
        txop_->single_exchange = edca_[a].txop_limit_ns == 0;
        txop_->limit_end =
            now + (txop_->single_exchange
                       ? phy_.max_ppdu_ns + 2 * phy_.sifs_ns + ba_airtime()
                       : edca_[a].txop_limit_ns);
        txop_->next_tx = now;
        txop_->anchor = now;
        txop_step();
    }

    // The per-TXOP action plan.  Strict priority: own DL, then trigger-based
    // UL MU for LL traffic, then TXOP sharing, then CF-End.
    void txop_step() {
        TxopCtx& ct = *txop_;
        if (ct.single_exchange && ct.exchanges >= 1) {
            end_txop(!ct.failed);
            return;
        }
        const bool coordinating = coordinator_ != nullptr && !ct.single_exchange;
        if (coordinating && !ct.polling_done &&
            coordinator_->poll_timing() == TxopCoordinator::PollTiming::AtTxopStart &&
            coordinator_->polling_enabled()) {
            coordinator_->begin_polling();
            return;
        }
        if (ct.next_tx <= ct.limit_end) {
            if (try_data_exchange(ct.ac, ct.limit_end, false)) {
                return;
            }
            if (info_.role == Role::Ap && ul_mu_enabled_ && try_ul_mu(ct.limit_end, false)) {
                return;
            }
            if (coordinating && !ct.grant_issued) {
                if (!ct.polling_done &&
                    coordinator_->poll_timing() == TxopCoordinator::PollTiming::BeforeSharing &&
                    coordinator_->polling_enabled()) {
                    coordinator_->begin_polling();
                    return;
                }
                if (ct.polled_ok && coordinator_->try_share()) {
                    return;
                }
            }
        }
        finish_txop();
    }

    void finish_txop() {
        TxopCtx& ct = *txop_;
        if (ct.exchanges == 0 && ct.segments.empty()) {
            // Nothing was ever transmitted; abandon without trace or CF-End.
            txop_.reset();
            refresh_contention();
            return;
        }
        const TimeNs cfend_end = ct.next_tx + cfend_airtime();
        if (cfend_end <= ct.limit_end) {
            send_cf_end(ct.next_tx, ct.limit_end - ct.next_tx, eligible_bytes_now(ct.ac, false),
                        false);
            return;
        }
        end_txop(!ct.failed);
    }

    std::int64_t eligible_bytes_now(Ac a, bool ll_only) const {
        std::int64_t b = 0;
        for (const Mpdu& m : ac(a).queue) {
            if (!ll_only || m.is_ll) {
                b += m.size_bytes;
            }
        }
        return b;
    }

    void send_cf_end(TimeNs t, TimeNs remaining, std::int64_t pending_bytes, bool in_window) {
        q_.schedule(t, EventKind::TxStart, info_.id, [this, remaining, pending_bytes, in_window] {
            if (floor_lost()) {
                // Someone seized the medium during a response-timeout gap.
                if (in_window) {
                    close_window(q_.now());
                } else if (txop_) {
                    end_txop(!txop_->failed);
                }
                return;
            }
            Ppdu p;
            p.tx_device = info_.id;
            p.type = FrameType::CfEnd;
            p.ac = in_window ? Ac::Vo : txop_->ac;
            p.airtime_ns = cfend_airtime();
            p.txop_id = in_window ? window_->txop_id : txop_->id;
            p.in_shared_window = in_window;
            p.grant_id = in_window ? window_->grant_id : -1;
            p.cfend_remaining_ns = remaining;
            p.cfend_pending_bytes = pending_bytes;
            const TimeNs end = q_.now() + p.airtime_ns;
            medium_.start_ppdu(std::move(p));
            if (in_window) {
                q_.schedule(end, EventKind::Timer, info_.id, [this, end] { close_window(end); });
            } else {
                q_.schedule(end, EventKind::Timer, info_.id, [this, end] {
                    add_segment(SegmentKind::CfEndResidue, end);
                    end_txop(!txop_->failed);
                });
            }
        });
    }

    void end_txop(bool success) {
        TxopCtx ct = std::move(*txop_);
        txop_.reset();
        if (exch_) {
            if (q_.pending(exch_->timeout)) {
                q_.cancel(exch_->timeout);
            }
            exch_.reset();
        }
        if (trace_ != nullptr) {
            TxopRecord r;
            r.txop_id = ct.id;
            r.holder = info_.id;
            r.ac = ct.ac;
            r.access_ns = ct.access;
            r.end_ns = ct.anchor;
            r.limit_end_ns = ct.limit_end;
            r.success = success;
            r.segments = std::move(ct.segments);
            trace_->add_txop(std::move(r));
        }
        if (coordinator_ != nullptr) {
            coordinator_->on_txop_finished();
        }
        // Post-backoff for the AC that held the TXOP.
        AcSt& a = ac(ct.ac);
        a.backoff_slots = draw_backoff(backoff_rng_, cw(ct.ac));
        refresh_contention();
    }

    // ---- data exchanges ----

    // Packs and transmits one A-MPDU exchange (SU, or DL MU across up to
    // four 242-tone RUs).  Returns false when nothing eligible fits before
    // window_end.
    bool try_data_exchange(Ac a, TimeNs window_end, bool in_window) {
        const TimeNs start = in_window ? window_->next_tx : txop_->next_tx;
        const TimeNs resp = phy_.sifs_ns + ba_airtime();
        const TimeNs budget = window_end - start - resp;
        if (budget <= 0) {
            return false;
        }
        const TimeNs data_budget = std::min<TimeNs>(budget, phy_.max_ppdu_ns);

        // Destinations in FIFO order of their head MPDU.
        std::vector<int> dsts;
        for (const Mpdu& m : ac(a).queue) {
            if (in_window && !m.is_ll) {
                continue;
            }
            if (std::find(dsts.begin(), dsts.end(), m.dst) == dsts.end()) {
                dsts.push_back(m.dst);
                if (static_cast<int>(dsts.size()) == phy_.max_ru) {
                    break;
                }
            }
        }
        if (dsts.empty()) {
            return false;
        }

        const bool mu = info_.role == Role::Ap && dsts.size() >= 2;
        std::vector<std::vector<Mpdu>> per_dst;
        TimeNs airtime = 0;
        if (mu) {
            per_dst.resize(dsts.size());
            TimeNs max_air = 0;
            for (std::size_t d = 0; d < dsts.size(); ++d) {
                pack_for_dst(a, dsts[d], in_window, data_budget, /*ru=*/true, per_dst[d]);
                if (!per_dst[d].empty()) {
                    TimeNs t = ru_airtime_ns(bytes_of(per_dst[d]), phy_);
                    max_air = std::max(max_air, t);
                }
            }
            // Drop receivers that could not fit a single MPDU.
            std::vector<int> kept;
            std::vector<std::vector<Mpdu>> kept_mpdus;
            for (std::size_t d = 0; d < dsts.size(); ++d) {
                if (!per_dst[d].empty()) {
                    kept.push_back(dsts[d]);
                    kept_mpdus.push_back(std::move(per_dst[d]));
                }
            }
            dsts = std::move(kept);
            per_dst = std::move(kept_mpdus);
            if (dsts.empty()) {
                return false;
            }
            if (dsts.size() == 1) {
                // Degenerate MU: requeue and fall through to SU full-band.
                requeue_front(a, per_dst[0]);
                per_dst.clear();
            } else {
                airtime = max_air;
            }
        }
        if (per_dst.empty()) {
            dsts.resize(1);
            per_dst.resize(1);
            pack_for_dst(a, dsts[0], in_window, data_budget, /*ru=*/false, per_dst[0]);
            if (per_dst[0].empty()) {
                return false;
            }
            airtime = ppdu_airtime_ns(bytes_of(per_dst[0]), phy_.data_mcs,
                                      static_cast<int>(per_dst[0].size()), phy_);
        }

        Exchange ex;
        ex.kind = per_dst.size() > 1 ? Exchange::Kind::Mu : Exchange::Kind::Su;
        ex.ac = a;
        ex.data_end = start + airtime;
        ex.resp_end = ex.data_end + phy_.sifs_ns + ba_airtime();
        ex.dsts = dsts;
        ex.per_dst = std::move(per_dst);
        ex.acked.assign(dsts.size(), false);
        ex.in_window = in_window;

        Ppdu p;
        p.tx_device = info_.id;
        p.type = FrameType::Data;
        p.ac = a;
        p.recipients = dsts;
        p.airtime_ns = airtime;
        p.txop_id = in_window ? window_->txop_id : txop_->id;
        p.in_shared_window = in_window;
        p.grant_id = in_window ? window_->grant_id : -1;
        if (ex.kind == Exchange::Kind::Mu) {
            p.mu_group = -1; // single transmission; response burst gets a group
        }
        p.response_group = ids_->next_group++;
        for (const auto& v : ex.per_dst) {
            p.mpdus.insert(p.mpdus.end(), v.begin(), v.end());
        }

        const TimeNs resp_end = ex.resp_end;
        const bool is_su = ex.kind == Exchange::Kind::Su;
        exch_ = std::move(ex);
        q_.schedule(start, EventKind::TxStart, info_.id,
                    [this, p = std::move(p)]() mutable { medium_.start_ppdu(std::move(p)); });
        if (is_su) {
            exch_->timeout = q_.schedule(resp_end + phy_.slot_ns, EventKind::Timer, info_.id,
                                         [this] { on_exchange_timeout(); });
        } else {
            q_.schedule(resp_end + 1, EventKind::Timer, info_.id, [this] { evaluate_mu(); });
        }
        if (!in_window && txop_) {
            txop_->exchanges++;
        }
        return true;
    }

    static std::int64_t bytes_of(const std::vector<Mpdu>& v) {
        std::int64_t b = 0;
        for (const Mpdu& m : v) {
            b += m.size_bytes;
        }
        return b;
    }

    // Moves up to 64 MPDUs for one receiver out of the queue, FIFO within
    // the AC, keeping the aggregate airtime within budget.
    void pack_for_dst(Ac a, int dst, bool ll_only, TimeNs air_budget, bool ru,
                      std::vector<Mpdu>& out) {
        AcSt& s = ac(a);
        std::int64_t bytes = 0;
        auto it = s.queue.begin();
        while (it != s.queue.end() && static_cast<int>(out.size()) < phy_.max_ampdu_mpdus) {
            if (it->dst != dst || (ll_only && !it->is_ll)) {
                ++it;
                continue;
            }
            const std::int64_t cand = bytes + it->size_bytes;
            const TimeNs air =
                ru ? phy::data_airtime_unchecked(cand, phy::bits_per_symbol_ru(phy_), phy_)
                   : phy::data_airtime_unchecked(
                         cand, phy::bits_per_symbol(phy_.data_mcs, phy_.bandwidth_mhz, phy_.n_ss),
                         phy_);
            if (air > air_budget) {
                break;
            }
            bytes = cand;
            out.push_back(*it);
            s.queued_bytes -= it->size_bytes;
            it = s.queue.erase(it);
        }
    }

    void requeue_front(Ac a, std::vector<Mpdu>& mpdus) {
        AcSt& s = ac(a);
        for (auto it = mpdus.rbegin(); it != mpdus.rend(); ++it) {
            s.queue.push_front(*it);
            s.queued_bytes += it->size_bytes;
        }
        mpdus.clear();
    }

    // Requeues failed MPDUs at the head with retry accounting; MPDUs at the
    // retry limit are dropped and counted as loss.
    void requeue_failed(Ac a, std::vector<Mpdu>& mpdus) {
        AcSt& s = ac(a);
        for (auto it = mpdus.rbegin(); it != mpdus.rend(); ++it) {
            Mpdu m = *it;
            m.retries++;
            if (m.retries > kRetryLimit) {
                if (metrics_ != nullptr) {
                    metrics_->on_mpdu_dropped(m);
                }
                continue;
            }
            s.queue.push_front(m);
            s.queued_bytes += m.size_bytes;
        }
        mpdus.clear();
    }

    void on_exchange_timeout() {
        if (!exch_) {
            return;
        }
        Exchange ex = std::move(*exch_);
        exch_.reset();
        const TimeNs now = q_.now();
        for (std::size_t d = 0; d < ex.dsts.size(); ++d) {
            requeue_failed(ex.ac, ex.per_dst[d]);
        }
        if (ex.in_window) {
            close_window(now);
            return;
        }
        AcSt& a = ac(ex.ac);
        a.cw_stage = std::min(a.cw_stage + 1, 16);
        add_segment(SegmentKind::OwnExchange, now);
        txop_->failed = true;
        end_txop(false);
    }

    void evaluate_mu() {
        if (!exch_) {
            return;
        }
        Exchange ex = std::move(*exch_);
        exch_.reset();
        const TimeNs now = q_.now();
        int acked = 0;
        for (std::size_t d = 0; d < ex.dsts.size(); ++d) {
            if (ex.acked[d]) {
                ++acked;
            } else {
                requeue_failed(ex.ac, ex.per_dst[d]);
            }
        }
        if (acked == 0) {
            if (ex.in_window) {
                close_window(now);
                return;
            }
            AcSt& a = ac(ex.ac);
            a.cw_stage = std::min(a.cw_stage + 1, 16);
            add_segment(SegmentKind::OwnExchange, now);
            txop_->failed = true;
            end_txop(false);
            return;
        }
        ac(ex.ac).cw_stage = 0;
        continue_after_exchange(ex, now);
    }

    void continue_after_exchange(const Exchange& ex, TimeNs end) {
        txop_note_floor_activity(end);
        if (ex.in_window) {
            for (const auto& v : ex.per_dst) {
                window_->served_bytes += bytes_of(v);
            }
            window_->next_tx = end + phy_.sifs_ns;
            window_step();
            return;
        }
        add_segment(SegmentKind::OwnExchange, end);
        txop_->next_tx = end + phy_.sifs_ns;
        txop_step();
    }

    // ---- trigger-based UL MU ----

    // Trigger exchange for LL uplink backlog: trigger, SIFS, padded UL PPDUs
    // on per-station RUs, SIFS, one multi-STA block-ack.
    bool try_ul_mu(TimeNs window_end, bool in_window) {
        if (view_ == nullptr) {
            return false;
        }
        const TimeNs start = in_window ? window_->next_tx : txop_->next_tx;
        std::vector<DeviceMac*> elig;
        for (DeviceMac* sta : view_->bss[info_.bss].ll_stas) {
            if (sta->ll_bytes(Ac::Vo) > 0) {
                elig.push_back(sta);
            }
        }
        if (elig.empty()) {
            return false;
        }
        // Round-robin over eligible stations, at most one RU each.
        std::vector<DeviceMac*> sel;
        const int n = static_cast<int>(elig.size());
        for (int k = 0; k < n && static_cast<int>(sel.size()) < phy_.max_ru; ++k) {
            sel.push_back(elig[(ul_rr_cursor_ + k) % n]);
        }
        ul_rr_cursor_ = (ul_rr_cursor_ + static_cast<int>(sel.size())) % std::max(n, 1);

        const TimeNs trig_air = trigger_airtime_ns(static_cast<int>(sel.size()), phy_);
        const TimeNs fixed = trig_air + phy_.sifs_ns + phy_.sifs_ns + ba_airtime();
        const TimeNs t_budget = std::min<TimeNs>(window_end - start - fixed, phy_.max_ppdu_ns);
        if (t_budget <= 0) {
            return false;
        }
        // A lone responder degenerates to a full-band uplink PPDU; only a
        // real multi-user burst splits into 242-tone RUs.
        TimeNs padded = 0;
        std::vector<DeviceMac*> fit;
        const bool full_band = sel.size() == 1;
        for (DeviceMac* sta : sel) {
            const TimeNs need = sta->ul_ll_need_airtime(t_budget, full_band);
            if (need > 0) {
                fit.push_back(sta);
                padded = std::max(padded, need);
            }
        }
        if (fit.empty()) {
            return false;
        }

        Exchange ex;
        ex.kind = Exchange::Kind::UlMu;
        ex.ac = in_window ? Ac::Vo : txop_->ac;
        ex.data_end = start + trig_air + phy_.sifs_ns + padded;
        ex.resp_end = ex.data_end + phy_.sifs_ns + ba_airtime();
        for (DeviceMac* sta : fit) {
            ex.dsts.push_back(sta->info().id);
        }
        ex.per_dst.resize(ex.dsts.size());
        ex.acked.assign(ex.dsts.size(), false);
        ex.in_window = in_window;
        exch_ = std::move(ex);

        TriggerInfo ti;
        ti.padded_airtime_ns = padded;
        for (DeviceMac* sta : fit) {
            ti.stations.push_back(sta->info().id);
        }
        const int group = ids_->next_group++;
        std::vector<int> rcpts = ti.stations;
        transmit_control_at(start, FrameType::Trigger, rcpts,
                            kTriggerBaseBytes +
                                kTriggerPerUserBytes * static_cast<int>(ti.stations.size()),
                            [ti, group](Ppdu& p) {
                                p.trigger = ti;
                                p.response_group = group;
                            });
        q_.schedule(exch_->data_end + 1, EventKind::Timer, info_.id, [this] { evaluate_ul_mu(); });
        if (!in_window && txop_) {
            txop_->exchanges++;
        }
        return true;
    }

    // Airtime needed for this station's LL backlog (up to 64 MPDUs) on a
    // full-band or single-RU uplink PPDU, clipped to cap; zero when not even
    // the head MPDU fits.
    TimeNs ul_ll_need_airtime(TimeNs cap, bool full_band) const {
        const std::int64_t bps =
            full_band ? phy::bits_per_symbol(phy_.data_mcs, phy_.bandwidth_mhz, phy_.n_ss)
                      : phy::bits_per_symbol_ru(phy_);
        std::int64_t bytes = 0;
        int count = 0;
        TimeNs best = 0;
        for (const Mpdu& m : ac(Ac::Vo).queue) {
            if (!m.is_ll) {
                continue;
            }
            const TimeNs air = phy::data_airtime_unchecked(bytes + m.size_bytes, bps, phy_);
            if (air > cap || count == phy_.max_ampdu_mpdus) {
                break;
            }
            bytes += m.size_bytes;
            best = air;
            ++count;
        }
        return best;
    }

    void handle_trigger(const Ppdu& trigger) {
        bool addressed = false;
        for (int s : trigger.trigger.stations) {
            if (s == info_.id) {
                addressed = true;
            }
        }
        if (!addressed || ul_inflight_ || txop_ || window_) {
            return;
        }
        const TimeNs t = q_.now() + phy_.sifs_ns;
        const TimeNs padded = trigger.trigger.padded_airtime_ns;
        const std::int64_t bps =
            trigger.trigger.stations.size() == 1
                ? phy::bits_per_symbol(phy_.data_mcs, phy_.bandwidth_mhz, phy_.n_ss)
                : phy::bits_per_symbol_ru(phy_);
        // Pack LL MPDUs that fit the granted duration.
        std::vector<Mpdu> mpdus;
        AcSt& s = ac(Ac::Vo);
        std::int64_t bytes = 0;
        auto it = s.queue.begin();
        while (it != s.queue.end() && static_cast<int>(mpdus.size()) < phy_.max_ampdu_mpdus) {
            if (!it->is_ll) {
                ++it;
                continue;
            }
            const TimeNs air = phy::data_airtime_unchecked(bytes + it->size_bytes, bps, phy_);
            if (air > padded) {
                break;
            }
            bytes += it->size_bytes;
            mpdus.push_back(*it);
            s.queued_bytes -= it->size_bytes;
            it = s.queue.erase(it);
        }
        if (mpdus.empty()) {
            return;
        }
        ul_inflight_.emplace();
        ul_inflight_->mpdus = mpdus;
        const TimeNs resp_end = t + padded + phy_.sifs_ns + ba_airtime();
        ul_inflight_->timeout = q_.schedule(resp_end + phy_.slot_ns, EventKind::Timer, info_.id,
                                            [this] { on_ul_timeout(); });

        Ppdu p;
        p.tx_device = info_.id;
        p.type = FrameType::Data;
        p.ac = Ac::Vo;
        p.recipients = {trigger.tx_device};
        p.airtime_ns = padded; // padded to the trigger's common duration
        p.txop_id = trigger.txop_id;
        p.in_shared_window = trigger.in_shared_window;
        p.grant_id = trigger.grant_id;
        p.mu_group = trigger.response_group;
        p.mpdus = std::move(mpdus);
        q_.schedule(t, EventKind::TxStart, info_.id,
                    [this, p = std::move(p)]() mutable { medium_.start_ppdu(std::move(p)); });
    }

    void on_ul_timeout() {
        if (!ul_inflight_) {
            return;
        }
        UlInFlight inflight = std::move(*ul_inflight_);
        ul_inflight_.reset();
        // Triggered access: requeue without CW escalation.
        AcSt& s = ac(Ac::Vo);
        for (auto it = inflight.mpdus.rbegin(); it != inflight.mpdus.rend(); ++it) {
            Mpdu m = *it;
            m.retries++;
            if (m.retries > kRetryLimit) {
                if (metrics_ != nullptr) {
                    metrics_->on_mpdu_dropped(m);
                }
                continue;
            }
            s.queue.push_front(m);
            s.queued_bytes += m.size_bytes;
        }
    }

    void evaluate_ul_mu() {
        if (!exch_ || exch_->kind != Exchange::Kind::UlMu) {
            return;
        }
        Exchange ex = std::move(*exch_);
        exch_.reset();
        const TimeNs now = q_.now();
        std::vector<int> delivered;
        std::int64_t served = 0;
        for (std::size_t d = 0; d < ex.dsts.size(); ++d) {
            if (ex.acked[d]) {
                delivered.push_back(ex.dsts[d]);
                served += ul_served_bytes_[ex.dsts[d]];
            }
        }
        if (delivered.empty()) {
            if (ex.in_window) {
                close_window(now);
                return;
            }
            AcSt& a = ac(ex.ac);
            a.cw_stage = std::min(a.cw_stage + 1, 16);
            add_segment(SegmentKind::OwnExchange, now);
            txop_->failed = true;
            end_txop(false);
            return;
        }
        // Multi-STA block-ack, SIFS after the padded uplink PPDUs.
        const TimeNs ba_start = ex.data_end + phy_.sifs_ns;
        const TimeNs ba_end = ba_start + ba_airtime();
        transmit_control_at(ba_start, FrameType::BlockAck, delivered, kBlockAckBytes);
        txop_note_floor_activity(ba_end);
        if (ex.in_window) {
            window_->served_bytes += served;
            window_->next_tx = ba_end + phy_.sifs_ns;
            q_.schedule(ba_end, EventKind::Timer, info_.id, [this] { window_step(); });
            return;
        }
        ac(ex.ac).cw_stage = 0;
        q_.schedule(ba_end, EventKind::Timer, info_.id, [this, ba_end] {
            add_segment(SegmentKind::OwnExchange, ba_end);
            txop_->next_tx = ba_end + phy_.sifs_ns;
            txop_step();
        });
    }

    // ---- receive side ----

    void handle_data(const Ppdu& ppdu) {
        const TimeNs now = q_.now();
        std::int64_t my_bytes = 0;
        int my_count = 0;
        for (const Mpdu& m : ppdu.mpdus) {
            if (m.dst != info_.id) {
                continue;
            }
            my_bytes += m.size_bytes;
            ++my_count;
            if (metrics_ != nullptr) {
                metrics_->on_mpdu_delivered(m, now);
            }
        }
        if (my_count == 0) {
            return;
        }
        if (ppdu.mu_group >= 0) {
            // Uplink MU data: the AP acknowledges the burst as a whole.
            if (exch_ && exch_->kind == Exchange::Kind::UlMu) {
                for (std::size_t d = 0; d < exch_->dsts.size(); ++d) {
                    if (exch_->dsts[d] == ppdu.tx_device) {
                        exch_->acked[d] = true;
                        ul_served_bytes_[ppdu.tx_device] = ppdu.payload_bytes();
                    }
                }
            }
            return;
        }
        if (txop_ || window_ || exch_) {
            return; // cannot act as a responder mid-exchange (collision corner)
        }
        // Block-ack one SIFS after the data.
        const int sender = ppdu.tx_device;
        const int group = ppdu.response_group;
        const int txid = ppdu.txop_id;
        const bool in_win = ppdu.in_shared_window;
        const int grant = ppdu.grant_id;
        q_.schedule(now + phy_.sifs_ns, EventKind::TxStart, info_.id,
                    [this, sender, group, txid, in_win, grant] {
                        if (txop_ || window_) {
                            return;
                        }
                        Ppdu ba;
                        ba.tx_device = info_.id;
                        ba.type = FrameType::BlockAck;
                        ba.ac = Ac::Vo;
                        ba.recipients = {sender};
                        ba.airtime_ns = ba_airtime();
                        ba.txop_id = txid;
                        ba.in_shared_window = in_win;
                        ba.grant_id = grant;
                        ba.mu_group = group;
                        medium_.start_ppdu(std::move(ba));
                    });
    }

    void handle_block_ack(const Ppdu& ba) {
        bool addressed = false;
        for (int r : ba.recipients) {
            if (r == info_.id) {
                addressed = true;
            }
        }
        if (!addressed) {
            return;
        }
        if (ul_inflight_) {
            // Acknowledgement of our triggered uplink burst.
            if (q_.pending(ul_inflight_->timeout)) {
                q_.cancel(ul_inflight_->timeout);
            }
            ul_inflight_.reset();
            return;
        }
        if (!exch_ || exch_->kind == Exchange::Kind::UlMu) {
            return;
        }
        const TimeNs now = q_.now();
        for (std::size_t d = 0; d < exch_->dsts.size(); ++d) {
            if (exch_->dsts[d] == ba.tx_device) {
                exch_->acked[d] = true;
            }
        }
        if (exch_->kind == Exchange::Kind::Su) {
            if (q_.pending(exch_->timeout)) {
                q_.cancel(exch_->timeout);
            }
            Exchange ex = std::move(*exch_);
            exch_.reset();
            ac(ex.ac).cw_stage = 0;
            continue_after_exchange(ex, now);
        }
        // MU: evaluation event collects all block-acks.
    }

    // ---- shared window execution ----

    void window_step() {
        WindowCtx& w = *window_;
        if (w.next_tx < w.end) {
            if (try_data_exchange(Ac::Vo, w.end, true)) {
                return;
            }
            if (ul_mu_enabled_ && try_ul_mu(w.end, true)) {
                return;
            }
        }
        const TimeNs cfend_end = w.next_tx + cfend_airtime();
        if (cfend_end <= w.end) {
            send_cf_end(w.next_tx, w.end - w.next_tx, eligible_bytes_now(Ac::Vo, true), true);
            return;
        }
        close_window(w.next_tx - phy_.sifs_ns);
    }

    void close_window(TimeNs t) {
        if (!window_) {
            return;
        }
        WindowCtx w = std::move(*window_);
        window_.reset();
        if (w.on_close) {
            w.on_close(t, w.served_bytes);
        }
        refresh_contention();
    }

    // ---- members ----

    EventQueue& q_;
    Medium& medium_;
    const PhyConfig phy_;
    EdcaParams edca_;
    DeviceInfo info_;
    RngStream backoff_rng_;
    IdGen* ids_;
    MetricsCollector* metrics_;
    TraceLog* trace_;
    NetworkView* view_ = nullptr;
    TxopCoordinator* coordinator_ = nullptr;
    bool ul_mu_enabled_ = true;
    bool ll_ul_via_trigger_ = true;

    std::array<AcSt, kNumAcs> acs_{};
    std::array<bool, kNumAcs> prev_eligible_{};
    bool medium_busy_ = false;
    TimeNs idle_since_ = 0;
    TimeNs floor_activity_end_ = 0;
    EventHandle access_event_{};
    TimeNs scheduled_access_ns_ = -1;
    std::array<TimeNs, kNumAcs> access_time_{-1, -1, -1};

    std::optional<TxopCtx> txop_;
    std::optional<WindowCtx> window_;
    std::optional<Exchange> exch_;
    std::optional<UlInFlight> ul_inflight_;
    std::unordered_map<int, std::int64_t> ul_served_bytes_;
    int ul_rr_cursor_ = 0;
};

} // namespace cotdma
