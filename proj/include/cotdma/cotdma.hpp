#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>

#include "cotdma/edca.hpp"
#include "cotdma/phy.hpp"
#include "cotdma/trace.hpp"
#include "cotdma/wifi.hpp"

namespace cotdma {

// How the sharing AP learns the candidate's backlog: over the wired backhaul
// (continuously fresh) or snapshotted in the ICR.  The polling exchange runs
// on air in both modes; it is what establishes that the partner can accept.
enum class InfoChannel : std::uint8_t { Backhaul, InBand };

namespace cotdma_cost {

// Bytes that fit one PPDU of at most air_cap at the given rate.
inline std::int64_t bytes_for_airtime(TimeNs air_cap, std::int64_t bits_per_symbol,
                                      const PhyConfig& c) {
    const TimeNs sym_budget = (air_cap - c.data_preamble_ns) / c.symbol_ns();
    if (sym_budget <= 0) {
        return 0;
    }
    return sym_budget * bits_per_symbol / 8;
}

inline std::int64_t dl_chunk_cap_bytes(const PhyConfig& c) {
    const std::int64_t by_count =
        static_cast<std::int64_t>(c.max_ampdu_mpdus) * kMaxMpduPayloadBytes;
    const std::int64_t by_air = bytes_for_airtime(
        c.max_ppdu_ns, phy::bits_per_symbol(c.data_mcs, c.bandwidth_mhz, c.n_ss), c);
    return std::min(by_count, by_air);
}

inline std::int64_t ul_chunk_cap_bytes(const PhyConfig& c) {
    const std::int64_t by_count =
        static_cast<std::int64_t>(c.max_ampdu_mpdus) * kMaxMpduPayloadBytes;
    const std::int64_t by_air = bytes_for_airtime(
        c.max_ppdu_ns, phy::bits_per_symbol(c.data_mcs, c.bandwidth_mhz, c.n_ss), c);
    return std::min(by_count, by_air);
}

// Cost of one downlink A-MPDU exchange: data, SIFS, block-ack.
inline TimeNs dl_exchange_cost(std::int64_t bytes, const PhyConfig& c) {
    return phy::data_airtime_unchecked(
               bytes, phy::bits_per_symbol(c.data_mcs, c.bandwidth_mhz, c.n_ss), c) +
           c.sifs_ns + ctrl_airtime_ns(kBlockAckBytes, c);
}

// Cost of one trigger-based uplink exchange for a single station (a lone
// responder uses the full band).
inline TimeNs ul_exchange_cost(std::int64_t bytes, const PhyConfig& c) {
    return trigger_airtime_ns(1, c) + c.sifs_ns +
           phy::data_airtime_unchecked(
               bytes, phy::bits_per_symbol(c.data_mcs, c.bandwidth_mhz, c.n_ss), c) +
           c.sifs_ns + ctrl_airtime_ns(kBlockAckBytes, c);
}

} // namespace cotdma_cost

// Time the shared AP needs to move the candidate's LL backlog, both DL and
// UL, as a train of SIFS-separated exchanges; clipped to the time left in
// the sharing AP's TXOP after the MU-RTS TXS/CTS handshake.
inline TimeNs compute_shared_duration(const CandidateInfo& info, TimeNs budget_after_handshake,
                                      const PhyConfig& c) {
    if (!info.responded) {
        throw std::invalid_argument("compute_shared_duration: candidate did not respond");
    }
    if (info.dl_ll_backlog_bytes <= 0 && info.ul_ll_backlog_bytes <= 0) {
        return 0;
    }
    TimeNs need = 0;
    bool first = true;
    std::int64_t dl = info.dl_ll_backlog_bytes;
    const std::int64_t dl_cap = cotdma_cost::dl_chunk_cap_bytes(c);
    while (dl > 0) {
        if (!first) {
            need += c.sifs_ns;
        }
        const std::int64_t chunk = std::min(dl, dl_cap);
        need += cotdma_cost::dl_exchange_cost(chunk, c);
        dl -= chunk;
        first = false;
    }
    std::int64_t ul = info.ul_ll_backlog_bytes;
    const std::int64_t ul_cap = cotdma_cost::ul_chunk_cap_bytes(c);
    while (ul > 0) {
        if (!first) {
            need += c.sifs_ns;
        }
        const std::int64_t chunk = std::min(ul, ul_cap);
        need += cotdma_cost::ul_exchange_cost(chunk, c);
        ul -= chunk;
        first = false;
    }
    return std::min(need, std::max<TimeNs>(budget_after_handshake, 0));
}

// Coordination state of one MAPC-capable AP.  Exactly two of these form a
// pair; either side may act as the sharing AP when it wins a TXOP (or only
// one of them, when configured unidirectional).
class CotdmaAgent : public TxopCoordinator {
  public:
    CotdmaAgent(DeviceMac& mac, IdGen* ids, TraceLog* trace)
        : mac_(mac), phy_(mac.phy()), ids_(ids), trace_(trace) {}

    void set_partner(CotdmaAgent* agent, DeviceMac* mac) {
        partner_agent_ = agent;
        partner_mac_ = mac;
    }
    void set_sharing_enabled(bool on) { sharing_enabled_ = on; }
    void set_info_channel(InfoChannel ch) { info_channel_ = ch; }

    const CandidateInfo& last_candidate() const { return cand_; }

    // ---- TxopCoordinator ----

    // The ICF/ICR probe is the information channel in in-band mode, so it
    // opens every sharing-capable TXOP; with backhaul information it is the
    // idleness check right before the sharing step.
    PollTiming poll_timing() const override {
        return info_channel_ == InfoChannel::InBand ? PollTiming::AtTxopStart
                                                    : PollTiming::BeforeSharing;
    }

    // Whether the probe is worth transmitting at all.  Sharing must be
    // reachable: there must be partner backlog to move (known for free over
    // the backhaul) and enough remaining TXOP for the probe, the handshake
    // and at least one LL exchange.
    bool polling_enabled() const override {
        if (!sharing_enabled_ || partner_mac_ == nullptr) {
            return false;
        }
        if (info_channel_ == InfoChannel::InBand) {
            // The probe is the only way to learn the backlog; gate only on
            // the TXOP being shareable at all.
            const Ac a = mac_.txop_ac();
            const std::int64_t own_bytes = mac_.queued_bytes(a);
            const TimeNs own_air = phy::data_airtime_unchecked(
                own_bytes, phy::bits_per_symbol(phy_.data_mcs, phy_.bandwidth_mhz, phy_.n_ss),
                phy_);
            return own_air < (mac_.txop_limit_end() - mac_.txop_next_tx());
        }
        const std::int64_t dl = partner_mac_->ll_dl_backlog_bytes();
        const std::int64_t ul = partner_mac_->ll_ul_backlog_bytes();
        if (dl <= 0 && ul <= 0) {
            return false;
        }
        const TimeNs polling = ctrl_airtime_ns(kIcfBytes, phy_) + phy_.sifs_ns +
                               ctrl_airtime_ns(kIcrBytes, phy_) + phy_.sifs_ns;
        const TimeNs handshake = ctrl_airtime_ns(kMuRtsTxsBytes, phy_) + phy_.sifs_ns +
                                 ctrl_airtime_ns(kCtsBytes, phy_) + phy_.sifs_ns;
        const TimeNs min_exchange =
            dl > 0 ? cotdma_cost::dl_exchange_cost(std::min<std::int64_t>(dl, kMaxMpduPayloadBytes),
                                                   phy_)
                   : cotdma_cost::ul_exchange_cost(std::min<std::int64_t>(ul, kMaxMpduPayloadBytes),
                                                   phy_);
        return mac_.txop_remaining() >= polling + handshake + min_exchange;
    }

    // Polling phase: ICF to the partner, ICR expected one SIFS later.  Both
    // info modes pay this airtime; it doubles as the network-idleness probe.
    void begin_polling() override {
        const TimeNs t = mac_.txop_next_tx();
        const TimeNs icf_air = ctrl_airtime_ns(kIcfBytes, phy_);
        const TimeNs icr_air = ctrl_airtime_ns(kIcrBytes, phy_);
        const TimeNs icr_end = t + icf_air + phy_.sifs_ns + icr_air;
        cand_ = CandidateInfo{};
        mac_.transmit_control_at(t, FrameType::Icf, {partner_mac_->info().id}, kIcfBytes);
        mac_.txop_note_floor_activity(t + icf_air);
        icr_timeout_ = mac_.queue().schedule(
            icr_end + phy_.slot_ns, EventKind::Timer, mac_.info().id, [this, icr_end] {
                mac_.txop_mark_polling(false, mac_.queue().now());
                mac_.txop_resume(mac_.queue().now() + phy_.sifs_ns);
            });
    }

    // Step 3 of the action plan.  Issues the MU-RTS TXS when the partner
    // reported LL backlog and the remaining TXOP fits the handshake plus at
    // least one minimal LL exchange.
    bool try_share() override {
        if (partner_mac_ == nullptr || !sharing_enabled_) {
            return false;
        }
        CandidateInfo info = cand_;
        if (info_channel_ == InfoChannel::Backhaul) {
            info.dl_ll_backlog_bytes = partner_mac_->ll_dl_backlog_bytes();
            info.ul_ll_backlog_bytes = partner_mac_->ll_ul_backlog_bytes();
        }
        if (!info.responded || (info.dl_ll_backlog_bytes <= 0 && info.ul_ll_backlog_bytes <= 0)) {
            return false;
        }
        const TimeNs t = mac_.txop_next_tx();
        const TimeNs remaining = mac_.txop_limit_end() - t;
        const TimeNs txs_air = ctrl_airtime_ns(kMuRtsTxsBytes, phy_);
        const TimeNs cts_air = ctrl_airtime_ns(kCtsBytes, phy_);
        const TimeNs handshake = txs_air + phy_.sifs_ns + cts_air + phy_.sifs_ns;
        const TimeNs min_exchange =
            info.dl_ll_backlog_bytes > 0
                ? cotdma_cost::dl_exchange_cost(
                      std::min<std::int64_t>(info.dl_ll_backlog_bytes, kMaxMpduPayloadBytes), phy_)
                : cotdma_cost::ul_exchange_cost(
                      std::min<std::int64_t>(info.ul_ll_backlog_bytes, kMaxMpduPayloadBytes),
                      phy_);
        if (remaining - handshake < min_exchange) {
            return false;
        }
        const TimeNs duration = compute_shared_duration(info, remaining - handshake, phy_);
        if (duration <= 0) {
            return false;
        }

        SharedGrantInfo grant;
        grant.grant_id = ids_->next_grant++;
        grant.sharing_ap = mac_.info().id;
        grant.shared_ap = partner_mac_->info().id;
        grant.duration_ns = duration;

        pending_ = PendingGrant{};
        pending_->grant = grant;
        pending_->txs_start = t;
        pending_->cts_end = t + txs_air + phy_.sifs_ns + cts_air;
        pending_->info = info;
        pending_->remaining = remaining;
        pending_->own_dl_backlog = mac_.queued_bytes(mac_.txop_ac());
        pending_->own_dl_first = mac_.first_eligible_bytes(mac_.txop_ac(), false);
        pending_->own_ul_ll = mac_.ll_ul_backlog_bytes();

        mac_.txop_note_grant_issued();
        mac_.transmit_control_at(t, FrameType::MuRtsTxs, {partner_mac_->info().id}, kMuRtsTxsBytes,
                                 [grant](Ppdu& p) { p.grant = grant; });
        mac_.txop_note_floor_activity(t + txs_air);
        cts_timeout_ = mac_.queue().schedule(
            pending_->cts_end + phy_.slot_ns, EventKind::Timer, mac_.info().id, [this] {
                // CTS absent: the grant is void; fall through to CF-End.
                pending_.reset();
                mac_.txop_mark_segment(SegmentKind::Handshake, mac_.queue().now());
                mac_.txop_resume(mac_.queue().now() + phy_.sifs_ns);
            });
        return true;
    }

    void on_control_frame(const Ppdu& ppdu, const RxOutcome& outcome) override {
        if (!outcome.delivered) {
            return;
        }
        switch (ppdu.type) {
        case FrameType::Icf: respond_icr(ppdu); break;
        case FrameType::Icr: accept_icr(ppdu); break;
        case FrameType::MuRtsTxs: respond_cts(ppdu); break;
        case FrameType::Cts: accept_cts(ppdu); break;
        default: break;
        }
    }

    void on_txop_finished() override {
        if (mac_.queue().pending(icr_timeout_)) {
            mac_.queue().cancel(icr_timeout_);
        }
        if (mac_.queue().pending(cts_timeout_)) {
            mac_.queue().cancel(cts_timeout_);
        }
        pending_.reset();
        cand_ = CandidateInfo{};
    }

    // Control return from the shared AP, at window close.
    void on_window_closed(TimeNs t, std::int64_t served_bytes) {
        if (!pending_) {
            return;
        }
        PendingGrant pg = *pending_;
        pending_.reset();
        if (trace_ != nullptr) {
            GrantRecord g;
            g.grant_id = pg.grant.grant_id;
            g.txop_id = mac_.txop_id();
            g.sharing_ap = pg.grant.sharing_ap;
            g.shared_ap = pg.grant.shared_ap;
            g.grant_time_ns = pg.txs_start;
            g.window_start_ns = pg.cts_end + phy_.sifs_ns;
            g.duration_ns = pg.grant.duration_ns;
            g.window_close_ns = t;
            g.dl_ll_bytes = pg.info.dl_ll_backlog_bytes;
            g.ul_ll_bytes = pg.info.ul_ll_backlog_bytes;
            g.served_bytes = served_bytes;
            g.remaining_ns = pg.remaining;
            g.own_dl_backlog_bytes = pg.own_dl_backlog;
            g.own_dl_first_mpdu_bytes = pg.own_dl_first;
            g.own_ul_ll_backlog_bytes = pg.own_ul_ll;
            trace_->add_grant(g);
        }
        mac_.txop_note_floor_activity(t);
        mac_.txop_mark_segment(SegmentKind::SharedWindow, t);
        mac_.txop_resume(t + phy_.sifs_ns);
    }

  private:
    struct PendingGrant {
        SharedGrantInfo grant;
        TimeNs txs_start = 0;
        TimeNs cts_end = 0;
        CandidateInfo info;
        TimeNs remaining = 0;
        std::int64_t own_dl_backlog = 0;
        std::int64_t own_dl_first = 0;
        std::int64_t own_ul_ll = 0;
    };

    void respond_icr(const Ppdu& icf) {
        if (mac_.in_txop() || mac_.in_shared_window()) {
            return; // busy; the poller times out and skips sharing
        }
        CandidateInfo snapshot;
        snapshot.ap_id = mac_.info().id;
        snapshot.dl_ll_backlog_bytes = mac_.ll_dl_backlog_bytes();
        snapshot.ul_ll_backlog_bytes = mac_.ll_ul_backlog_bytes();
        snapshot.responded = true;
        const int soliciting_txop = icf.txop_id;
        mac_.transmit_control_at(mac_.queue().now() + phy_.sifs_ns, FrameType::Icr,
                                 {icf.tx_device}, kIcrBytes, [snapshot, soliciting_txop](Ppdu& p) {
                                     p.candidate = snapshot;
                                     p.txop_id = soliciting_txop;
                                 });
    }

    void accept_icr(const Ppdu& icr) {
        if (!mac_.in_txop()) {
            return;
        }
        if (mac_.queue().pending(icr_timeout_)) {
            mac_.queue().cancel(icr_timeout_);
        }
        cand_ = icr.candidate;
        cand_.responded = true;
        const TimeNs now = mac_.queue().now();
        mac_.txop_note_floor_activity(now);
        mac_.txop_mark_polling(true, now);
        mac_.txop_resume(now + phy_.sifs_ns);
    }

    void respond_cts(const Ppdu& txs) {
        if (mac_.in_txop() || mac_.in_shared_window()) {
            return;
        }
        const SharedGrantInfo grant = txs.grant;
        const int sharing_txop = txs.txop_id;
        const TimeNs cts_start = mac_.queue().now() + phy_.sifs_ns;
        const TimeNs cts_end = cts_start + ctrl_airtime_ns(kCtsBytes, phy_);
        mac_.transmit_control_at(cts_start, FrameType::Cts, {txs.tx_device}, kCtsBytes,
                                 [sharing_txop](Ppdu& p) { p.txop_id = sharing_txop; });
        mac_.queue().schedule(cts_end, EventKind::Timer, mac_.info().id,
                              [this, grant, sharing_txop, cts_end] {
                                  const TimeNs start = cts_end + phy_.sifs_ns;
                                  mac_.begin_shared_window(
                                      grant, sharing_txop, start, start + grant.duration_ns,
                                      [this, t0 = start](TimeNs t, std::int64_t served) {
                                          if (partner_agent_ != nullptr) {
                                              partner_agent_->on_window_closed(std::max(t, t0),
                                                                               served);
                                          }
                                      });
                              });
    }

    void accept_cts(const Ppdu& cts) {
        (void)cts;
        if (!pending_ || !mac_.in_txop()) {
            return;
        }
        if (mac_.queue().pending(cts_timeout_)) {
            mac_.queue().cancel(cts_timeout_);
        }
        mac_.txop_note_floor_activity(mac_.queue().now());
        mac_.txop_mark_segment(SegmentKind::Handshake, mac_.queue().now());
        // The shared AP now runs the window; control returns through
        // on_window_closed.
    }

    DeviceMac& mac_;
    PhyConfig phy_;
    IdGen* ids_;
    TraceLog* trace_;
    CotdmaAgent* partner_agent_ = nullptr;
    DeviceMac* partner_mac_ = nullptr;
    bool sharing_enabled_ = true;
    InfoChannel info_channel_ = InfoChannel::Backhaul;
    CandidateInfo cand_{};
    std::optional<PendingGrant> pending_;
    EventHandle icr_timeout_{};
    EventHandle cts_timeout_{};
};

} // namespace cotdma
