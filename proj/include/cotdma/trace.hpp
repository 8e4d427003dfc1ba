#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cotdma/phy.hpp"
#include "cotdma/time_units.hpp"
#include "cotdma/wifi.hpp"

namespace cotdma {

// One transmitted frame as observed on the air.
struct FrameRecord {
    TimeNs start_ns = 0;
    TimeNs end_ns = 0;
    int device = -1;
    FrameType type = FrameType::Data;
    Ac ac = Ac::Be;
    int n_mpdus = 0;
    std::int64_t payload_bytes = 0;
    bool all_ll = true;            // every carried MPDU tagged low-latency
    int txop_id = -1;
    bool in_shared_window = false;
    int grant_id = -1;
    bool delivered = true;         // any addressed recipient decoded it

    // CF-End decision snapshot, for the work-conservation check.
    TimeNs remaining_ns = 0;
    std::int64_t pending_eligible_bytes = 0;
};

// Labeled spans of one TXOP, recorded at emission time.
enum class SegmentKind : std::uint8_t {
    Polling,       // ICF + ICR exchange
    OwnExchange,   // holder's own frame exchanges
    Handshake,     // MU-RTS TXS + CTS
    SharedWindow,  // donated portion executed by the shared AP
    CfEndResidue,  // trailing CF-End truncation
};

struct TxopSegment {
    SegmentKind kind;
    TimeNs start_ns;
    TimeNs end_ns;
};

struct TxopRecord {
    int txop_id = -1;
    int holder = -1;
    Ac ac = Ac::Be;
    TimeNs access_ns = 0;   // start of the winning channel access
    TimeNs end_ns = 0;      // end of the last on-air activity
    TimeNs limit_end_ns = 0;
    bool success = true;
    std::vector<TxopSegment> segments;
};

struct GrantRecord {
    int grant_id = -1;
    int txop_id = -1;
    int sharing_ap = -1;
    int shared_ap = -1;
    TimeNs grant_time_ns = 0;     // MU-RTS TXS emission
    TimeNs window_start_ns = 0;
    TimeNs duration_ns = 0;
    TimeNs window_close_ns = 0;   // actual control-return instant
    std::int64_t dl_ll_bytes = 0; // candidate backlog used for sizing
    std::int64_t ul_ll_bytes = 0;
    std::int64_t served_bytes = 0;

    // Decision snapshot at the share instant, for the priority-soundness
    // check: raw facts, re-evaluated independently by the checker.
    TimeNs remaining_ns = 0;
    std::int64_t own_dl_backlog_bytes = 0;
    std::int64_t own_dl_first_mpdu_bytes = 0;
    std::int64_t own_ul_ll_backlog_bytes = 0;
};

struct ArrivalRecord {
    TimeNs time_ns = 0;
    std::int32_t flow_id = -1;
    TrafficModel model = TrafficModel::Background;
    Direction dir = Direction::Dl;
    std::int64_t size_bytes = 0;
};

class TraceLog {
  public:
    bool frames_enabled = false;
    bool txops_enabled = false;
    bool grants_enabled = false;
    bool arrivals_enabled = false;

    void add_frame(FrameRecord r) {
        if (frames_enabled) {
            frames_.push_back(r);
        }
    }
    void add_txop(TxopRecord r) {
        if (txops_enabled) {
            txops_.push_back(std::move(r));
        }
    }
    void add_grant(GrantRecord r) {
        if (grants_enabled) {
            grants_.push_back(r);
        }
    }
    void add_arrival(ArrivalRecord r) {
        if (arrivals_enabled) {
            arrivals_.push_back(r);
        }
    }

    const std::vector<FrameRecord>& frames() const { return frames_; }
    const std::vector<TxopRecord>& txops() const { return txops_; }
    const std::vector<GrantRecord>& grants() const { return grants_; }
    const std::vector<ArrivalRecord>& arrivals() const { return arrivals_; }

    std::string frames_csv() const {
        std::ostringstream os;
        os << "time_us,device,event,ac,n_mpdus,airtime_us,outcome\n";
        for (const FrameRecord& f : frames_) {
            os << ns_to_us(f.start_ns) << ',' << f.device << ',' << to_string(f.type) << ','
               << to_string(f.ac) << ',' << f.n_mpdus << ',' << ns_to_us(f.end_ns - f.start_ns)
               << ',' << (f.delivered ? "ok" : "collided") << '\n';
        }
        return os.str();
    }

    std::string grants_csv() const {
        std::ostringstream os;
        os << "time_us,sharing_ap,shared_ap,duration_us,dl_ll_bytes,ul_ll_bytes\n";
        for (const GrantRecord& g : grants_) {
            os << ns_to_us(g.grant_time_ns) << ',' << g.sharing_ap << ',' << g.shared_ap << ','
               << ns_to_us(g.duration_ns) << ',' << g.dl_ll_bytes << ',' << g.ul_ll_bytes << '\n';
        }
        return os.str();
    }

    std::string arrivals_csv() const {
        std::ostringstream os;
        os << "time_us,flow_id,model,direction,size_bytes\n";
        for (const ArrivalRecord& a : arrivals_) {
            os << ns_to_us(a.time_ns) << ',' << a.flow_id << ',' << to_string(a.model) << ','
               << to_string(a.dir) << ',' << a.size_bytes << '\n';
        }
        return os.str();
    }

  private:
    std::vector<FrameRecord> frames_;
    std::vector<TxopRecord> txops_;
    std::vector<GrantRecord> grants_;
    std::vector<ArrivalRecord> arrivals_;
};

// Post-run verification of the coordination protocol invariants.  Fit
// decisions are re-derived here from the raw snapshots, independent of the
// MAC's own eligibility logic.
class TraceChecker {
  public:
    explicit TraceChecker(const PhyConfig& phy) : phy_(phy) {}

    std::vector<std::string> violations(const TraceLog& log) const {
        std::vector<std::string> out;
        check_single_share(log, out);
        check_containment(log, out);
        check_role_legality(log, out);
        check_priority_soundness(log, out);
        check_txop_limit(log, out);
        check_work_conservation(log, out);
        check_overlaps(log, out);
        return out;
    }

    // Baseline purity: an uncoordinated run must carry no coordination frames.
    static bool has_coordination_frames(const TraceLog& log) {
        for (const FrameRecord& f : log.frames()) {
            if (f.type == FrameType::Icf || f.type == FrameType::Icr ||
                f.type == FrameType::MuRtsTxs) {
                return true;
            }
        }
        return false;
    }

  private:
    void check_single_share(const TraceLog& log, std::vector<std::string>& out) const {
        std::vector<int> seen;
        for (const GrantRecord& g : log.grants()) {
            for (int t : seen) {
                if (t == g.txop_id) {
                    out.push_back("single-share: txop " + std::to_string(g.txop_id) +
                                  " issued more than one grant");
                }
            }
            seen.push_back(g.txop_id);
        }
    }

    void check_containment(const TraceLog& log, std::vector<std::string>& out) const {
        for (const GrantRecord& g : log.grants()) {
            const TimeNs window_end = g.window_start_ns + g.duration_ns;
            for (const FrameRecord& f : log.frames()) {
                if (f.grant_id != g.grant_id || !f.in_shared_window) {
                    continue;
                }
                if (f.end_ns > window_end) {
                    out.push_back("containment: frame of grant " + std::to_string(g.grant_id) +
                                  " ends after the window");
                }
            }
            for (const TxopRecord& t : log.txops()) {
                if (t.txop_id == g.txop_id && window_end > t.limit_end_ns) {
                    out.push_back("containment: grant " + std::to_string(g.grant_id) +
                                  " extends past the sharing TXOP limit");
                }
            }
        }
    }

    void check_role_legality(const TraceLog& log, std::vector<std::string>& out) const {
        for (const FrameRecord& f : log.frames()) {
            if (f.in_shared_window && f.type == FrameType::Data && !f.all_ll) {
                out.push_back("role-legality: non-LL data inside shared window (device " +
                              std::to_string(f.device) + ")");
            }
        }
    }

    void check_priority_soundness(const TraceLog& log, std::vector<std::string>& out) const {
        for (const GrantRecord& g : log.grants()) {
            // DL eligible: traffic queued and the first MPDU's exchange fits.
            if (g.own_dl_backlog_bytes > 0) {
                const TimeNs exch = ppdu_airtime_ns(g.own_dl_first_mpdu_bytes, phy_.data_mcs, 1,
                                                    phy_) +
                                    phy_.sifs_ns + ctrl_airtime_ns(kBlockAckBytes, phy_);
                if (exch <= g.remaining_ns) {
                    out.push_back("priority: grant " + std::to_string(g.grant_id) +
                                  " issued with serviceable DL backlog");
                }
            }
            if (g.own_ul_ll_backlog_bytes > 0) {
                const TimeNs seq = trigger_airtime_ns(1, phy_) + phy_.sifs_ns +
                                   ppdu_airtime_ns(std::min<std::int64_t>(
                                                       g.own_ul_ll_backlog_bytes,
                                                       kMaxMpduPayloadBytes),
                                                   phy_.data_mcs, 1, phy_) +
                                   phy_.sifs_ns + ctrl_airtime_ns(kBlockAckBytes, phy_);
                if (seq <= g.remaining_ns) {
                    out.push_back("priority: grant " + std::to_string(g.grant_id) +
                                  " issued with serviceable UL LL backlog");
                }
            }
        }
    }

    void check_txop_limit(const TraceLog& log, std::vector<std::string>& out) const {
        std::unordered_map<int, TimeNs> limit;
        for (const TxopRecord& t : log.txops()) {
            limit[t.txop_id] = t.limit_end_ns;
        }
        for (const FrameRecord& f : log.frames()) {
            auto it = limit.find(f.txop_id);
            if (it != limit.end() && f.end_ns > it->second) {
                out.push_back("txop-limit: frame in txop " + std::to_string(f.txop_id) +
                              " ends after the TXOP limit");
            }
        }
    }

    void check_work_conservation(const TraceLog& log, std::vector<std::string>& out) const {
        for (const FrameRecord& f : log.frames()) {
            if (f.type != FrameType::CfEnd || f.pending_eligible_bytes == 0) {
                continue;
            }
            // Something was queued; CF-End is only legitimate if the head
            // exchange could not have fit the remaining time.
            const TimeNs exch =
                ppdu_airtime_ns(std::min<std::int64_t>(f.pending_eligible_bytes,
                                                       kMaxMpduPayloadBytes),
                                phy_.data_mcs, 1, phy_) +
                phy_.sifs_ns + ctrl_airtime_ns(kBlockAckBytes, phy_);
            if (exch <= f.remaining_ns) {
                out.push_back("work-conservation: CF-End by device " + std::to_string(f.device) +
                              " with serviceable traffic queued");
            }
        }
    }

    // Transmissions of distinct devices may overlap only when their exchange
    // roots began at the same instant (a slot collision), or inside the same
    // TXOP (SIFS-chained responses and shared windows).
    void check_overlaps(const TraceLog& log, std::vector<std::string>& out) const {
        std::unordered_map<int, TimeNs> roots; // txop_id -> access start
        for (const TxopRecord& t : log.txops()) {
            roots[t.txop_id] = t.access_ns;
        }
        auto root_of = [&roots](int txop_id) -> TimeNs {
            auto it = roots.find(txop_id);
            return it == roots.end() ? -1 : it->second;
        };
        std::vector<FrameRecord> fr = log.frames();
        std::sort(fr.begin(), fr.end(), [](const FrameRecord& a, const FrameRecord& b) {
            return a.start_ns < b.start_ns;
        });
        for (std::size_t i = 0; i < fr.size(); ++i) {
            for (std::size_t j = i + 1; j < fr.size(); ++j) {
                if (fr[j].start_ns >= fr[i].end_ns) {
                    break;
                }
                if (fr[i].device == fr[j].device || fr[i].txop_id == fr[j].txop_id) {
                    continue;
                }
                const TimeNs ri = root_of(fr[i].txop_id);
                const TimeNs rj = root_of(fr[j].txop_id);
                if (ri != rj) {
                    out.push_back("airtime: overlap of devices " + std::to_string(fr[i].device) +
                                  " and " + std::to_string(fr[j].device) + " at " +
                                  std::to_string(ns_to_us(fr[j].start_ns)) + " us");
                }
            }
        }
    }

    PhyConfig phy_;
};

} // namespace cotdma
