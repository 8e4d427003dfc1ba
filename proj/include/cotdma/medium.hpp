#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "cotdma/event_queue.hpp"
#include "cotdma/phy.hpp"
#include "cotdma/wifi.hpp"

namespace cotdma {

struct RxOutcome {
    bool delivered = false;
    double rssi_dbm = -300.0;
    double max_interference_dbm = -300.0;
};

// Devices observe the channel and receive frames through this interface.
class MediumListener {
  public:
    virtual ~MediumListener() = default;
    virtual void on_channel_busy(TimeNs t) = 0;
    virtual void on_channel_idle(TimeNs t) = 0;
    virtual void on_ppdu_received(const Ppdu& ppdu, const RxOutcome& outcome) = 0;
};

// Single shared channel.  Tracks concurrent transmissions, computes
// per-device carrier sense state (PD on the strongest signal, ED on the
// aggregate energy), and resolves per-recipient reception outcomes when a
// PPDU ends.  Reception fails when the strongest overlapping interferer is
// within the capture margin of the desired signal, or when the recipient was
// itself transmitting.
class Medium {
  public:
    Medium(EventQueue& queue, const PhyConfig& phy, int n_walls_between_any = 0)
        : queue_(queue), phy_(phy), default_walls_(n_walls_between_any) {}

    int add_device(Position pos) {
        const int id = static_cast<int>(devices_.size());
        devices_.push_back(DeviceEntry{pos, nullptr, false, 0, 0, {}, false});
        dirty_gains_ = true;
        return id;
    }

    int device_count() const { return static_cast<int>(devices_.size()); }

    void set_listener(int device, MediumListener* l) { devices_.at(device).listener = l; }

    void set_position(int device, Position pos) {
        devices_.at(device).pos = pos;
        dirty_gains_ = true;
    }

    Position position(int device) const { return devices_.at(device).pos; }

    // Enables per-device busy interval recording (used by the analytic
    // trace extraction).
    void record_busy_intervals(int device, bool enabled) {
        devices_.at(device).record_intervals = enabled;
    }

    const std::vector<std::pair<TimeNs, TimeNs>>& busy_intervals(int device) const {
        return devices_.at(device).intervals;
    }

    double rx_power_dbm(int from, int to) const {
        if (from == to) {
            return phy_.tx_power_dbm;
        }
        return phy_.tx_power_dbm - loss_db(from, to);
    }

    // Sensed channel state.  A transmission starting exactly now is not yet
    // sensed (half-open [start, end) semantics), so simultaneous slot-boundary
    // starts collide rather than defer.
    bool is_busy(int device) const { return devices_.at(device).busy; }

    TimeNs busy_since(int device) const { return devices_.at(device).busy_since; }

    TimeNs total_busy_ns(int device) const {
        const DeviceEntry& d = devices_.at(device);
        TimeNs total = d.busy_total;
        if (d.busy) {
            total += queue_.now() - d.busy_since;
        }
        return total;
    }

    using ResolutionHook =
        std::function<void(const Ppdu&, const std::vector<int>&, const std::vector<RxOutcome>&)>;

    // Observer invoked after every PPDU resolution, before recipients are
    // notified; used for tracing.
    void set_resolution_hook(ResolutionHook hook) { resolution_hook_ = std::move(hook); }

    // Starts a transmission now.  The PPDU's airtime must be set; reception
    // resolves when it ends.
    void start_ppdu(Ppdu ppdu) {
        refresh_gains();
        const TimeNs now = queue_.now();
        ppdu.start_ns = now;
        if (ppdu.airtime_ns <= 0) {
            throw std::invalid_argument("start_ppdu: airtime must be positive");
        }
        for (const ActiveTx& a : active_) {
            if (a.ppdu.tx_device == ppdu.tx_device) {
                throw std::logic_error("start_ppdu: device already transmitting");
            }
        }

        ActiveTx tx;
        tx.id = next_tx_id_++;
        tx.end_ns = now + ppdu.airtime_ns;
        tx.per_recipient.resize(ppdu.recipients.size());

        // Seed interference seen by the new transmission from everything
        // already on the air, and conversely.
        for (std::size_t r = 0; r < ppdu.recipients.size(); ++r) {
            const int rcpt = ppdu.recipients[r];
            for (const ActiveTx& a : active_) {
                if (same_mu_group(a.ppdu, ppdu)) {
                    continue;
                }
                note_interference(tx.per_recipient[r], rx_power_dbm(a.ppdu.tx_device, rcpt));
                if (a.ppdu.tx_device == rcpt) {
                    tx.per_recipient[r].recipient_was_txing = true;
                }
            }
        }
        for (ActiveTx& a : active_) {
            if (same_mu_group(a.ppdu, ppdu)) {
                continue;
            }
            for (std::size_t r = 0; r < a.ppdu.recipients.size(); ++r) {
                const int rcpt = a.ppdu.recipients[r];
                note_interference(a.per_recipient[r], rx_power_dbm(ppdu.tx_device, rcpt));
                if (ppdu.tx_device == rcpt) {
                    a.per_recipient[r].recipient_was_txing = true;
                }
            }
        }

        tx.ppdu = std::move(ppdu);
        const int tx_id = tx.id;
        active_.push_back(std::move(tx));
        update_all_busy();
        queue_.schedule(active_.back().end_ns, EventKind::TxEnd, active_.back().ppdu.tx_device,
                        [this, tx_id] { finish(tx_id); });
    }

    // Instantaneous channel state per the PD/ED rule; equivalent to
    // is_busy() but recomputed from the active set.
    bool channel_state_busy(int device) const {
        return compute_busy(device);
    }

  private:
    struct PerRecipient {
        double max_interf_dbm = -std::numeric_limits<double>::infinity();
        bool interfered = false;
        bool recipient_was_txing = false;
    };

    struct ActiveTx {
        int id = -1;
        Ppdu ppdu;
        TimeNs end_ns = 0;
        std::vector<PerRecipient> per_recipient;
    };

    struct DeviceEntry {
        Position pos;
        MediumListener* listener = nullptr;
        bool busy = false;
        TimeNs busy_since = 0;
        TimeNs busy_total = 0;
        std::vector<std::pair<TimeNs, TimeNs>> intervals;
        bool record_intervals = false;
    };

    static bool same_mu_group(const Ppdu& a, const Ppdu& b) {
        return a.mu_group >= 0 && a.mu_group == b.mu_group;
    }

    static void note_interference(PerRecipient& p, double power_dbm) {
        p.interfered = true;
        p.max_interf_dbm = std::max(p.max_interf_dbm, power_dbm);
    }

    double loss_db(int a, int b) const {
        return gains_[static_cast<std::size_t>(a) * devices_.size() + b];
    }

    void refresh_gains() {
        if (!dirty_gains_) {
            return;
        }
        const std::size_t n = devices_.size();
        gains_.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) {
                    continue;
                }
                const double d = std::max(distance_m(devices_[i].pos, devices_[j].pos), 0.1);
                gains_[i * n + j] = path_loss_db(d, default_walls_);
            }
        }
        dirty_gains_ = false;
    }

    bool compute_busy(int device) const {
        double sum_mw = 0.0;
        for (const ActiveTx& a : active_) {
            if (a.ppdu.tx_device == device) {
                return true; // transmitting: the medium is occupied by itself
            }
            const double p = phy_.tx_power_dbm - loss_db(a.ppdu.tx_device, device);
            if (p >= phy_.pd_threshold_dbm) {
                return true;
            }
            sum_mw += std::pow(10.0, p / 10.0);
        }
        if (sum_mw > 0.0 && 10.0 * std::log10(sum_mw) >= phy_.ed_threshold_dbm) {
            return true;
        }
        return false;
    }

    void update_all_busy() {
        const TimeNs now = queue_.now();
        for (std::size_t d = 0; d < devices_.size(); ++d) {
            DeviceEntry& e = devices_[d];
            const bool busy = compute_busy(static_cast<int>(d));
            if (busy == e.busy) {
                continue;
            }
            e.busy = busy;
            if (busy) {
                e.busy_since = now;
            } else {
                e.busy_total += now - e.busy_since;
                if (e.record_intervals) {
                    e.intervals.emplace_back(e.busy_since, now);
                }
            }
            if (e.listener != nullptr) {
                if (busy) {
                    e.listener->on_channel_busy(now);
                } else {
                    e.listener->on_channel_idle(now);
                }
            }
        }
    }

    void finish(int tx_id) {
        auto it = std::find_if(active_.begin(), active_.end(),
                               [tx_id](const ActiveTx& a) { return a.id == tx_id; });
        if (it == active_.end()) {
            return;
        }
        ActiveTx tx = std::move(*it);
        active_.erase(it);
        update_all_busy();

        std::vector<RxOutcome> outcomes(tx.ppdu.recipients.size());
        for (std::size_t r = 0; r < tx.ppdu.recipients.size(); ++r) {
            const int rcpt = tx.ppdu.recipients[r];
            RxOutcome& out = outcomes[r];
            out.rssi_dbm = rx_power_dbm(tx.ppdu.tx_device, rcpt);
            const PerRecipient& p = tx.per_recipient[r];
            out.max_interference_dbm = p.interfered ? p.max_interf_dbm : -300.0;
            const bool decodable = out.rssi_dbm >= phy_.pd_threshold_dbm;
            const bool captured =
                !p.interfered || out.rssi_dbm - p.max_interf_dbm >= phy_.capture_margin_db;
            out.delivered = decodable && captured && !p.recipient_was_txing;
        }
        if (resolution_hook_) {
            resolution_hook_(tx.ppdu, tx.ppdu.recipients, outcomes);
        }
        for (std::size_t r = 0; r < tx.ppdu.recipients.size(); ++r) {
            MediumListener* l = devices_[tx.ppdu.recipients[r]].listener;
            if (l != nullptr) {
                l->on_ppdu_received(tx.ppdu, outcomes[r]);
            }
        }
    }

    EventQueue& queue_;
    PhyConfig phy_;
    int default_walls_ = 0;
    std::vector<DeviceEntry> devices_;
    std::vector<double> gains_;
    bool dirty_gains_ = true;
    std::vector<ActiveTx> active_;
    int next_tx_id_ = 0;
    ResolutionHook resolution_hook_;
};

} // namespace cotdma
