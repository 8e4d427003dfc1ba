#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cotdma/time_units.hpp"
#include "cotdma/wifi.hpp"

namespace cotdma {

// One successfully delivered application packet.
struct LatencySample {
    std::int32_t flow_id = -1;
    std::int32_t bss_id = -1;
    bool is_co_bss = false;
    bool is_ll = false;
    Direction direction = Direction::Dl;
    TrafficModel model = TrafficModel::Background;
    TimeNs enqueue_ns = 0;
    TimeNs delivery_ns = 0;

    TimeNs latency_ns() const { return delivery_ns - enqueue_ns; }
};

// Nearest-rank percentile: value at index ceil(p * n) of the ascending sort.
inline double percentile(std::vector<double> samples, double p) {
    if (samples.empty()) {
        throw std::invalid_argument("percentile: empty sample set");
    }
    if (p <= 0.0 || p > 1.0) {
        throw std::invalid_argument("percentile: p must be in (0, 1]");
    }
    const std::size_t n = samples.size();
    std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    if (rank == 0) {
        rank = 1;
    }
    rank = std::min(rank, n);
    std::nth_element(samples.begin(), samples.begin() + (rank - 1), samples.end());
    return samples[rank - 1];
}

// Population standard deviation.
inline double jitter(const std::vector<double>& samples) {
    if (samples.size() < 2) {
        throw std::invalid_argument("jitter: need at least two samples");
    }
    double mean = 0.0;
    for (double s : samples) {
        mean += s;
    }
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double s : samples) {
        var += (s - mean) * (s - mean);
    }
    var /= static_cast<double>(samples.size());
    return std::sqrt(var);
}

inline double throughput_bps(std::int64_t delivered_payload_bytes, TimeNs window_ns) {
    if (window_ns <= 0) {
        throw std::invalid_argument("throughput_bps: window must be positive");
    }
    return 8.0 * static_cast<double>(delivered_payload_bytes) / ns_to_s(window_ns);
}

// Two-sided 95% Student-t quantile by degrees of freedom.
inline double t_quantile_975(int df) {
    static const double table[] = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    };
    if (df <= 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (df <= 30) {
        return table[df - 1];
    }
    if (df <= 40) return 2.021;
    if (df <= 50) return 2.009;
    if (df <= 60) return 2.000;
    if (df <= 80) return 1.990;
    if (df <= 100) return 1.984;
    return 1.960;
}

struct CiStat {
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n = 0;
};

// Mean and 95% confidence interval via Student-t.  A single observation has
// an undefined-wide interval (NaN bounds).
inline CiStat mean_ci(const std::vector<double>& values) {
    if (values.empty()) {
        throw std::invalid_argument("mean_ci: no values");
    }
    CiStat s;
    s.n = static_cast<int>(values.size());
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= s.n;
    if (s.n == 1) {
        s.ci_low = std::numeric_limits<double>::quiet_NaN();
        s.ci_high = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double var = 0.0;
    for (double v : values) {
        var += (v - s.mean) * (v - s.mean);
    }
    var /= (s.n - 1);
    const double half = t_quantile_975(s.n - 1) * std::sqrt(var / s.n);
    s.ci_low = s.mean - half;
    s.ci_high = s.mean + half;
    return s;
}

// Named sample groups reported by a run.
enum class Group : std::uint8_t {
    CoBssLl,
    CoBssLlDl,
    CoBssLlUl,
    NonCoBssLl,
    CoBssVc,
    NonCoBssVc,
    All,
};

inline const char* to_string(Group g) {
    switch (g) {
    case Group::CoBssLl: return "co_ll";
    case Group::CoBssLlDl: return "co_ll_dl";
    case Group::CoBssLlUl: return "co_ll_ul";
    case Group::NonCoBssLl: return "nonco_ll";
    case Group::CoBssVc: return "co_vc";
    case Group::NonCoBssVc: return "nonco_vc";
    case Group::All: return "all";
    }
    return "?";
}

inline const std::vector<Group>& all_groups() {
    static const std::vector<Group> g = {Group::CoBssLl,    Group::CoBssLlDl, Group::CoBssLlUl,
                                         Group::NonCoBssLl, Group::CoBssVc,   Group::NonCoBssVc,
                                         Group::All};
    return g;
}

inline bool in_group(const LatencySample& s, Group g) {
    switch (g) {
    case Group::CoBssLl: return s.is_co_bss && s.is_ll;
    case Group::CoBssLlDl: return s.is_co_bss && s.is_ll && s.direction == Direction::Dl;
    case Group::CoBssLlUl: return s.is_co_bss && s.is_ll && s.direction == Direction::Ul;
    case Group::NonCoBssLl: return !s.is_co_bss && s.is_ll;
    case Group::CoBssVc: return s.is_co_bss && s.model == TrafficModel::Vc;
    case Group::NonCoBssVc: return !s.is_co_bss && s.model == TrafficModel::Vc;
    case Group::All: return true;
    }
    return false;
}

struct GroupStats {
    double p95_latency_us = 0.0;
    double jitter_us = 0.0;
    int n_samples = 0;
    std::int64_t mpdu_loss_count = 0;
};

struct RunReport {
    std::uint64_t seed = 0;
    std::map<std::string, GroupStats> groups;
    double network_throughput_bps = 0.0;

    const GroupStats& group(Group g) const {
        auto it = groups.find(to_string(g));
        if (it == groups.end()) {
            throw std::out_of_range(std::string("RunReport: no group ") + to_string(g));
        }
        return it->second;
    }
};

// Collects per-run samples and produces a RunReport.  Latency is measured
// per application packet (recorded when the last fragment is delivered);
// throughput counts every delivered MPDU payload octet once.
class MetricsCollector {
  public:
    MetricsCollector(TimeNs warmup_ns, TimeNs sim_time_ns)
        : warmup_ns_(warmup_ns), sim_time_ns_(sim_time_ns) {}

    void set_flow_labels(std::int32_t flow_id, std::int32_t bss_id, bool co_bss) {
        if (static_cast<std::size_t>(flow_id) >= labels_.size()) {
            labels_.resize(flow_id + 1);
        }
        labels_[flow_id] = {bss_id, co_bss};
    }

    void on_packet_enqueued(const Mpdu& first_fragment) {
        PacketKey key{first_fragment.flow_id, first_fragment.packet_seq};
        pending_[pack(key)] = PendingPacket{first_fragment.arrival_ns,
                                            first_fragment.frag_count, 0};
    }

    void on_mpdu_delivered(const Mpdu& m, TimeNs delivery_ns) {
        const std::uint64_t dedup = (static_cast<std::uint64_t>(m.flow_id) << 40) ^
                                    static_cast<std::uint64_t>(m.mpdu_seq);
        if (!delivered_once_.insert(dedup).second) {
            return; // duplicate delivery; counted once
        }
        if (delivery_ns >= warmup_ns_ && delivery_ns <= sim_time_ns_) {
            delivered_payload_bytes_ += m.size_bytes;
        }
        auto it = pending_.find(pack(PacketKey{m.flow_id, m.packet_seq}));
        if (it == pending_.end()) {
            return;
        }
        PendingPacket& p = it->second;
        if (++p.delivered_frags < p.total_frags) {
            return;
        }
        // Last fragment: the application packet is complete.
        if (p.enqueue_ns >= warmup_ns_ && delivery_ns <= sim_time_ns_) {
            LatencySample s;
            s.flow_id = m.flow_id;
            s.bss_id = labels_[m.flow_id].bss_id;
            s.is_co_bss = labels_[m.flow_id].co_bss;
            s.is_ll = m.is_ll;
            s.direction = m.dir;
            s.model = m.model;
            s.enqueue_ns = p.enqueue_ns;
            s.delivery_ns = delivery_ns;
            samples_.push_back(s);
        }
        pending_.erase(it);
    }

    void on_mpdu_dropped(const Mpdu& m) {
        loss_total_++;
        auto it = pending_.find(pack(PacketKey{m.flow_id, m.packet_seq}));
        if (it != pending_.end()) {
            pending_.erase(it); // packet can no longer complete
        }
        if (static_cast<std::size_t>(m.flow_id) < labels_.size()) {
            if (labels_[m.flow_id].co_bss && m.is_ll) {
                loss_co_ll_++;
            }
        }
    }

    const std::vector<LatencySample>& samples() const { return samples_; }
    std::int64_t delivered_payload_bytes() const { return delivered_payload_bytes_; }
    std::int64_t loss_total() const { return loss_total_; }

    RunReport finalize(std::uint64_t seed) const {
        RunReport r;
        r.seed = seed;
        for (Group g : all_groups()) {
            std::vector<double> lat_us;
            for (const LatencySample& s : samples_) {
                if (in_group(s, g)) {
                    lat_us.push_back(ns_to_us(s.latency_ns()));
                }
            }
            GroupStats st;
            st.n_samples = static_cast<int>(lat_us.size());
            if (!lat_us.empty()) {
                st.p95_latency_us = percentile(lat_us, 0.95);
            }
            if (lat_us.size() >= 2) {
                st.jitter_us = jitter(lat_us);
            }
            if (g == Group::All) {
                st.mpdu_loss_count = loss_total_;
            } else if (g == Group::CoBssLl) {
                st.mpdu_loss_count = loss_co_ll_;
            }
            r.groups[to_string(g)] = st;
        }
        const TimeNs window = sim_time_ns_ - warmup_ns_;
        r.network_throughput_bps = throughput_bps(delivered_payload_bytes_, window);
        return r;
    }

  private:
    struct PacketKey {
        std::int32_t flow_id;
        std::int64_t packet_seq;
    };
    struct PendingPacket {
        TimeNs enqueue_ns;
        std::int32_t total_frags;
        std::int32_t delivered_frags;
    };
    struct FlowLabel {
        std::int32_t bss_id = -1;
        bool co_bss = false;
    };

    static std::uint64_t pack(PacketKey k) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.flow_id)) << 40) ^
               static_cast<std::uint64_t>(k.packet_seq);
    }

    TimeNs warmup_ns_;
    TimeNs sim_time_ns_;
    std::vector<FlowLabel> labels_;
    std::unordered_map<std::uint64_t, PendingPacket> pending_;
    std::unordered_set<std::uint64_t> delivered_once_;
    std::vector<LatencySample> samples_;
    std::int64_t delivered_payload_bytes_ = 0;
    std::int64_t loss_total_ = 0;
    std::int64_t loss_co_ll_ = 0;
};

} // namespace cotdma
