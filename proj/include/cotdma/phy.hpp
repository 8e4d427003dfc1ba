#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cotdma/time_units.hpp"
#include "cotdma/wifi.hpp"

namespace cotdma {

struct OversizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fixed PHY configuration.  Data PPDUs use HE-style numerology on the full
// bandwidth (or a 242-tone RU inside it); control frames use a legacy 20 MHz
// OFDM model.
struct PhyConfig {
    int data_mcs = 7;
    int ctrl_mcs = 0;
    double tx_power_dbm = 21.0;
    int gi_ns = 800;
    double band_ghz = 5.0;
    int bandwidth_mhz = 80;
    int n_ss = 1;
    TimeNs max_ppdu_ns = us_to_ns(std::int64_t{5484});
    double pd_threshold_dbm = -82.0;
    double ed_threshold_dbm = -62.0;
    double capture_margin_db = 10.0;

    // Representative HE-era preamble durations.
    TimeNs data_preamble_ns = 44'000;
    TimeNs ctrl_preamble_ns = 20'000;

    // Legacy 6 Mb/s control rate: 24 data bits per 4 us symbol.
    int ctrl_bits_per_symbol = 24;
    TimeNs ctrl_symbol_ns = 4'000;

    TimeNs slot_ns = 9'000;
    TimeNs sifs_ns = 16'000;

    int max_ampdu_mpdus = 64;
    int max_ru = 4;        // 242-tone RUs
    int ru_tones = 242;
    int total_data_tones = 980; // 80 MHz HE data subcarriers

    TimeNs symbol_ns() const { return 12'800 + gi_ns; }
};

namespace phy {

struct McsEntry {
    int mod_bits;
    int coding_num;
    int coding_den;
};

inline const McsEntry& mcs_entry(int mcs) {
    static const McsEntry table[] = {
        {1, 1, 2},  // 0: BPSK 1/2
        {2, 1, 2},  // 1: QPSK 1/2
        {2, 3, 4},  // 2: QPSK 3/4
        {4, 1, 2},  // 3: 16-QAM 1/2
        {4, 3, 4},  // 4: 16-QAM 3/4
        {6, 2, 3},  // 5: 64-QAM 2/3
        {6, 3, 4},  // 6: 64-QAM 3/4
        {6, 5, 6},  // 7: 64-QAM 5/6
        {8, 3, 4},  // 8: 256-QAM 3/4
        {8, 5, 6},  // 9: 256-QAM 5/6
        {10, 3, 4}, // 10: 1024-QAM 3/4
        {10, 5, 6}, // 11: 1024-QAM 5/6
    };
    if (mcs < 0 || mcs > 11) {
        throw std::invalid_argument("mcs_entry: unsupported MCS index");
    }
    return table[mcs];
}

inline int data_subcarriers(int bandwidth_mhz) {
    switch (bandwidth_mhz) {
    case 20: return 234;
    case 40: return 468;
    case 80: return 980;
    case 160: return 1960;
    default: throw std::invalid_argument("data_subcarriers: unsupported bandwidth");
    }
}

// Data bits carried per OFDM symbol on the full configured bandwidth.
// MCS 7 / 80 MHz / 1 SS gives 4900 bits per symbol.
inline std::int64_t bits_per_symbol(int mcs, int bandwidth_mhz, int n_ss) {
    const McsEntry& e = mcs_entry(mcs);
    return static_cast<std::int64_t>(data_subcarriers(bandwidth_mhz)) * e.mod_bits *
           e.coding_num / e.coding_den * n_ss;
}

// Same, for one 242-tone RU of the configured bandwidth.
inline std::int64_t bits_per_symbol_ru(const PhyConfig& c) {
    return bits_per_symbol(c.data_mcs, c.bandwidth_mhz, c.n_ss) * c.ru_tones /
           c.total_data_tones;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

// PPDU airtime without the max-duration check; building blocks for the
// checked entry points below.
inline TimeNs data_airtime_unchecked(std::int64_t payload_octets, std::int64_t bps,
                                     const PhyConfig& c) {
    const std::int64_t symbols = ceil_div(payload_octets * 8, bps);
    return c.data_preamble_ns + symbols * c.symbol_ns();
}

} // namespace phy

// Airtime of a data PPDU carrying payload_octets across n_mpdus aggregated
// MPDUs at the given MCS on the full bandwidth.  Duration is
// preamble + ceil(payload bits / bits-per-symbol) * symbol time.
inline TimeNs ppdu_airtime_ns(std::int64_t payload_octets, int mcs, int n_mpdus,
                              const PhyConfig& c) {
    if (payload_octets < 0) {
        throw std::invalid_argument("ppdu_airtime: negative payload");
    }
    if (n_mpdus < 0 || n_mpdus > c.max_ampdu_mpdus) {
        throw std::invalid_argument("ppdu_airtime: MPDU count out of range");
    }
    const std::int64_t bps = phy::bits_per_symbol(mcs, c.bandwidth_mhz, c.n_ss);
    const TimeNs t = phy::data_airtime_unchecked(payload_octets, bps, c);
    if (t > c.max_ppdu_ns) {
        throw OversizeError("ppdu_airtime: duration exceeds max PPDU duration");
    }
    return t;
}

// Airtime of the same payload confined to one 242-tone RU (MU transmission).
inline TimeNs ru_airtime_ns(std::int64_t payload_octets, const PhyConfig& c) {
    if (payload_octets < 0) {
        throw std::invalid_argument("ru_airtime: negative payload");
    }
    const TimeNs t = phy::data_airtime_unchecked(payload_octets, phy::bits_per_symbol_ru(c), c);
    if (t > c.max_ppdu_ns) {
        throw OversizeError("ru_airtime: duration exceeds max PPDU duration");
    }
    return t;
}

// Control frame airtime at the legacy rate.
inline TimeNs ctrl_airtime_ns(int octets, const PhyConfig& c) {
    const std::int64_t symbols = phy::ceil_div(std::int64_t{octets} * 8, c.ctrl_bits_per_symbol);
    return c.ctrl_preamble_ns + symbols * c.ctrl_symbol_ns;
}

inline TimeNs trigger_airtime_ns(int n_users, const PhyConfig& c) {
    return ctrl_airtime_ns(kTriggerBaseBytes + kTriggerPerUserBytes * n_users, c);
}

// TGax enterprise-style breakpoint path loss at 5 GHz:
//   PL(d) = 40.05 + 20 log10(min(d,10)) + 35 log10(max(d,10)/10) + 7 * walls
inline double path_loss_db(double distance_m, int n_walls) {
    if (distance_m <= 0.0) {
        throw std::domain_error("path_loss_db: distance must be positive");
    }
    if (n_walls < 0) {
        throw std::invalid_argument("path_loss_db: negative wall count");
    }
    const double d1 = std::min(distance_m, 10.0);
    const double d2 = std::max(distance_m, 10.0) / 10.0;
    return 40.05 + 20.0 * std::log10(d1) + 35.0 * std::log10(d2) + 7.0 * n_walls;
}

struct Position {
    double x = 0.0;
    double y = 0.0;
};

inline double distance_m(const Position& a, const Position& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// Grant parameters carried by an MU-RTS TXS frame.
struct SharedGrantInfo {
    int grant_id = -1;
    int sharing_ap = -1;
    int shared_ap = -1;
    TimeNs duration_ns = 0;
};

// Per-user budget carried by a trigger frame; responders pad their uplink
// PPDUs to padded_airtime_ns.
struct TriggerInfo {
    std::vector<int> stations;
    TimeNs padded_airtime_ns = 0;
};

// Candidate shared-AP state reported during the polling phase.
struct CandidateInfo {
    int ap_id = -1;
    std::int64_t dl_ll_backlog_bytes = 0;
    std::int64_t ul_ll_backlog_bytes = 0;
    bool responded = false;
};

// One over-the-air transmission.
struct Ppdu {
    int tx_device = -1;
    FrameType type = FrameType::Data;
    Ac ac = Ac::Be;
    std::vector<Mpdu> mpdus;       // data frames only
    std::vector<int> recipients;   // addressed devices (empty for CF-End)
    TimeNs airtime_ns = 0;
    TimeNs start_ns = 0;
    int txop_id = -1;
    int mu_group = -1;             // same-group transmissions do not interfere
    int response_group = -1;       // group id assigned to the response burst
    bool in_shared_window = false;
    int grant_id = -1;

    SharedGrantInfo grant{};
    TriggerInfo trigger{};
    CandidateInfo candidate{};

    // CF-End decision snapshot (work-conservation trace check).
    TimeNs cfend_remaining_ns = 0;
    std::int64_t cfend_pending_bytes = 0;

    std::int64_t payload_bytes() const {
        std::int64_t total = 0;
        for (const Mpdu& m : mpdus) {
            total += m.size_bytes;
        }
        return total;
    }
};

} // namespace cotdma
