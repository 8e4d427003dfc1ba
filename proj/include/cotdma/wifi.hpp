#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cotdma/time_units.hpp"

namespace cotdma {

enum class Role : std::uint8_t { Ap, Sta };

enum class Direction : std::uint8_t { Dl, Ul };

enum class TrafficModel : std::uint8_t { Rtmg, Vr, Vc, Background };

// EDCA access categories, in priority order (lower value wins internal
// virtual contention).
enum class Ac : std::uint8_t { Vo = 0, Vi = 1, Be = 2 };
inline constexpr int kNumAcs = 3;

enum class FrameType : std::uint8_t {
    Data,
    BlockAck,
    Trigger,
    Icf,
    Icr,
    MuRtsTxs,
    Cts,
    CfEnd,
};

inline const char* to_string(Ac ac) {
    switch (ac) {
    case Ac::Vo: return "VO";
    case Ac::Vi: return "VI";
    case Ac::Be: return "BE";
    }
    return "?";
}

inline const char* to_string(FrameType t) {
    switch (t) {
    case FrameType::Data: return "DATA";
    case FrameType::BlockAck: return "BA";
    case FrameType::Trigger: return "TRIGGER";
    case FrameType::Icf: return "ICF";
    case FrameType::Icr: return "ICR";
    case FrameType::MuRtsTxs: return "MU-RTS-TXS";
    case FrameType::Cts: return "CTS";
    case FrameType::CfEnd: return "CF-END";
    }
    return "?";
}

inline const char* to_string(TrafficModel m) {
    switch (m) {
    case TrafficModel::Rtmg: return "RTMG";
    case TrafficModel::Vr: return "VR";
    case TrafficModel::Vc: return "VC";
    case TrafficModel::Background: return "BACKGROUND";
    }
    return "?";
}

inline const char* to_string(Direction d) { return d == Direction::Dl ? "DL" : "UL"; }

// One MAC data unit.  arrival_ns is the enqueue instant at the sender, which
// starts the end-to-end latency clock.
struct Mpdu {
    std::int32_t flow_id = -1;
    std::int64_t packet_seq = -1; // application packet this fragment belongs to
    std::int64_t mpdu_seq = -1;   // unique per flow, for duplicate suppression
    std::int32_t frag_index = 0;
    std::int32_t frag_count = 1;
    std::int32_t size_bytes = 0;
    TimeNs arrival_ns = 0;
    std::int32_t src = -1;
    std::int32_t dst = -1;
    Ac ac = Ac::Be;
    Direction dir = Direction::Dl;
    TrafficModel model = TrafficModel::Background;
    bool is_ll = false;
    std::int32_t retries = 0;
};

// Per-AC EDCA parameters.
struct AcParams {
    int aifsn = 2;
    int cw_min = 15;
    int cw_max = 1023;
    TimeNs txop_limit_ns = 0;
};

struct EdcaParams {
    std::array<AcParams, kNumAcs> ac{};

    const AcParams& operator[](Ac a) const { return ac[static_cast<int>(a)]; }
    AcParams& operator[](Ac a) { return ac[static_cast<int>(a)]; }

    // Default 5 GHz EDCA parameter set; scenario files can override.
    static EdcaParams defaults() {
        EdcaParams p;
        p[Ac::Vo] = {2, 3, 7, us_to_ns(std::int64_t{2080})};
        p[Ac::Vi] = {2, 7, 15, us_to_ns(std::int64_t{4096})};
        p[Ac::Be] = {3, 15, 1023, us_to_ns(std::int64_t{2528})};
        return p;
    }
};

// Control frame sizes in octets.  The coordination frames are modeled as
// fixed-size control frames; scale constants, not results-critical.
inline constexpr int kIcfBytes = 34;
inline constexpr int kIcrBytes = 14;
inline constexpr int kMuRtsTxsBytes = 34;
inline constexpr int kCtsBytes = 14;
inline constexpr int kCfEndBytes = 20;
inline constexpr int kBlockAckBytes = 32;
inline constexpr int kTriggerBaseBytes = 28;
inline constexpr int kTriggerPerUserBytes = 6;

// A-MPDU subframe payload limit; application packets above this are
// fragmented into back-to-back MPDUs.
inline constexpr int kMaxMpduPayloadBytes = 11454;

inline constexpr int kRetryLimit = 7;

} // namespace cotdma
