#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cotdma/rng.hpp"
#include "cotdma/time_units.hpp"
#include "cotdma/wifi.hpp"

namespace cotdma {

enum class DistKind : std::uint8_t {
    Constant,        // deterministic value
    TruncNormal,     // normal truncated at a positive floor
    Lognormal,
};

struct DistSpec {
    DistKind kind = DistKind::Constant;
    double cv = 0.0; // coefficient of variation around the configured mean
};

// One traffic flow as configured.  Means default to the paper's traffic
// table; the distribution shapes are declared configuration, not hidden
// constants.
struct FlowSpec {
    TrafficModel model = TrafficModel::Background;
    Direction direction = Direction::Dl;
    Ac ac = Ac::Be;
    double mean_pkt_bytes = 0.0;
    double mean_iat_us = 0.0;
    DistSpec size_dist{};
    DistSpec iat_dist{};

    bool is_ll() const { return model == TrafficModel::Rtmg || model == TrafficModel::Vr; }
};

// Access category mapping is total and fixed: RTMG and VR map to VO, VC to
// VI, background to BE.
inline Ac ac_for_model(TrafficModel m) {
    switch (m) {
    case TrafficModel::Rtmg:
    case TrafficModel::Vr: return Ac::Vo;
    case TrafficModel::Vc: return Ac::Vi;
    case TrafficModel::Background: return Ac::Be;
    }
    throw std::invalid_argument("ac_for_model: unknown traffic model");
}

inline FlowSpec default_flow_spec(TrafficModel model, Direction dir) {
    FlowSpec s;
    s.model = model;
    s.direction = dir;
    s.ac = ac_for_model(model);
    switch (model) {
    case TrafficModel::Rtmg:
        if (dir == Direction::Dl) {
            s.mean_pkt_bytes = 80.0;
            s.mean_iat_us = 23'060.0;
        } else {
            s.mean_pkt_bytes = 50.0;
            s.mean_iat_us = 30'490.0;
        }
        s.size_dist = {DistKind::TruncNormal, 0.25};
        s.iat_dist = {DistKind::TruncNormal, 0.25};
        break;
    case TrafficModel::Vr:
        if (dir == Direction::Dl) {
            s.mean_pkt_bytes = 166'660.0;
            s.mean_iat_us = 33'330.0;
            s.size_dist = {DistKind::Lognormal, 0.1};
        } else {
            s.mean_pkt_bytes = 190.0;
            s.mean_iat_us = 10'810.0;
            s.size_dist = {DistKind::Constant, 0.0};
        }
        s.iat_dist = {DistKind::Constant, 0.0};
        break;
    case TrafficModel::Vc:
        s.mean_pkt_bytes = 7'810.0;
        s.mean_iat_us = 33'330.0;
        s.size_dist = {DistKind::Lognormal, 0.2};
        s.iat_dist = {DistKind::Constant, 0.0};
        break;
    case TrafficModel::Background:
        s.mean_pkt_bytes = 200'000.0;
        s.mean_iat_us = 8'000.0;
        s.size_dist = {DistKind::Constant, 0.0};
        s.iat_dist = {DistKind::Constant, 0.0};
        break;
    }
    return s;
}

// Stateful arrival generator for one flow.
class FlowState {
  public:
    FlowState(FlowSpec spec, RngStream size_rng, RngStream iat_rng)
        : spec_(spec), size_rng_(size_rng), iat_rng_(iat_rng) {
        if (spec_.mean_pkt_bytes <= 0.0) {
            throw std::invalid_argument("make_flow: mean packet size must be positive");
        }
        if (spec_.mean_iat_us <= 0.0) {
            throw std::invalid_argument("make_flow: mean inter-arrival time must be positive");
        }
    }

    const FlowSpec& spec() const { return spec_; }

    struct Arrival {
        std::int64_t size_bytes;
        TimeNs iat_ns;
    };

    // Draws the next (packet size, inter-arrival time) pair from the
    // configured distributions.  Sizes are at least one octet.
    Arrival next_arrival() {
        const double size = draw(spec_.size_dist, spec_.mean_pkt_bytes, size_rng_);
        const double iat_us = draw(spec_.iat_dist, spec_.mean_iat_us, iat_rng_);
        Arrival a;
        a.size_bytes = std::max<std::int64_t>(1, std::llround(size));
        a.iat_ns = std::max<TimeNs>(1, us_to_ns(iat_us));
        return a;
    }

  private:
    static double draw(const DistSpec& d, double mean, RngStream& rng) {
        switch (d.kind) {
        case DistKind::Constant: return mean;
        case DistKind::TruncNormal:
            return rng.truncated_normal(mean, d.cv * mean, 1e-9);
        case DistKind::Lognormal:
            return rng.lognormal_mean_cv(mean, d.cv);
        }
        throw std::invalid_argument("next_arrival: unknown distribution kind");
    }

    FlowSpec spec_;
    RngStream size_rng_;
    RngStream iat_rng_;
};

inline FlowState make_flow(const FlowSpec& spec, RngStream size_rng, RngStream iat_rng) {
    return FlowState(spec, size_rng, iat_rng);
}

// Sanity-check figure for a flow configuration, bits per second.
inline double mean_offered_load_bps(const FlowSpec& spec) {
    if (spec.mean_iat_us <= 0.0) {
        throw std::invalid_argument("mean_offered_load_bps: mean IAT must be positive");
    }
    return 8.0 * spec.mean_pkt_bytes / (spec.mean_iat_us * 1e-6);
}

// Splits an application packet into MPDU-sized fragments.  Total size is
// conserved.
inline std::vector<std::int32_t> fragment_packet(std::int64_t size_bytes) {
    if (size_bytes <= 0) {
        throw std::invalid_argument("fragment_packet: size must be positive");
    }
    std::vector<std::int32_t> frags;
    while (size_bytes > 0) {
        const std::int32_t piece =
            static_cast<std::int32_t>(std::min<std::int64_t>(size_bytes, kMaxMpduPayloadBytes));
        frags.push_back(piece);
        size_bytes -= piece;
    }
    return frags;
}

} // namespace cotdma
