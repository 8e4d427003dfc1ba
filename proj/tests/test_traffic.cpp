#include <doctest.h>

#include <numeric>

#include "cotdma/rng.hpp"
#include "cotdma/traffic.hpp"

using namespace cotdma;

namespace {

FlowState flow_for(TrafficModel m, Direction d, std::uint64_t stream = 11) {
    const FlowSpec spec = default_flow_spec(m, d);
    return make_flow(spec, RngStream(77, stream), RngStream(77, stream + 1000));
}

} // namespace

TEST_CASE("access category mapping is total and fixed") {
    CHECK(ac_for_model(TrafficModel::Rtmg) == Ac::Vo);
    CHECK(ac_for_model(TrafficModel::Vr) == Ac::Vo);
    CHECK(ac_for_model(TrafficModel::Vc) == Ac::Vi);
    CHECK(ac_for_model(TrafficModel::Background) == Ac::Be);
    for (TrafficModel m : {TrafficModel::Rtmg, TrafficModel::Vr}) {
        CHECK(default_flow_spec(m, Direction::Dl).is_ll());
        CHECK(default_flow_spec(m, Direction::Ul).is_ll());
    }
    CHECK_FALSE(default_flow_spec(TrafficModel::Vc, Direction::Dl).is_ll());
    CHECK_FALSE(default_flow_spec(TrafficModel::Background, Direction::Ul).is_ll());
}

TEST_CASE("background traffic is constant bit rate") {
    FlowState f = flow_for(TrafficModel::Background, Direction::Dl);
    for (int i = 0; i < 10; ++i) {
        const auto a = f.next_arrival();
        CHECK(a.size_bytes == 200'000);
        CHECK(a.iat_ns == 8 * kNsPerMs);
    }
}

TEST_CASE("VR downlink is periodic at the frame cadence") {
    FlowState f = flow_for(TrafficModel::Vr, Direction::Dl);
    const auto a = f.next_arrival();
    CHECK(a.iat_ns == us_to_ns(std::int64_t{33'330}));
    CHECK(a.size_bytes > 100'000);
    FlowState ul = flow_for(TrafficModel::Vr, Direction::Ul);
    const auto b = ul.next_arrival();
    CHECK(b.iat_ns == us_to_ns(std::int64_t{10'810}));
    CHECK(b.size_bytes == 190);
}

TEST_CASE("zero-mean IAT is rejected") {
    FlowSpec s = default_flow_spec(TrafficModel::Rtmg, Direction::Dl);
    s.mean_iat_us = 0.0;
    CHECK_THROWS_AS(make_flow(s, RngStream(1, 1), RngStream(1, 2)), std::invalid_argument);
    FlowSpec z = default_flow_spec(TrafficModel::Rtmg, Direction::Dl);
    z.mean_pkt_bytes = 0.0;
    CHECK_THROWS_AS(make_flow(z, RngStream(1, 1), RngStream(1, 2)), std::invalid_argument);
}

TEST_CASE("empirical means converge to the configured table within 2%") {
    struct Case {
        TrafficModel m;
        Direction d;
        double bytes;
        double iat_us;
    };
    const Case cases[] = {
        {TrafficModel::Rtmg, Direction::Dl, 80.0, 23'060.0},
        {TrafficModel::Rtmg, Direction::Ul, 50.0, 30'490.0},
        {TrafficModel::Vr, Direction::Dl, 166'660.0, 33'330.0},
        {TrafficModel::Vr, Direction::Ul, 190.0, 10'810.0},
        {TrafficModel::Vc, Direction::Dl, 7'810.0, 33'330.0},
        {TrafficModel::Background, Direction::Ul, 200'000.0, 8'000.0},
    };
    int stream = 500;
    for (const Case& c : cases) {
        FlowState f = flow_for(c.m, c.d, stream++);
        double sum_bytes = 0.0;
        double sum_iat_us = 0.0;
        const int n = 100'000;
        for (int i = 0; i < n; ++i) {
            const auto a = f.next_arrival();
            sum_bytes += static_cast<double>(a.size_bytes);
            sum_iat_us += ns_to_us(a.iat_ns);
        }
        CHECK(sum_bytes / n == doctest::Approx(c.bytes).epsilon(0.02));
        CHECK(sum_iat_us / n == doctest::Approx(c.iat_us).epsilon(0.02));
    }
}

TEST_CASE("sizes are always at least one octet") {
    FlowSpec s = default_flow_spec(TrafficModel::Rtmg, Direction::Ul);
    s.mean_pkt_bytes = 2.0;
    s.size_dist = {DistKind::TruncNormal, 0.9};
    FlowState f = make_flow(s, RngStream(3, 1), RngStream(3, 2));
    for (int i = 0; i < 10'000; ++i) {
        CHECK(f.next_arrival().size_bytes >= 1);
    }
}

TEST_CASE("offered load arithmetic") {
    CHECK(mean_offered_load_bps(default_flow_spec(TrafficModel::Vr, Direction::Dl)) ==
          doctest::Approx(40.0e6).epsilon(0.001));
    CHECK(mean_offered_load_bps(default_flow_spec(TrafficModel::Rtmg, Direction::Dl)) ==
          doctest::Approx(27.8e3).epsilon(0.005));
    FlowSpec zero = default_flow_spec(TrafficModel::Vc, Direction::Dl);
    zero.mean_pkt_bytes = 0.0;
    CHECK(mean_offered_load_bps(zero) == 0.0);
}

TEST_CASE("fragmentation conserves offered octets") {
    RngStream r(9, 9);
    for (int i = 0; i < 500; ++i) {
        const std::int64_t size = 1 + static_cast<std::int64_t>(r.uniform_below(400'000));
        const auto frags = fragment_packet(size);
        std::int64_t total = 0;
        for (std::int32_t f : frags) {
            CHECK(f >= 1);
            CHECK(f <= kMaxMpduPayloadBytes);
            total += f;
        }
        CHECK(total == size);
    }
    // A VR frame spans many MPDUs.
    CHECK(fragment_packet(166'660).size() == 15);
}
