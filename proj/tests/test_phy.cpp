#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "cotdma/phy.hpp"
#include "cotdma/rng.hpp"

using namespace cotdma;

namespace {

// Independent rate-formula oracle, written against the published numerology
// only: MCS 7 / 80 MHz / 1 SS carries 4900 data bits per 13.6 us symbol
// (GI 800 ns); duration = 44 us preamble + ceil(bits / 4900) symbols.
TimeNs oracle_data_airtime_ns(std::int64_t payload_bytes) {
    const std::int64_t bits = payload_bytes * 8;
    const std::int64_t symbols = (bits + 4900 - 1) / 4900;
    return 44'000 + symbols * 13'600;
}

} // namespace

TEST_CASE("zero payload gives a preamble-only PPDU") {
    PhyConfig c;
    CHECK(ppdu_airtime_ns(0, 7, 1, c) == 44'000);
}

TEST_CASE("full aggregate matches the independent rate oracle") {
    PhyConfig c;
    // 64 MPDUs x 1500 B at MCS7/80 MHz/1SS.
    CHECK(ppdu_airtime_ns(64 * 1500, 7, 64, c) == oracle_data_airtime_ns(64 * 1500));
    CHECK(ppdu_airtime_ns(64 * 1500, 7, 64, c) == 2'179'200);
}

TEST_CASE("airtime equals the oracle on 1000 random aggregates") {
    PhyConfig c;
    RngStream r(2024, 1);
    for (int i = 0; i < 1000; ++i) {
        const int n_mpdus = 1 + static_cast<int>(r.uniform_below(64));
        const std::int64_t payload = static_cast<std::int64_t>(r.uniform_below(3000)) * n_mpdus;
        const TimeNs expected = oracle_data_airtime_ns(payload);
        if (expected > c.max_ppdu_ns) {
            CHECK_THROWS_AS(ppdu_airtime_ns(payload, 7, n_mpdus, c), OversizeError);
        } else {
            REQUIRE(ppdu_airtime_ns(payload, 7, n_mpdus, c) == expected);
        }
    }
}

TEST_CASE("PPDU duration cap") {
    PhyConfig c;
    // 400 symbols is exactly the 5.484 ms cap; one more byte exceeds it.
    CHECK(ppdu_airtime_ns(245'000, 7, 22, c) == c.max_ppdu_ns);
    CHECK_THROWS_AS(ppdu_airtime_ns(245'001, 7, 22, c), OversizeError);
    CHECK_THROWS_AS(ppdu_airtime_ns(100, 7, 65, c), std::invalid_argument);
    CHECK_THROWS_AS(ppdu_airtime_ns(-1, 7, 1, c), std::invalid_argument);
}

TEST_CASE("242-tone RU carries 1210 bits per symbol at MCS7") {
    PhyConfig c;
    CHECK(phy::bits_per_symbol_ru(c) == 1210);
    // 50 B fits one symbol on an RU.
    CHECK(ru_airtime_ns(50, c) == 44'000 + 13'600);
}

TEST_CASE("control frame airtimes at the legacy rate") {
    PhyConfig c;
    CHECK(ctrl_airtime_ns(kIcfBytes, c) == 68'000);
    CHECK(ctrl_airtime_ns(kIcrBytes, c) == 40'000);
    CHECK(ctrl_airtime_ns(kCtsBytes, c) == 40'000);
    CHECK(ctrl_airtime_ns(kCfEndBytes, c) == 48'000);
    CHECK(ctrl_airtime_ns(kBlockAckBytes, c) == 64'000);
    CHECK(trigger_airtime_ns(1, c) == 68'000);
    CHECK(trigger_airtime_ns(4, c) == 92'000);
}

TEST_CASE("path loss breakpoint model") {
    // d = 1 m, no walls: just the constant term.
    CHECK(path_loss_db(1.0, 0) == doctest::Approx(40.05));
    CHECK(path_loss_db(10.0, 0) == doctest::Approx(60.05));
    // Hand-evaluated: 40.05 + 20 log10(10) + 35 log10(2).
    CHECK(path_loss_db(20.0, 0) == doctest::Approx(40.05 + 20.0 + 35.0 * std::log10(2.0)));
}

TEST_CASE("path loss is monotone in distance and walls") {
    CHECK(path_loss_db(20.0, 0) > path_loss_db(10.0, 0));
    RngStream r(5, 5);
    for (int i = 0; i < 200; ++i) {
        const double d = 0.5 + r.uniform01() * 80.0;
        CHECK(path_loss_db(d * 1.5, 0) >= path_loss_db(d, 0));
        CHECK(path_loss_db(d, 3) >= path_loss_db(d, 1));
    }
}

TEST_CASE("wall term is linear") {
    const double base = path_loss_db(17.0, 0);
    CHECK(path_loss_db(17.0, 2) - base == doctest::Approx(14.0));
}

TEST_CASE("zero distance is a domain error") {
    CHECK_THROWS_AS(path_loss_db(0.0, 0), std::domain_error);
    CHECK_THROWS_AS(path_loss_db(-3.0, 0), std::domain_error);
}
