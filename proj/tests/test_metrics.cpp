#include <doctest.h>

#include <algorithm>
#include <vector>

#include "cotdma/metrics.hpp"
#include "cotdma/rng.hpp"

using namespace cotdma;

namespace {

// Sort-based percentile oracle.
double oracle_percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const std::size_t rank =
        std::min<std::size_t>(v.size(),
                              static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))));
    return v[std::max<std::size_t>(rank, 1) - 1];
}

// Two-pass variance oracle (population).
double oracle_jitter(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

} // namespace

TEST_CASE("nearest-rank percentile on a uniform grid") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) {
        v.push_back(i);
    }
    CHECK(percentile(v, 0.95) == 95.0);
    CHECK(percentile(v, 0.50) == 50.0);
    CHECK(percentile(v, 1.0) == 100.0);
}

TEST_CASE("percentile of a single sample is that sample") {
    CHECK(percentile({7.0}, 0.95) == 7.0);
    CHECK(percentile({7.0}, 0.01) == 7.0);
}

TEST_CASE("percentile rejects empty input and bad p") {
    CHECK_THROWS_AS(percentile({}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(percentile({1.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(percentile({1.0}, 1.5), std::invalid_argument);
}

TEST_CASE("percentile matches the sort oracle on random samples") {
    RngStream r(31, 7);
    std::vector<double> v;
    for (int i = 0; i < 10'000; ++i) {
        v.push_back(r.uniform01() * 1e6);
    }
    for (double p : {0.05, 0.5, 0.9, 0.95, 0.99}) {
        REQUIRE(percentile(v, p) == oracle_percentile(v, p));
    }
}

TEST_CASE("percentile monotonicity") {
    RngStream r(32, 8);
    std::vector<double> v;
    for (int i = 0; i < 1000; ++i) {
        v.push_back(r.uniform01());
    }
    const double p5 = percentile(v, 0.05);
    const double p50 = percentile(v, 0.5);
    const double p95 = percentile(v, 0.95);
    CHECK(p95 >= p50);
    CHECK(p50 >= p5);
}

TEST_CASE("jitter basics") {
    CHECK(jitter({3.0, 3.0, 3.0}) == 0.0);
    CHECK(jitter({0.0, 2.0}) == 1.0);
    CHECK_THROWS_AS(jitter({1.0}), std::invalid_argument);
}

TEST_CASE("jitter matches the two-pass oracle") {
    RngStream r(33, 9);
    std::vector<double> v;
    for (int i = 0; i < 10'000; ++i) {
        v.push_back(r.normal(500.0, 120.0));
    }
    CHECK(jitter(v) == doctest::Approx(oracle_jitter(v)).epsilon(1e-9));
}

TEST_CASE("throughput arithmetic") {
    CHECK(throughput_bps(0, kNsPerSec) == 0.0);
    // One 200 KB packet in 8 ms is 200 Mbit/s.
    CHECK(throughput_bps(200'000, 8 * kNsPerMs) == doctest::Approx(200.0e6));
    CHECK_THROWS_AS(throughput_bps(1, 0), std::invalid_argument);
}

TEST_CASE("aggregate mean and confidence interval") {
    const CiStat one = mean_ci({5.0});
    CHECK(one.mean == 5.0);
    CHECK(std::isnan(one.ci_low));

    std::vector<double> same(50, 3.5);
    const CiStat s = mean_ci(same);
    CHECK(s.mean == doctest::Approx(3.5));
    CHECK(s.ci_high - s.ci_low == doctest::Approx(0.0));

    const CiStat t = mean_ci({1.0, 2.0, 3.0});
    CHECK(t.mean == doctest::Approx(2.0));
    // t(0.975, df=2) = 4.303, s = 1, n = 3.
    CHECK(t.ci_high == doctest::Approx(2.0 + 4.303 / std::sqrt(3.0)).epsilon(1e-6));
}

TEST_CASE("collector groups partition samples and dedup duplicates") {
    MetricsCollector c(0, kNsPerSec);
    c.set_flow_labels(0, 0, true);
    c.set_flow_labels(1, 2, false);

    Mpdu a;
    a.flow_id = 0;
    a.packet_seq = 0;
    a.mpdu_seq = 0;
    a.frag_count = 2;
    a.size_bytes = 1000;
    a.arrival_ns = 1000;
    a.is_ll = true;
    a.dir = Direction::Dl;
    a.model = TrafficModel::Rtmg;
    c.on_packet_enqueued(a);
    Mpdu a2 = a;
    a2.frag_index = 1;
    a2.mpdu_seq = 1;

    c.on_mpdu_delivered(a, 5'000);
    // Duplicate delivery of the same fragment counts once.
    c.on_mpdu_delivered(a, 6'000);
    c.on_mpdu_delivered(a2, 9'000);

    Mpdu b;
    b.flow_id = 1;
    b.packet_seq = 0;
    b.mpdu_seq = 0;
    b.frag_count = 1;
    b.size_bytes = 500;
    b.arrival_ns = 2'000;
    b.is_ll = true;
    b.dir = Direction::Ul;
    b.model = TrafficModel::Vr;
    c.on_packet_enqueued(b);
    c.on_mpdu_delivered(b, 4'000);

    CHECK(c.delivered_payload_bytes() == 2'500);
    REQUIRE(c.samples().size() == 2);

    // Latency of the fragmented packet is measured at the last fragment.
    const LatencySample& s0 = c.samples()[0];
    CHECK(s0.latency_ns() == 8'000);
    CHECK(s0.is_co_bss);

    const RunReport r = c.finalize(7);
    CHECK(r.group(Group::CoBssLl).n_samples == 1);
    CHECK(r.group(Group::NonCoBssLl).n_samples == 1);
    CHECK(r.group(Group::All).n_samples == 2);
    // Partition: co/non-co counts sum to the total.
    CHECK(r.group(Group::CoBssLl).n_samples + r.group(Group::NonCoBssLl).n_samples ==
          r.group(Group::All).n_samples);
}

TEST_CASE("dropped MPDUs never contribute latency samples") {
    MetricsCollector c(0, kNsPerSec);
    c.set_flow_labels(0, 0, true);
    Mpdu a;
    a.flow_id = 0;
    a.packet_seq = 0;
    a.mpdu_seq = 0;
    a.frag_count = 2;
    a.size_bytes = 100;
    a.arrival_ns = 0;
    a.is_ll = true;
    c.on_packet_enqueued(a);
    Mpdu a2 = a;
    a2.frag_index = 1;
    a2.mpdu_seq = 1;
    c.on_mpdu_delivered(a, 1'000);
    c.on_mpdu_dropped(a2);
    CHECK(c.samples().empty());
    CHECK(c.loss_total() == 1);
}
