#include <doctest.h>

#include <vector>

#include "cotdma/event_queue.hpp"
#include "cotdma/medium.hpp"

using namespace cotdma;

namespace {

struct Probe : MediumListener {
    std::vector<std::pair<TimeNs, bool>> transitions;
    std::vector<RxOutcome> rx;
    void on_channel_busy(TimeNs t) override { transitions.emplace_back(t, true); }
    void on_channel_idle(TimeNs t) override { transitions.emplace_back(t, false); }
    void on_ppdu_received(const Ppdu&, const RxOutcome& o) override { rx.push_back(o); }
};

Ppdu make_tx(int from, int to, TimeNs airtime) {
    Ppdu p;
    p.tx_device = from;
    p.type = FrameType::Data;
    if (to >= 0) {
        p.recipients = {to};
        Mpdu m;
        m.dst = to;
        m.src = from;
        m.size_bytes = 100;
        p.mpdus.push_back(m);
    }
    p.airtime_ns = airtime;
    return p;
}

} // namespace

TEST_CASE("channel state follows PD threshold and clears at PPDU end") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int a = med.add_device({0, 0});
    const int b = med.add_device({20, 0}); // -49.6 dBm at B: above PD
    Probe pb;
    med.set_listener(b, &pb);

    CHECK_FALSE(med.is_busy(b));
    q.schedule(1'000, [&] { med.start_ppdu(make_tx(a, -1, 100'000)); });
    q.run_until(500'000);
    REQUIRE(pb.transitions.size() == 2);
    CHECK(pb.transitions[0] == std::pair<TimeNs, bool>{1'000, true});
    CHECK(pb.transitions[1] == std::pair<TimeNs, bool>{101'000, false});
    CHECK_FALSE(med.is_busy(b));
}

TEST_CASE("a transmitter far below both thresholds leaves the channel idle") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int a = med.add_device({0, 0});
    const int b = med.add_device({250, 0}); // ~ -106 dBm at B
    Probe pb;
    med.set_listener(b, &pb);
    q.schedule(0, [&] { med.start_ppdu(make_tx(a, -1, 50'000)); });
    q.run_until(100'000);
    CHECK(pb.transitions.empty());
}

TEST_CASE("carrier sense is reciprocal on a symmetric pair") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int a = med.add_device({0, 0});
    const int b = med.add_device({35, 0});
    bool a_sensed_b = false;
    bool b_sensed_a = false;
    q.schedule(0, [&] { med.start_ppdu(make_tx(a, -1, 10'000)); });
    q.schedule(5'000, [&] { b_sensed_a = med.is_busy(b); });
    q.schedule(20'000, [&] { med.start_ppdu(make_tx(b, -1, 10'000)); });
    q.schedule(25'000, [&] { a_sensed_b = med.is_busy(a); });
    q.run_until(100'000);
    CHECK(a_sensed_b == b_sensed_a);
}

TEST_CASE("busy-period bookkeeping over a scripted 3-transmission scenario") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int a = med.add_device({0, 0});
    const int b = med.add_device({10, 0});
    const int obs = med.add_device({5, 5});
    med.record_busy_intervals(obs, true);

    // [0, 100us] from a, [50us, 150us] from b, [300us, 400us] from a:
    // the busy union at the observer is [0, 150us] + [300us, 400us].
    q.schedule(0, [&] { med.start_ppdu(make_tx(a, -1, 100'000)); });
    q.schedule(50'000, [&] { med.start_ppdu(make_tx(b, -1, 100'000)); });
    q.schedule(300'000, [&] { med.start_ppdu(make_tx(a, -1, 100'000)); });
    q.run_until(1'000'000);

    CHECK(med.total_busy_ns(obs) == 250'000);
    const auto& iv = med.busy_intervals(obs);
    REQUIRE(iv.size() == 2);
    CHECK(iv[0] == std::pair<TimeNs, TimeNs>{0, 150'000});
    CHECK(iv[1] == std::pair<TimeNs, TimeNs>{300'000, 400'000});
}

TEST_CASE("single clean transmission is delivered") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int a = med.add_device({0, 0});
    const int b = med.add_device({5, 0});
    Probe pb;
    med.set_listener(b, &pb);
    q.schedule(0, [&] { med.start_ppdu(make_tx(a, b, 60'000)); });
    q.run_until(100'000);
    REQUIRE(pb.rx.size() == 1);
    CHECK(pb.rx[0].delivered);
}

TEST_CASE("two same-power overlapping PPDUs collide at the receiver") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int r = med.add_device({0, 0});
    const int t1 = med.add_device({10, 0});
    const int t2 = med.add_device({-10, 0});
    Probe pr;
    med.set_listener(r, &pr);
    q.schedule(0, [&] { med.start_ppdu(make_tx(t1, r, 60'000)); });
    q.schedule(0, [&] { med.start_ppdu(make_tx(t2, r, 60'000)); });
    q.run_until(100'000);
    REQUIRE(pr.rx.size() == 2);
    CHECK_FALSE(pr.rx[0].delivered);
    CHECK_FALSE(pr.rx[1].delivered);
}

TEST_CASE("a frame leading the interferer by the capture margin survives") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int r = med.add_device({0, 0});
    const int near = med.add_device({3, 0});  // -28.6 dBm at r
    const int far = med.add_device({40, 0});  // -60.1 dBm at r: 31.5 dB down
    Probe pr;
    med.set_listener(r, &pr);
    q.schedule(0, [&] { med.start_ppdu(make_tx(near, r, 60'000)); });
    q.schedule(0, [&] { med.start_ppdu(make_tx(far, r, 60'000)); });
    q.run_until(100'000);
    REQUIRE(pr.rx.size() == 2);
    int delivered = 0;
    for (const RxOutcome& o : pr.rx) {
        delivered += o.delivered ? 1 : 0;
    }
    CHECK(delivered == 1);
}

TEST_CASE("partial overlap still counts as interference") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int r = med.add_device({0, 0});
    const int t1 = med.add_device({10, 0});
    const int t2 = med.add_device({-10, 0});
    Probe pr;
    med.set_listener(r, &pr);
    q.schedule(0, [&] { med.start_ppdu(make_tx(t1, r, 60'000)); });
    q.schedule(59'000, [&] { med.start_ppdu(make_tx(t2, r, 60'000)); });
    q.run_until(200'000);
    REQUIRE(pr.rx.size() == 2);
    CHECK_FALSE(pr.rx[0].delivered);
    CHECK_FALSE(pr.rx[1].delivered);
}

TEST_CASE("a recipient that was transmitting cannot receive") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int a = med.add_device({0, 0});
    const int b = med.add_device({5, 0});
    Probe pb;
    med.set_listener(b, &pb);
    q.schedule(0, [&] { med.start_ppdu(make_tx(b, -1, 30'000)); });
    q.schedule(10'000, [&] { med.start_ppdu(make_tx(a, b, 60'000)); });
    q.run_until(200'000);
    REQUIRE(pb.rx.size() == 1);
    CHECK_FALSE(pb.rx[0].delivered);
}

TEST_CASE("same MU group members do not interfere") {
    EventQueue q;
    PhyConfig phy;
    Medium med(q, phy);
    const int ap = med.add_device({0, 0});
    const int s1 = med.add_device({4, 0});
    const int s2 = med.add_device({-4, 0});
    Probe pap;
    med.set_listener(ap, &pap);
    auto tx = [&](int from) {
        Ppdu p = make_tx(from, ap, 60'000);
        p.mu_group = 9;
        med.start_ppdu(std::move(p));
    };
    q.schedule(0, [&] { tx(s1); });
    q.schedule(0, [&] { tx(s2); });
    q.run_until(100'000);
    REQUIRE(pap.rx.size() == 2);
    CHECK(pap.rx[0].delivered);
    CHECK(pap.rx[1].delivered);
}
