#include <doctest.h>

#include <set>
#include <sstream>
#include <thread>

#include "raregan/errors.hpp"
#include "raregan/oracle.hpp"

using namespace raregan;

namespace {

std::shared_ptr<const ScoreFunction> toy_amp() { return std::make_shared<SyntheticAmplifier>(toy_schema(12), 7, 20.0); }

Packet toy_packet(std::uint32_t gate_bits, std::vector<std::uint32_t> tail) {
    Packet p;
    p.values.assign(7, gate_bits);
    p.values.insert(p.values.end(), tail.begin(), tail.end());
    return p;
}

}  // namespace

TEST_CASE("classification threshold is inclusive") {
    CHECK(classify(10.0, 10.0) == Label::rare);
    CHECK(classify(9.999, 10.0) == Label::common);
    CHECK(label_from_string(to_string(Label::rare)) == Label::rare);
}

TEST_CASE("synthetic amplifier scores") {
    const auto amp = toy_amp();
    Packet closed = toy_packet(1, {1, 1, 1, 1, 1});
    closed.values[3] = 0;
    CHECK(amp->score(closed) == 1.0);
    CHECK(amp->score(toy_packet(1, {0, 0, 0, 0, 0})) == 21.0);
    CHECK(amp->score(toy_packet(1, {1, 1, 1, 1, 1})) == 41.0);
    CHECK(amp->score(toy_packet(1, {1, 0, 1, 0, 0})) == doctest::Approx(29.0));
    CHECK_THROWS(amp->score(Packet{{1, 1}}));
    CHECK_THROWS_AS(SyntheticAmplifier(toy_schema(3), 4, 20.0), InvalidArgument);
}

TEST_CASE("ground truth by enumeration") {
    const auto amp = toy_amp();
    const GroundTruth gt = enumerate_ground_truth(*amp, 10.0);
    CHECK(gt.space_size == 4096);
    CHECK(gt.rare.size() == 32);
    CHECK(gt.alpha == 0.0078125);
    CHECK(std::is_sorted(gt.rare_scores.begin(), gt.rare_scores.end()));
    CHECK(gt.rare_scores.front() == 21.0);
    CHECK(gt.rare_scores.back() == 41.0);
    CHECK(enumerate_ground_truth(*amp, 100.0).alpha == 0.0);
    CHECK(enumerate_ground_truth(*amp, 1.0).alpha == 1.0);
    CHECK_THROWS_AS(enumerate_ground_truth(SyntheticAmplifier(dns_schema(), 7, 20.0), 10.0), SpaceTooLarge);
    CHECK_THROWS_AS(enumerate_ground_truth(*amp, 10.0, 100), SpaceTooLarge);
}

TEST_CASE("enumeration agrees with the oracle on every packet") {
    const auto amp = std::make_shared<SyntheticAmplifier>(toy_schema(8), 3, 20.0);
    const GroundTruth gt = enumerate_ground_truth(*amp, 25.0);
    const std::set<Packet> rare(gt.rare.begin(), gt.rare.end());
    BudgetedOracle oracle(amp, 25.0, 256);
    for (std::uint64_t r = 0; r < 256; ++r) {
        const Packet p = packet_from_rank(amp->schema(), r);
        CHECK((oracle.label(p).label == Label::rare) == rare.contains(p));
    }
    CHECK(oracle.spent() == 256);
}

TEST_CASE("budget is charged once per distinct packet") {
    BudgetedOracle oracle(toy_amp(), 10.0, 10);
    std::ostringstream transcript;
    oracle.set_transcript(&transcript);
    for (std::uint64_t r = 0; r < 10; ++r) oracle.label(packet_from_rank(toy_schema(12), r));
    CHECK(oracle.spent() == 10);
    CHECK(oracle.remaining() == 0);
    CHECK_THROWS_AS(oracle.label(packet_from_rank(toy_schema(12), 10)), BudgetExhausted);
    const LabelResult again = oracle.label(packet_from_rank(toy_schema(12), 3));
    CHECK(oracle.spent() == 10);
    CHECK(again.label == Label::common);
    CHECK(oracle.cached(packet_from_rank(toy_schema(12), 3)).has_value());
    CHECK_FALSE(oracle.cached(packet_from_rank(toy_schema(12), 11)).has_value());

    std::istringstream in(transcript.str());
    const auto entries = read_transcript(in, toy_schema(12));
    REQUIRE(entries.size() == 11);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(entries[i].spent_after == i + 1);
        CHECK_FALSE(entries[i].cached);
    }
    CHECK(entries[10].cached);
    CHECK(entries[10].spent_after == 10);
}

TEST_CASE("cached labels are consistent with the threshold") {
    const auto amp = toy_amp();
    BudgetedOracle oracle(amp, 29.0, 100);
    Rng rng(5);
    for (int i = 0; i < 300 && oracle.remaining() > 0; ++i) {
        Packet p = sample_uniform(amp->schema(), rng);
        if (i % 3 == 0) p = toy_packet(1, {static_cast<std::uint32_t>(i % 2), 1, 0, 1, 0});
        const LabelResult r = oracle.label(p);
        CHECK((r.label == Label::rare) == (r.score >= 29.0));
    }
}

TEST_CASE("concurrent labeling charges each distinct packet once") {
    const auto amp = toy_amp();
    BudgetedOracle oracle(amp, 10.0, 300);
    std::ostringstream transcript;
    oracle.set_transcript(&transcript);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&] {
            // Every thread asks for the same 300 packets.
            for (std::uint64_t r = 0; r < 300; ++r) oracle.label(packet_from_rank(amp->schema(), r));
        });
    for (auto& t : threads) t.join();
    CHECK(oracle.spent() == 300);
    std::istringstream in(transcript.str());
    const auto entries = read_transcript(in, amp->schema());
    CHECK(entries.size() == 1200);
    std::uint64_t last = 0;
    std::size_t charged = 0;
    for (const auto& e : entries) {
        CHECK(e.spent_after >= last);
        if (!e.cached) CHECK(e.spent_after == last + 1);
        charged += e.cached ? 0 : 1;
        last = e.spent_after;
    }
    CHECK(charged == 300);
}

TEST_CASE("synthetic latency target") {
    const PacketSchema s = toy_schema(10);
    const SyntheticLatency a(s, 3), b(s, 3);
    Rng rng(1);
    std::set<double> seen;
    for (int i = 0; i < 2000; ++i) {
        const Packet p = sample_uniform(s, rng);
        CHECK(a.score(p) == b.score(p));
        CHECK(a.score(p) >= 0.010);
        seen.insert(a.score(p));
    }
    CHECK(seen.size() > 3);
    // The deepest plateau is a single packet.
    const GroundTruth gt = enumerate_ground_truth(a, 0.010 + 0.005 * 9.5);
    CHECK(gt.rare.size() == 1);
    CHECK(a.matched_depth(gt.rare[0]) == 10);
    CHECK(make_target("synthetic-latency", s, 0, 0, 3)->score(gt.rare[0]) == a.score(gt.rare[0]));
    CHECK_THROWS(make_target("nope", s, 7, 20, 1));
}
