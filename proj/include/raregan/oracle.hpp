#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "raregan/schema.hpp"

namespace raregan {

enum class Label { rare, common };

std::string_view to_string(Label label);
Label label_from_string(std::string_view text);

// Rare iff score >= threshold.
inline Label classify(double score, double threshold) { return score >= threshold ? Label::rare : Label::common; }

// Deterministic stand-in for the black-box system under test.
class ScoreFunction {
public:
    virtual ~ScoreFunction() = default;
    virtual double score(const Packet& packet) const = 0;
    virtual const PacketSchema& schema() const = 0;
    virtual std::string describe() const = 0;
};

// Amplification-style target. The first `gate_fields` fields act as a
// pattern: the gate opens only when each of them takes its last category
// (value 1 for binary fields). With the gate open the score is
//   1 + gain * (1 + mean_i v_i / (card_i - 1))
// over the remaining fields i, which for binary fields is
//   1 + gain * (1 + popcount(rest) / m).
// With the gate closed the score is 1.
class SyntheticAmplifier final : public ScoreFunction {
public:
    SyntheticAmplifier(PacketSchema schema, std::size_t gate_fields, double gain);

    double score(const Packet& packet) const override;
    const PacketSchema& schema() const override { return schema_; }
    std::string describe() const override;

    std::size_t gate_fields() const { return gate_fields_; }
    double gain() const { return gain_; }

private:
    PacketSchema schema_;
    std::size_t gate_fields_;
    double gain_;
};

// Lookup-latency target modelled on a trie walk: fields are visited in a
// seeded order and the walk continues while each field matches a seeded
// target value. Latency grows in plateaus with the matched depth, plus a
// small term counting non-zero fields among the next few visited after the
// walk stops.
class SyntheticLatency final : public ScoreFunction {
public:
    SyntheticLatency(PacketSchema schema, std::uint64_t seed, double base = 0.010, double per_level = 0.005, double tail = 0.001);

    double score(const Packet& packet) const override;
    const PacketSchema& schema() const override { return schema_; }
    std::string describe() const override;

    std::size_t matched_depth(const Packet& packet) const;

private:
    PacketSchema schema_;
    std::vector<std::size_t> order_;
    std::vector<std::uint32_t> target_;
    double base_;
    double per_level_;
    double tail_;
};

struct LabelResult {
    double score = 0.0;
    Label label = Label::common;
};

struct TranscriptEntry {
    Packet packet;
    double score = 0.0;
    Label label = Label::common;
    std::uint64_t spent_after = 0;
    bool cached = false;
};

// Labeling boundary with a hard budget. Each distinct packet is charged once;
// repeated queries are answered from the cache for free. label() is
// serialized by an internal mutex so concurrent callers see a consistent
// spend count.
class BudgetedOracle {
public:
    BudgetedOracle(std::shared_ptr<const ScoreFunction> score, double threshold, std::uint64_t budget);

    BudgetedOracle(const BudgetedOracle&) = delete;
    BudgetedOracle& operator=(const BudgetedOracle&) = delete;

    // Throws BudgetExhausted for a new packet when spent() == budget().
    LabelResult label(const Packet& packet);
    std::optional<LabelResult> cached(const Packet& packet) const;

    std::uint64_t spent() const;
    std::uint64_t budget() const { return budget_; }
    std::uint64_t remaining() const { return budget_ - spent(); }
    double threshold() const { return threshold_; }

    // Unmetered handle to the underlying score function, for evaluation.
    const ScoreFunction& score_function() const { return *score_; }
    std::shared_ptr<const ScoreFunction> shared_score_function() const { return score_; }

    // Every label() call, cache hits included, is appended as one
    // tab-separated line: packet, score, label, spent-after, cached flag.
    void set_transcript(std::ostream* out);

private:
    std::shared_ptr<const ScoreFunction> score_;
    double threshold_;
    std::uint64_t budget_;
    mutable std::mutex mutex_;
    std::uint64_t spent_ = 0;
    std::unordered_map<Packet, LabelResult, PacketHash> cache_;
    std::ostream* transcript_ = nullptr;
};

std::string format_transcript_entry(const TranscriptEntry& entry);
std::vector<TranscriptEntry> read_transcript(std::istream& in, const PacketSchema& schema);

struct GroundTruth {
    std::vector<Packet> rare;
    std::vector<double> rare_scores;  // sorted ascending
    std::uint64_t space_size = 0;
    double alpha = 0.0;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 24;

// Exhaustive scan of the search space; never touches any budget.
// Throws SpaceTooLarge when the space exceeds `cap`.
GroundTruth enumerate_ground_truth(const ScoreFunction& score, double threshold, std::uint64_t cap = kDefaultEnumerationCap);

// Builds a score function by name: "synthetic-amp" or "synthetic-latency".
std::shared_ptr<const ScoreFunction> make_target(std::string_view name, const PacketSchema& schema, std::size_t gate_fields, double gain,
                                                 std::uint64_t seed);

}  // namespace raregan
