#include "raregan/oracle.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "raregan/errors.hpp"

namespace raregan {

std::string_view to_string(Label label) { return label == Label::rare ? "rare" : "common"; }

Label label_from_string(std::string_view text) {
    if (text == "rare") return Label::rare;
    if (text == "common") return Label::common;
    throw FormatError("unknown label '" + std::string(text) + "'");
}

SyntheticAmplifier::SyntheticAmplifier(PacketSchema schema, std::size_t gate_fields, double gain)
    : schema_(std::move(schema)), gate_fields_(gate_fields), gain_(gain) {
    if (gate_fields_ > schema_.field_count()) throw InvalidArgument("SyntheticAmplifier: gate longer than the schema");
    if (!(gain_ >= 0.0)) throw InvalidArgument("SyntheticAmplifier: gain must be non-negative");
}

double SyntheticAmplifier::score(const Packet& packet) const {
    validate(schema_, packet);
    const auto& fields = schema_.fields();
    for (std::size_t i = 0; i < gate_fields_; ++i) {
        if (packet.values[i] != fields[i].cardinality - 1) return 1.0;
    }
    const std::size_t rest = schema_.field_count() - gate_fields_;
    double bonus = 0.0;
    if (rest > 0) {
        for (std::size_t i = gate_fields_; i < schema_.field_count(); ++i)
            bonus += static_cast<double>(packet.values[i]) / static_cast<double>(fields[i].cardinality - 1);
        bonus /= static_cast<double>(rest);
    }
    return 1.0 + gain_ * (1.0 + bonus);
}

std::string SyntheticAmplifier::describe() const {
    return "synthetic-amp(gate=" + std::to_string(gate_fields_) + ", gain=" + std::to_string(gain_) + ")";
}

SyntheticLatency::SyntheticLatency(PacketSchema schema, std::uint64_t seed, double base, double per_level, double tail)
    : schema_(std::move(schema)), base_(base), per_level_(per_level), tail_(tail) {
    Rng rng(seed);
    order_.resize(schema_.field_count());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng);
    target_.resize(schema_.field_count());
    for (std::size_t i = 0; i < schema_.field_count(); ++i) {
        std::uniform_int_distribution<std::uint32_t> dist(0, static_cast<std::uint32_t>(schema_.fields()[i].cardinality - 1));
        target_[i] = dist(rng);
    }
}

std::size_t SyntheticLatency::matched_depth(const Packet& packet) const {
    validate(schema_, packet);
    std::size_t depth = 0;
    while (depth < order_.size() && packet.values[order_[depth]] == target_[order_[depth]]) ++depth;
    return depth;
}

double SyntheticLatency::score(const Packet& packet) const {
    const std::size_t depth = matched_depth(packet);
    constexpr std::size_t kTailFields = 4;
    std::size_t extra = 0;
    for (std::size_t i = depth + 1; i < std::min(order_.size(), depth + 1 + kTailFields); ++i)
        extra += packet.values[order_[i]] != 0 ? 1 : 0;
    return base_ + per_level_ * static_cast<double>(depth) + tail_ * static_cast<double>(extra);
}

std::string SyntheticLatency::describe() const { return "synthetic-latency(fields=" + std::to_string(order_.size()) + ")"; }

BudgetedOracle::BudgetedOracle(std::shared_ptr<const ScoreFunction> score, double threshold, std::uint64_t budget)
    : score_(std::move(score)), threshold_(threshold), budget_(budget) {
    if (!score_) throw InvalidArgument("BudgetedOracle: null score function");
}

LabelResult BudgetedOracle::label(const Packet& packet) {
    std::lock_guard lock(mutex_);
    TranscriptEntry entry;
    if (auto it = cache_.find(packet); it != cache_.end()) {
        entry = {packet, it->second.score, it->second.label, spent_, true};
    } else {
        if (spent_ >= budget_)
            throw BudgetExhausted("labeling budget of " + std::to_string(budget_) + " exhausted");
        const double s = score_->score(packet);
        const LabelResult result{s, classify(s, threshold_)};
        cache_.emplace(packet, result);
        ++spent_;
        entry = {packet, result.score, result.label, spent_, false};
    }
    if (transcript_) *transcript_ << format_transcript_entry(entry) << '\n';
    return {entry.score, entry.label};
}

std::optional<LabelResult> BudgetedOracle::cached(const Packet& packet) const {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(packet); it != cache_.end()) return it->second;
    return std::nullopt;
}

std::uint64_t BudgetedOracle::spent() const {
    std::lock_guard lock(mutex_);
    return spent_;
}

void BudgetedOracle::set_transcript(std::ostream* out) {
    std::lock_guard lock(mutex_);
    transcript_ = out;
}

std::string format_transcript_entry(const TranscriptEntry& e) {
    char score[32];
    std::snprintf(score, sizeof score, "%.17g", e.score);
    std::ostringstream os;
    os << format_packet(e.packet) << '\t' << score << '\t' << to_string(e.label) << '\t' << e.spent_after << '\t' << (e.cached ? 1 : 0);
    return os.str();
}

std::vector<TranscriptEntry> read_transcript(std::istream& in, const PacketSchema& schema) {
    std::vector<TranscriptEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::istringstream ls(line);
        for (std::string col; std::getline(ls, col, '\t');) cols.push_back(col);
        if (cols.size() != 5) throw FormatError("transcript: expected 5 columns, got " + std::to_string(cols.size()));
        TranscriptEntry e;
        e.packet = parse_packet(schema, cols[0]);
        e.score = std::stod(cols[1]);
        e.label = label_from_string(cols[2]);
        e.spent_after = std::stoull(cols[3]);
        e.cached = cols[4] == "1";
        out.push_back(std::move(e));
    }
    return out;
}

GroundTruth enumerate_ground_truth(const ScoreFunction& score, double threshold, std::uint64_t cap) {
    const PacketSchema& schema = score.schema();
    const auto size = search_space_size(schema);
    if (size > cap) throw SpaceTooLarge("search space of " + size.str() + " packets exceeds the enumeration cap of " + std::to_string(cap));
    GroundTruth gt;
    gt.space_size = size.convert_to<std::uint64_t>();
    Packet p;
    p.values.assign(schema.field_count(), 0);
    for (std::uint64_t n = 0; n < gt.space_size; ++n) {
        const double s = score.score(p);
        if (s >= threshold) {
            gt.rare.push_back(p);
            gt.rare_scores.push_back(s);
        }
        // Mixed-radix increment, last field fastest.
        for (std::size_t i = schema.field_count(); i-- > 0;) {
            if (++p.values[i] < schema.fields()[i].cardinality) break;
            p.values[i] = 0;
        }
    }
    std::sort(gt.rare_scores.begin(), gt.rare_scores.end());
    gt.alpha = static_cast<double>(gt.rare.size()) / static_cast<double>(gt.space_size);
    return gt;
}

std::shared_ptr<const ScoreFunction> make_target(std::string_view name, const PacketSchema& schema, std::size_t gate_fields, double gain,
                                                 std::uint64_t seed) {
    if (name == "synthetic-amp") return std::make_shared<SyntheticAmplifier>(schema, gate_fields, gain);
    if (name == "synthetic-latency") return std::make_shared<SyntheticLatency>(schema, seed);
    throw InvalidArgument("unknown target '" + std::string(name) + "'");
}

}  // namespace raregan
