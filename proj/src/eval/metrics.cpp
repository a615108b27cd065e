#include "raregan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "raregan/errors.hpp"

namespace raregan {

EmpiricalScoreDist::EmpiricalScoreDist(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_)
        if (!std::isfinite(v)) throw InvalidArgument("EmpiricalScoreDist: non-finite score");
    std::sort(values_.begin(), values_.end());
}

double wasserstein1(const EmpiricalScoreDist& a, const EmpiricalScoreDist& b) {
    if (a.empty() || b.empty()) throw InvalidArgument("wasserstein1: empty distribution");
    const auto& x = a.values();
    const auto& y = b.values();
    const double na = static_cast<double>(x.size());
    const double nb = static_cast<double>(y.size());
    // Sweep the merged breakpoints; between consecutive points both CDFs are constant.
    std::size_t i = 0, j = 0;
    double prev = std::min(x.front(), y.front());
    double total = 0.0;
    while (i < x.size() || j < y.size()) {
        const double next = j == y.size() || (i < x.size() && x[i] <= y[j]) ? x[i] : y[j];
        total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
        while (i < x.size() && x[i] == next) ++i;
        while (j < y.size() && y[j] == next) ++j;
        prev = next;
    }
    return total;
}

double diversity(std::span<const Packet> samples, const ScoreFunction& score, double threshold) {
    if (samples.empty()) throw InvalidArgument("diversity: no samples");
    std::unordered_set<Packet, PacketHash> rare;
    for (const Packet& p : samples)
        if (score.score(p) >= threshold) rare.insert(p);
    return static_cast<double>(rare.size()) / static_cast<double>(samples.size());
}

double EvalReport::rare_fraction() const {
    return n_generated == 0 ? 0.0 : static_cast<double>(n_rare) / static_cast<double>(n_generated);
}

EvalReport evaluate_samples(std::span<const Packet> samples, const ScoreFunction& score, double threshold, const EmpiricalScoreDist& truth) {
    if (samples.empty()) throw InvalidArgument("evaluate_samples: no samples");
    EvalReport report;
    report.n_generated = samples.size();
    std::vector<double> rare_scores;
    std::unordered_set<Packet, PacketHash> distinct;
    for (const Packet& p : samples) {
        const double s = score.score(p);
        if (s < threshold) continue;
        rare_scores.push_back(s);
        distinct.insert(p);
    }
    report.n_rare = rare_scores.size();
    report.n_distinct_rare = distinct.size();
    report.diversity = static_cast<double>(distinct.size()) / static_cast<double>(samples.size());
    if (rare_scores.empty()) {
        report.no_rare = true;
        report.fidelity = std::numeric_limits<double>::infinity();
    } else {
        report.fidelity = wasserstein1(EmpiricalScoreDist(std::move(rare_scores)), truth);
    }
    return report;
}

EmpiricalScoreDist ground_truth_scores(const ScoreFunction& score, double threshold, std::uint64_t cap, std::size_t samples, Rng& rng) {
    const auto size = search_space_size(score.schema());
    if (size <= cap) {
        GroundTruth gt = enumerate_ground_truth(score, threshold, cap);
        if (gt.rare_scores.empty()) throw InvalidArgument("ground truth: no rare packet in the search space");
        return EmpiricalScoreDist(std::move(gt.rare_scores));
    }
    std::vector<double> rare;
    for (std::size_t i = 0; i < samples; ++i) {
        const double s = score.score(sample_uniform(score.schema(), rng));
        if (s >= threshold) rare.push_back(s);
    }
    if (rare.empty()) throw InvalidArgument("ground truth: no rare packet among " + std::to_string(samples) + " uniform samples");
    return EmpiricalScoreDist(std::move(rare));
}

}  // namespace raregan
