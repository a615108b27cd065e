#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "raregan/oracle.hpp"
#include "raregan/schema.hpp"

namespace raregan {

// Multiset of scores, kept sorted ascending.
class EmpiricalScoreDist {
public:
    EmpiricalScoreDist() = default;
    explicit EmpiricalScoreDist(std::vector<double> values);

    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    double min() const { return values_.front(); }
    double max() const { return values_.back(); }

private:
    std::vector<double> values_;
};

// Integral of |F_a - F_b| over the real line. Throws InvalidArgument if either
// side is empty.
double wasserstein1(const EmpiricalScoreDist& a, const EmpiricalScoreDist& b);

// Distinct packets with score >= T, divided by the number of samples.
double diversity(std::span<const Packet> samples, const ScoreFunction& score, double threshold);

struct EvalReport {
    double fidelity = 0.0;
    // Set when no generated sample was rare; fidelity is then +inf.
    bool no_rare = false;
    double diversity = 0.0;
    std::size_t n_generated = 0;
    std::size_t n_rare = 0;
    std::size_t n_distinct_rare = 0;
    std::uint64_t seed = 0;

    double rare_fraction() const;
};

// Scores every sample once (no budget), compares the rare ones against h_r.
EvalReport evaluate_samples(std::span<const Packet> samples, const ScoreFunction& score, double threshold, const EmpiricalScoreDist& truth);

// h_r by enumeration when the space fits `cap`, otherwise from rare hits among
// `samples` uniform draws. Throws InvalidArgument when no rare packet is found.
EmpiricalScoreDist ground_truth_scores(const ScoreFunction& score, double threshold, std::uint64_t cap, std::size_t samples, Rng& rng);

}  // namespace raregan
