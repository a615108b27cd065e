#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "raregan/losses.hpp"
#include "raregan/nn.hpp"

namespace raregan {

// A mixture p = alpha p_rare + (1 - alpha) p_common on a finite support
// {0, ..., n-1}, with supp(p_rare) and supp(p_common) disjoint.
struct DiscreteMixture {
    std::vector<double> p_rare;
    std::vector<double> p_common;
    double alpha = 0.0;

    std::size_t support_size() const { return p_rare.size(); }
    bool is_rare_point(std::size_t x) const { return p_rare[x] > 0.0; }
    std::vector<double> mixture() const;
    // Throws InvalidArgument on overlapping supports or malformed distributions.
    void validate() const;
};

// Exact expectations of the weighted losses on (p, p_hat) and of the plain
// losses on the reweighted pair (q, q_hat), for one discriminator.
struct WeightedEquivalence {
    double s = 1.0;
    double alpha_hat = 0.0;
    double js_weighted = 0.0;
    double js_reweighted = 0.0;
    double w_weighted = 0.0;
    double w_reweighted = 0.0;
    std::vector<double> q;
    std::vector<double> q_hat;

    double js_error() const;
    double w_error() const;
};

// `generated` is any distribution p_hat on the support; `discriminator` holds
// D(x) in (0, 1) per point. The weight function uses the true alpha and the
// true rare support; s is the exact normalization.
WeightedEquivalence check_weighted_equivalence(const DiscreteMixture& mixture, const std::vector<double>& generated,
                                               const std::vector<double>& discriminator, double w);

// A conditional generator on the finite support: one distribution under the
// "rare" condition and one under "common".
struct CandidateGenerator {
    std::string name;
    std::vector<double> rare;
    std::vector<double> common;
};

struct CandidateScore {
    double gan_distance = 0.0;           // total variation between generated mixture and p
    double classification = 0.0;         // min over all classifiers of the classification loss
    double objective() const { return gan_distance + classification; }
};

struct BiasedLabelCheck {
    std::vector<CandidateScore> scores;
    std::size_t argmin = 0;
    // Index of the candidate equal to the true (p_rare, p_common).
    std::size_t truth = 0;
    // Objective when the GAN term is computed on the labeled distribution
    // instead of p.
    std::size_t labeled_only_argmin = 0;
    bool argmin_recovers_rare() const;
    double argmin_rare_error = 0.0;  // max |p_hat_rare - p_rare| at the argmin
};

// Candidate family: every pair of distributions on the support whose
// probabilities are multiples of 1/resolution, plus the true pair and a few
// named corruptions (leaking across the class boundary, reweighting inside
// the rare support, and the labeled distribution's own rare/common split).
std::vector<CandidateGenerator> candidate_family(const DiscreteMixture& mixture, const std::vector<double>& labeled, std::size_t resolution);

// Exhaustive evaluation of min_C d(p_hat, p) + L_cls(C, p_hat; p') over the
// candidates, with p' the labeled marginal (labels follow the true classes).
BiasedLabelCheck check_biased_labels(const DiscreteMixture& mixture, const std::vector<double>& labeled,
                                     const std::vector<CandidateGenerator>& candidates);

struct PropositionReport {
    std::size_t weighted_instances = 0;
    double max_js_error = 0.0;
    double max_w_error = 0.0;
    std::size_t biased_instances = 0;
    std::size_t biased_recovered = 0;
    bool ok(double tolerance) const;
};

// Randomized sweep: `weighted_instances` draws of (mixture, p_hat, D, w) with
// support up to `max_support`, and `biased_instances` draws of a mixture on
// 4..8 points with a random labeled distribution, each checked exhaustively.
PropositionReport verify_propositions(std::size_t weighted_instances, std::size_t max_support, std::size_t biased_instances, Rng& rng);

// Random mixture on `support` points with `rare_points` rare points.
DiscreteMixture random_mixture(std::size_t support, std::size_t rare_points, Rng& rng);

}  // namespace raregan
