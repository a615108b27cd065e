#include "raregan/propositions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "raregan/errors.hpp"

namespace raregan {

namespace {

constexpr double kSumTolerance = 1e-9;

void check_distribution(const std::vector<double>& p, const char* what) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(what) + ": negative or non-finite mass");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) throw InvalidArgument(std::string(what) + ": masses do not sum to 1");
}

std::vector<double> random_simplex(std::size_t n, Rng& rng, double low = 0.05) {
    std::uniform_real_distribution<double> u(low, 1.0);
    std::vector<double> p(n);
    for (double& v : p) v = u(rng);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= s;
    return p;
}

// Every vector of `n` non-negative multiples of 1/resolution summing to one.
void simplex_grid(std::size_t n, std::size_t resolution, std::vector<std::vector<double>>& out) {
    std::vector<std::size_t> counts(n, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
        if (i + 1 == n) {
            counts[i] = left;
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j) p[j] = static_cast<double>(counts[j]) / static_cast<double>(resolution);
            out.push_back(std::move(p));
            return;
        }
        for (std::size_t c = 0; c <= left; ++c) {
            counts[i] = c;
            rec(i + 1, left - c);
        }
    };
    rec(0, resolution);
}

double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return 0.5 * d;
}

}  // namespace

std::vector<double> DiscreteMixture::mixture() const {
    std::vector<double> p(support_size());
    for (std::size_t x = 0; x < p.size(); ++x) p[x] = alpha * p_rare[x] + (1.0 - alpha) * p_common[x];
    return p;
}

void DiscreteMixture::validate() const {
    if (p_rare.size() != p_common.size() || p_rare.empty()) throw InvalidArgument("DiscreteMixture: support sizes differ or are empty");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("DiscreteMixture: alpha must lie in (0, 1)");
    check_distribution(p_rare, "p_rare");
    check_distribution(p_common, "p_common");
    for (std::size_t x = 0; x < p_rare.size(); ++x)
        if (p_rare[x] > 0.0 && p_common[x] > 0.0) throw InvalidArgument("DiscreteMixture: rare and common supports overlap");
}

double WeightedEquivalence::js_error() const { return std::abs(js_weighted - js_reweighted); }
double WeightedEquivalence::w_error() const { return std::abs(w_weighted - w_reweighted); }

WeightedEquivalence check_weighted_equivalence(const DiscreteMixture& mixture, const std::vector<double>& generated,
                                               const std::vector<double>& discriminator, double w) {
    mixture.validate();
    const std::size_t n = mixture.support_size();
    if (generated.size() != n || discriminator.size() != n) throw DimensionMismatch("check_weighted_equivalence: support sizes differ");
    check_distribution(generated, "generated");
    for (double d : discriminator)
        if (!(d > 0.0 && d < 1.0)) throw InvalidArgument("check_weighted_equivalence: D must lie in (0, 1)");
    const double alpha = mixture.alpha;
    const std::vector<double> p = mixture.mixture();

    WeightedEquivalence out;
    for (std::size_t x = 0; x < n; ++x)
        if (mixture.is_rare_point(x)) out.alpha_hat += generated[x];
    const double alpha_hat = out.alpha_hat;
    out.s = exact_normalization(w, alpha, alpha_hat);

    // Left-hand side: weighted losses on (p, p_hat) with W from the weight function.
    for (std::size_t x = 0; x < n; ++x) {
        const Label label = mixture.is_rare_point(x) ? Label::rare : Label::common;
        const double weight = compute_weight(label, w, alpha);
        out.js_weighted += p[x] * weight * std::log(discriminator[x]) + generated[x] * weight * std::log(1.0 - discriminator[x]) / out.s;
        out.w_weighted += p[x] * weight * discriminator[x] - generated[x] * weight * discriminator[x] / out.s;
    }

    // Right-hand side: plain losses on the reweighted mixtures.
    out.q.resize(n);
    out.q_hat.resize(n);
    const double rare_coef = w * alpha_hat / out.s;
    const double common_coef = (1.0 - w * alpha) * (1.0 - alpha_hat) / (out.s * (1.0 - alpha));
    for (std::size_t x = 0; x < n; ++x) {
        out.q[x] = w * alpha * mixture.p_rare[x] + (1.0 - w * alpha) * mixture.p_common[x];
        const bool rare = mixture.is_rare_point(x);
        const double restricted_rare = rare && alpha_hat > 0.0 ? generated[x] / alpha_hat : 0.0;
        const double restricted_common = !rare && alpha_hat < 1.0 ? generated[x] / (1.0 - alpha_hat) : 0.0;
        out.q_hat[x] = rare_coef * restricted_rare + common_coef * restricted_common;
        out.js_reweighted += out.q[x] * std::log(discriminator[x]) + out.q_hat[x] * std::log(1.0 - discriminator[x]);
        out.w_reweighted += out.q[x] * discriminator[x] - out.q_hat[x] * discriminator[x];
    }
    return out;
}

std::vector<CandidateGenerator> candidate_family(const DiscreteMixture& mixture, const std::vector<double>& labeled, std::size_t resolution) {
    mixture.validate();
    const std::size_t n = mixture.support_size();
    std::vector<CandidateGenerator> family;
    family.push_back({"truth", mixture.p_rare, mixture.p_common});

    // Rare condition leaks onto the first common point.
    const auto first_common = static_cast<std::size_t>(
        std::find_if(mixture.p_common.begin(), mixture.p_common.end(), [](double v) { return v > 0.0; }) - mixture.p_common.begin());
    {
        CandidateGenerator c{"rare-leak", mixture.p_rare, mixture.p_common};
        for (double& v : c.rare) v *= 0.8;
        c.rare[first_common] += 0.2;
        family.push_back(std::move(c));
    }
    // Uniform inside the rare support.
    {
        CandidateGenerator c{"rare-reweighted", std::vector<double>(n, 0.0), mixture.p_common};
        std::size_t rare_points = 0;
        for (std::size_t x = 0; x < n; ++x) rare_points += mixture.is_rare_point(x) ? 1 : 0;
        for (std::size_t x = 0; x < n; ++x)
            if (mixture.is_rare_point(x)) c.rare[x] = 1.0 / static_cast<double>(rare_points);
        family.push_back(std::move(c));
    }
    // The labeled distribution's own class-conditional split.
    {
        CandidateGenerator c{"labeled-split", std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
        double rare_mass = 0.0, common_mass = 0.0;
        for (std::size_t x = 0; x < n; ++x) (mixture.is_rare_point(x) ? rare_mass : common_mass) += labeled[x];
        for (std::size_t x = 0; x < n; ++x) {
            if (mixture.is_rare_point(x))
                c.rare[x] = labeled[x] / rare_mass;
            else
                c.common[x] = labeled[x] / common_mass;
        }
        family.push_back(std::move(c));
    }
    // Common condition leaks onto the rare support.
    {
        CandidateGenerator c{"common-leak", mixture.p_rare, mixture.p_common};
        for (double& v : c.common) v *= 0.9;
        for (std::size_t x = 0; x < n; ++x) c.common[x] += 0.1 * mixture.p_rare[x];
        family.push_back(std::move(c));
    }

    if (resolution > 0) {
        std::vector<std::vector<double>> grid;
        simplex_grid(n, resolution, grid);
        for (const auto& r : grid)
            for (const auto& c : grid) family.push_back({"grid", r, c});
    }
    return family;
}

bool BiasedLabelCheck::argmin_recovers_rare() const { return argmin_rare_error == 0.0; }

BiasedLabelCheck check_biased_labels(const DiscreteMixture& mixture, const std::vector<double>& labeled,
                                     const std::vector<CandidateGenerator>& candidates) {
    mixture.validate();
    const std::size_t n = mixture.support_size();
    if (labeled.size() != n) throw DimensionMismatch("check_biased_labels: labeled distribution size differs");
    check_distribution(labeled, "labeled");
    for (double v : labeled)
        if (!(v > 0.0)) throw InvalidArgument("check_biased_labels: labeled distribution must cover the whole support");
    const std::vector<double> p = mixture.mixture();
    const double alpha = mixture.alpha;
    double labeled_alpha = 0.0;
    for (std::size_t x = 0; x < n; ++x)
        if (mixture.is_rare_point(x)) labeled_alpha += labeled[x];

    BiasedLabelCheck out;
    double best = INFINITY, best_labeled_only = INFINITY;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const CandidateGenerator& c = candidates[i];
        CandidateScore score;
        std::vector<double> generated(n), generated_labeled(n);
        for (std::size_t x = 0; x < n; ++x) {
            generated[x] = alpha * c.rare[x] + (1.0 - alpha) * c.common[x];
            generated_labeled[x] = labeled_alpha * c.rare[x] + (1.0 - labeled_alpha) * c.common[x];
        }
        score.gan_distance = total_variation(generated, p);
        // The best classifier at x predicts the normalized joint mass of the
        // labeled and generated samples; its loss is that mass's entropy.
        for (std::size_t x = 0; x < n; ++x) {
            const bool rare = mixture.is_rare_point(x);
            const double m_rare = (rare ? labeled[x] : 0.0) + alpha * c.rare[x];
            const double m_common = (rare ? 0.0 : labeled[x]) + (1.0 - alpha) * c.common[x];
            const double total = m_rare + m_common;
            if (m_rare > 0.0) score.classification -= m_rare * std::log(m_rare / total);
            if (m_common > 0.0) score.classification -= m_common * std::log(m_common / total);
        }
        out.scores.push_back(score);
        if (score.objective() < best) {
            best = score.objective();
            out.argmin = i;
        }
        const double labeled_only = total_variation(generated_labeled, labeled) + score.classification;
        if (labeled_only < best_labeled_only) {
            best_labeled_only = labeled_only;
            out.labeled_only_argmin = i;
        }
        if (c.name == "truth") out.truth = i;
    }
    for (std::size_t x = 0; x < n; ++x)
        out.argmin_rare_error = std::max(out.argmin_rare_error, std::abs(candidates[out.argmin].rare[x] - mixture.p_rare[x]));
    return out;
}

bool PropositionReport::ok(double tolerance) const {
    return max_js_error <= tolerance && max_w_error <= tolerance && biased_recovered == biased_instances;
}

DiscreteMixture random_mixture(std::size_t support, std::size_t rare_points, Rng& rng) {
    if (rare_points == 0 || rare_points >= support) throw InvalidArgument("random_mixture: need at least one rare and one common point");
    std::vector<std::size_t> order(support);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    DiscreteMixture m;
    m.p_rare.assign(support, 0.0);
    m.p_common.assign(support, 0.0);
    const auto r = random_simplex(rare_points, rng);
    const auto c = random_simplex(support - rare_points, rng);
    for (std::size_t i = 0; i < rare_points; ++i) m.p_rare[order[i]] = r[i];
    for (std::size_t i = rare_points; i < support; ++i) m.p_common[order[i]] = c[i - rare_points];
    std::uniform_real_distribution<double> a(0.02, 0.5);
    m.alpha = a(rng);
    return m;
}

PropositionReport verify_propositions(std::size_t weighted_instances, std::size_t max_support, std::size_t biased_instances, Rng& rng) {
    if (max_support < 2 || max_support > 64) throw InvalidArgument("verify_propositions: support must lie in [2, 64]");
    PropositionReport report;
    for (std::size_t t = 0; t < weighted_instances; ++t) {
        std::uniform_int_distribution<std::size_t> size_dist(2, max_support);
        const std::size_t n = size_dist(rng);
        std::uniform_int_distribution<std::size_t> rare_dist(1, n - 1);
        const DiscreteMixture mixture = random_mixture(n, rare_dist(rng), rng);
        const auto generated = random_simplex(n, rng, 0.0);
        std::uniform_real_distribution<double> d_dist(0.01, 0.99);
        std::vector<double> d(n);
        for (double& v : d) v = d_dist(rng);
        std::uniform_real_distribution<double> w_dist(1.0, 1.0 / mixture.alpha);
        const double w = w_dist(rng);
        const WeightedEquivalence eq = check_weighted_equivalence(mixture, generated, d, w);
        report.max_js_error = std::max(report.max_js_error, eq.js_error());
        report.max_w_error = std::max(report.max_w_error, eq.w_error());
        ++report.weighted_instances;
    }
    for (std::size_t t = 0; t < biased_instances; ++t) {
        std::uniform_int_distribution<std::size_t> size_dist(4, 8);
        const std::size_t n = size_dist(rng);
        std::uniform_int_distribution<std::size_t> rare_dist(1, n / 2);
        const DiscreteMixture mixture = random_mixture(n, rare_dist(rng), rng);
        // Heavily skewed labeled distribution with full support.
        std::normal_distribution<double> g(0.0, 1.5);
        std::vector<double> labeled(n);
        for (double& v : labeled) v = std::exp(g(rng));
        const double s = std::accumulate(labeled.begin(), labeled.end(), 0.0);
        for (double& v : labeled) v /= s;
        const std::size_t resolution = n <= 6 ? 4 : 3;
        const BiasedLabelCheck check = check_biased_labels(mixture, labeled, candidate_family(mixture, labeled, resolution));
        ++report.biased_instances;
        if (check.argmin_recovers_rare()) ++report.biased_recovered;
    }
    return report;
}

}  // namespace raregan
