#include "raregan/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "raregan/errors.hpp"

namespace raregan {

std::string_view to_string(SelectionPolicy policy) {
    switch (policy) {
        case SelectionPolicy::least_confident: return "least-confident";
        case SelectionPolicy::most_confident: return "most-confident";
        case SelectionPolicy::random: return "random";
    }
    return "unknown";
}

SelectionPolicy selection_policy_from_string(std::string_view text) {
    for (auto p : {SelectionPolicy::least_confident, SelectionPolicy::most_confident, SelectionPolicy::random})
        if (to_string(p) == text) return p;
    throw InvalidArgument("unknown selection policy '" + std::string(text) + "'");
}

double uncertainty(std::span<const double> p, UncertaintyMeasure measure) {
    switch (measure) {
        case UncertaintyMeasure::least_confidence: return 1.0 - *std::max_element(p.begin(), p.end());
        case UncertaintyMeasure::margin: {
            std::vector<double> sorted(p.begin(), p.end());
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            return -(sorted[0] - sorted[1]);
        }
        case UncertaintyMeasure::entropy: {
            double h = 0.0;
            for (double v : p)
                if (v > 0.0) h -= v * std::log(v);
            return h;
        }
    }
    return 0.0;
}

std::vector<double> max_class_probability(const Matrix& class_probs) {
    std::vector<double> out(class_probs.rows());
    for (std::size_t r = 0; r < class_probs.rows(); ++r) {
        auto row = class_probs.row(r);
        out[r] = *std::max_element(row.begin(), row.end());
    }
    return out;
}

std::vector<std::size_t> select_for_labeling(std::span<const double> max_probs, std::size_t k, SelectionPolicy policy, Rng& rng) {
    const std::size_t n = max_probs.size();
    if (k > n) throw InvalidArgument("select_for_labeling: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " candidates");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    switch (policy) {
        case SelectionPolicy::least_confident:
            std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](std::size_t a, std::size_t b) {
                return max_probs[a] < max_probs[b] || (max_probs[a] == max_probs[b] && a < b);
            });
            break;
        case SelectionPolicy::most_confident:
            std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](std::size_t a, std::size_t b) {
                return max_probs[a] > max_probs[b] || (max_probs[a] == max_probs[b] && a < b);
            });
            break;
        case SelectionPolicy::random:
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, n - 1);
                std::swap(idx[i], idx[pick(rng)]);
            }
            break;
    }
    idx.resize(k);
    return idx;
}

std::vector<std::size_t> select_most_uncertain(const Matrix& class_probs, std::size_t k, UncertaintyMeasure measure) {
    const std::size_t n = class_probs.rows();
    if (k > n) throw InvalidArgument("select_most_uncertain: k exceeds candidate count");
    std::vector<double> u(n);
    for (std::size_t r = 0; r < n; ++r) u[r] = uncertainty(class_probs.row(r), measure);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return u[a] > u[b] || (u[a] == u[b] && a < b); });
    idx.resize(k);
    return idx;
}

}  // namespace raregan
