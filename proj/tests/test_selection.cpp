#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "raregan/errors.hpp"
#include "raregan/selection.hpp"
#include "support.hpp"

using namespace raregan;

namespace {

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    return v;
}

// Brute force: full stable sort by key, take the first k.
std::vector<std::size_t> sort_oracle(const std::vector<double>& key, std::size_t k, bool ascending) {
    std::vector<std::size_t> idx(key.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return ascending ? key[a] < key[b] : key[a] > key[b]; });
    idx.resize(k);
    return sorted(idx);
}

}  // namespace

TEST_CASE("least-confident example") {
    Rng rng(1);
    const std::vector<double> p{0.9, 0.5, 0.7};
    CHECK(select_for_labeling(p, 1, SelectionPolicy::least_confident, rng) == std::vector<std::size_t>{1});
    CHECK(select_for_labeling(p, 1, SelectionPolicy::most_confident, rng) == std::vector<std::size_t>{0});
    for (SelectionPolicy policy : {SelectionPolicy::least_confident, SelectionPolicy::most_confident, SelectionPolicy::random})
        CHECK(sorted(select_for_labeling(p, 3, policy, rng)) == std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(select_for_labeling(p, 4, SelectionPolicy::random, rng), InvalidArgument);
}

TEST_CASE("selection matches a full-sort oracle, ties to the earlier candidate") {
    Rng rng(2);
    std::uniform_real_distribution<double> u(0.5, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> p(200);
        // Coarse values force many ties.
        for (double& v : p) v = std::round(u(rng) * 40.0) / 40.0;
        CHECK(sorted(select_for_labeling(p, 50, SelectionPolicy::least_confident, rng)) == sort_oracle(p, 50, true));
        CHECK(sorted(select_for_labeling(p, 50, SelectionPolicy::most_confident, rng)) == sort_oracle(p, 50, false));
    }
}

TEST_CASE("random selection is distinct and roughly uniform") {
    Rng rng(3);
    const std::vector<double> p(20, 0.7);
    std::vector<int> hits(20, 0);
    for (int t = 0; t < 20000; ++t) {
        const auto pick = select_for_labeling(p, 5, SelectionPolicy::random, rng);
        CHECK(std::set<std::size_t>(pick.begin(), pick.end()).size() == 5);
        for (std::size_t i : pick) ++hits[i];
    }
    for (int h : hits) CHECK(std::abs(h - 5000) < 300);
}

TEST_CASE("two-class uncertainty measures select the same sets") {
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix probs(120, 2);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
            probs(r, 0) = u(rng);
            probs(r, 1) = 1.0 - probs(r, 0);
        }
        const std::size_t k = 1 + trial % 60;
        const auto a = sorted(select_most_uncertain(probs, k, UncertaintyMeasure::least_confidence));
        CHECK(a == sorted(select_most_uncertain(probs, k, UncertaintyMeasure::margin)));
        CHECK(a == sorted(select_most_uncertain(probs, k, UncertaintyMeasure::entropy)));
        Rng unused(0);
        CHECK(a == sorted(select_for_labeling(max_class_probability(probs), k, SelectionPolicy::least_confident, unused)));
    }
}

TEST_CASE("policy names") {
    CHECK(selection_policy_from_string("least-confident") == SelectionPolicy::least_confident);
    CHECK(selection_policy_from_string(to_string(SelectionPolicy::most_confident)) == SelectionPolicy::most_confident);
    CHECK_THROWS(selection_policy_from_string("greedy"));
}
