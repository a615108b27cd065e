#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "raregan/matrix.hpp"
#include "raregan/nn.hpp"

namespace raregan {

enum class SelectionPolicy { least_confident, most_confident, random };

std::string_view to_string(SelectionPolicy policy);
SelectionPolicy selection_policy_from_string(std::string_view text);

// Uncertainty orderings for a two-class prediction. Larger means less certain.
enum class UncertaintyMeasure { least_confidence, margin, entropy };

double uncertainty(std::span<const double> class_probs, UncertaintyMeasure measure);

// Max-class probability of each row of an n x 2 probability matrix.
std::vector<double> max_class_probability(const Matrix& class_probs);

// Indices of the k selected candidates. least_confident picks the k smallest
// max-class probabilities, most_confident the k largest; ties go to the
// earlier candidate. random draws k distinct indices uniformly.
std::vector<std::size_t> select_for_labeling(std::span<const double> max_probs, std::size_t k, SelectionPolicy policy, Rng& rng);

// The k most uncertain rows under `measure`, ties to the earlier candidate.
std::vector<std::size_t> select_most_uncertain(const Matrix& class_probs, std::size_t k, UncertaintyMeasure measure);

}  // namespace raregan
