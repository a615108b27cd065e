#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "raregan/matrix.hpp"
#include "raregan/oracle.hpp"

namespace raregan {

enum class LossFamily { js, wasserstein };
enum class Lipschitz { clip, gradient_penalty };

std::string_view to_string(LossFamily family);
LossFamily loss_family_from_string(std::string_view text);
std::string_view to_string(Lipschitz mechanism);
Lipschitz lipschitz_from_string(std::string_view text);

struct LossConfig {
    LossFamily family = LossFamily::wasserstein;
    // Extra multiplicative weight on the rare class; 1 disables weighting.
    double weight = 3.0;
    // Normalization constant dividing the generated-sample term.
    double normalization = 1.0;
    Lipschitz lipschitz = Lipschitz::clip;
    double clip = 0.01;
    double penalty_lambda = 10.0;
    // Critic updates per generator update; 0 picks 5 for Wasserstein, 1 for JS.
    std::size_t n_critic = 0;
    // JS only: the generator maximizes log D(fake) instead of minimizing log(1 - D(fake)).
    bool non_saturating = true;

    void validate() const;
    std::size_t critic_steps() const;
};

// Class probabilities are laid out as columns {rare, common}.
constexpr std::size_t class_index(Label label) { return label == Label::rare ? 0 : 1; }

// x / n over the labeled pool. Throws InvalidArgument on an empty pool.
double estimate_alpha(std::span<const Label> labels);
// Variance of the estimate, alpha (1 - alpha) / n.
double alpha_variance(double alpha, std::size_t n);

// Rare samples get w, common samples (1 - w alpha_hat) / (1 - alpha_hat).
// Requires w >= 1 and, when w > 1, w < 1 / alpha_hat.
double compute_weight(Label label, double w, double alpha_hat);

struct WeightFunction {
    double w = 1.0;
    double alpha_hat = 0.0;

    double operator()(Label label) const { return compute_weight(label, w, alpha_hat); }
};

struct EffectiveWeight {
    double w = 1.0;
    bool demoted = false;
};

// The configured weight, or 1 when alpha_hat is 0 or w >= 1 / alpha_hat and
// the common-class weight would not be positive.
EffectiveWeight effective_weight(double w, double alpha_hat);

// s = w alpha_hat + (1 - w alpha) (1 - alpha_hat) / (1 - alpha): the exact
// normalization that makes the reweighted generated distribution sum to one.
double exact_normalization(double w, double alpha, double alpha_hat);

struct GanLossResult {
    double value = 0.0;
    // d value / d D(x) for each real and each generated sample.
    std::vector<double> real_grad;
    std::vector<double> fake_grad;
};

// Plain batch losses on discriminator outputs:
//   JS: mean log D(real) + mean log(1 - D(fake))
//   W:  mean D(real) - mean D(fake)
GanLossResult gan_loss_unweighted(LossFamily family, std::span<const double> real_d, std::span<const double> fake_d);

// Weighted batch losses:
//   JS: mean W log D(real) + (1/s) mean W log(1 - D(fake))
//   W:  mean W D(real) - (1/s) mean W D(fake)
// where W comes from compute_weight(label, config.weight, alpha_hat) and s is
// config.normalization. With weight 1 and s 1 the result is bit-identical to
// gan_loss_unweighted. JS logs are clamped at 1e-12. A non-empty `fake_scale`
// multiplies each generated sample's weight (importance-sampled conditions).
GanLossResult gan_loss(const LossConfig& config, double alpha_hat, std::span<const double> real_d, std::span<const Label> real_labels,
                       std::span<const double> fake_d, std::span<const Label> fake_labels, std::span<const double> fake_scale = {});

struct ClassificationLossResult {
    double value = 0.0;
    // d value / d C(x, .) for each row of the probability inputs.
    Matrix real_grad;
    Matrix fake_grad;
};

// -mean_real log C(x, c) - mean_fake log C(x, c); either batch may be empty.
// Probabilities are n x 2; logs are clamped at 1e-12. A non-empty
// `fake_scale` multiplies each generated sample's term.
ClassificationLossResult classification_loss(const Matrix& real_probs, std::span<const Label> real_labels, const Matrix& fake_probs,
                                             std::span<const Label> fake_labels, std::span<const double> fake_scale = {});

}  // namespace raregan
