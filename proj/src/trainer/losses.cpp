#include "raregan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "raregan/errors.hpp"

namespace raregan {

namespace {

constexpr double kLogFloor = 1e-12;

double clamped_log(double v) { return std::log(std::max(v, kLogFloor)); }
double clamped_log_grad(double v) { return v > kLogFloor ? 1.0 / v : 0.0; }

void check_finite(std::span<const double> values, const char* what) {
    for (double v : values)
        if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + ": non-finite discriminator output");
}

void check_probability(std::span<const double> values, const char* what) {
    for (double v : values)
        if (v < 0.0 || v > 1.0) throw InvalidArgument(std::string(what) + ": JS discriminator output outside (0, 1)");
}

}  // namespace

std::string_view to_string(LossFamily family) { return family == LossFamily::js ? "js" : "wasserstein"; }

LossFamily loss_family_from_string(std::string_view text) {
    if (text == "js") return LossFamily::js;
    if (text == "wasserstein" || text == "w") return LossFamily::wasserstein;
    throw InvalidArgument("unknown loss family '" + std::string(text) + "'");
}

std::string_view to_string(Lipschitz mechanism) { return mechanism == Lipschitz::clip ? "clip" : "gradient-penalty"; }

Lipschitz lipschitz_from_string(std::string_view text) {
    if (text == "clip") return Lipschitz::clip;
    if (text == "gradient-penalty" || text == "gp") return Lipschitz::gradient_penalty;
    throw InvalidArgument("unknown Lipschitz mechanism '" + std::string(text) + "'");
}

void LossConfig::validate() const {
    if (!(weight >= 1.0)) throw InvalidArgument("LossConfig: weight must be >= 1");
    if (!(normalization > 0.0)) throw InvalidArgument("LossConfig: normalization must be positive");
    if (!(clip > 0.0)) throw InvalidArgument("LossConfig: clip must be positive");
    if (!(penalty_lambda >= 0.0)) throw InvalidArgument("LossConfig: penalty lambda must be non-negative");
}

std::size_t LossConfig::critic_steps() const {
    if (n_critic > 0) return n_critic;
    return family == LossFamily::wasserstein ? 5 : 1;
}

double estimate_alpha(std::span<const Label> labels) {
    if (labels.empty()) throw InvalidArgument("estimate_alpha: empty labeled pool");
    const auto rare = std::count(labels.begin(), labels.end(), Label::rare);
    return static_cast<double>(rare) / static_cast<double>(labels.size());
}

double alpha_variance(double alpha, std::size_t n) {
    if (n == 0) throw InvalidArgument("alpha_variance: n must be positive");
    return alpha * (1.0 - alpha) / static_cast<double>(n);
}

double compute_weight(Label label, double w, double alpha_hat) {
    if (!(w >= 1.0)) throw InvalidArgument("compute_weight: w must be >= 1");
    if (!(alpha_hat >= 0.0 && alpha_hat <= 1.0)) throw InvalidArgument("compute_weight: alpha_hat must lie in [0, 1]");
    if (w == 1.0) return 1.0;
    if (!(w * alpha_hat < 1.0)) throw InvalidArgument("compute_weight: w >= 1/alpha_hat makes the common weight non-positive");
    if (label == Label::rare) return w;
    return (1.0 - w * alpha_hat) / (1.0 - alpha_hat);
}

EffectiveWeight effective_weight(double w, double alpha_hat) {
    if (w == 1.0) return {1.0, false};
    if (alpha_hat <= 0.0 || !(w * alpha_hat < 1.0)) return {1.0, true};
    return {w, false};
}

double exact_normalization(double w, double alpha, double alpha_hat) {
    if (!(alpha < 1.0)) throw InvalidArgument("exact_normalization: alpha must be < 1");
    return w * alpha_hat + (1.0 - w * alpha) * (1.0 - alpha_hat) / (1.0 - alpha);
}

GanLossResult gan_loss_unweighted(LossFamily family, std::span<const double> real_d, std::span<const double> fake_d) {
    check_finite(real_d, "gan_loss");
    check_finite(fake_d, "gan_loss");
    if (family == LossFamily::js) {
        check_probability(real_d, "gan_loss");
        check_probability(fake_d, "gan_loss");
    }
    GanLossResult out;
    out.real_grad.resize(real_d.size());
    out.fake_grad.resize(fake_d.size());
    const double nr = static_cast<double>(real_d.size());
    const double nf = static_cast<double>(fake_d.size());
    double real_sum = 0.0, fake_sum = 0.0;
    for (std::size_t i = 0; i < real_d.size(); ++i) {
        if (family == LossFamily::js) {
            real_sum += clamped_log(real_d[i]);
            out.real_grad[i] = clamped_log_grad(real_d[i]) / nr;
        } else {
            real_sum += real_d[i];
            out.real_grad[i] = 1.0 / nr;
        }
    }
    for (std::size_t i = 0; i < fake_d.size(); ++i) {
        if (family == LossFamily::js) {
            fake_sum += clamped_log(1.0 - fake_d[i]);
            out.fake_grad[i] = -clamped_log_grad(1.0 - fake_d[i]) / nf;
        } else {
            fake_sum += fake_d[i];
            out.fake_grad[i] = -1.0 / nf;
        }
    }
    const double real_term = real_d.empty() ? 0.0 : real_sum / nr;
    const double fake_term = fake_d.empty() ? 0.0 : fake_sum / nf;
    out.value = family == LossFamily::js ? real_term + fake_term : real_term - fake_term;
    return out;
}

GanLossResult gan_loss(const LossConfig& config, double alpha_hat, std::span<const double> real_d, std::span<const Label> real_labels,
                       std::span<const double> fake_d, std::span<const Label> fake_labels, std::span<const double> fake_scale) {
    if (real_d.size() != real_labels.size() || fake_d.size() != fake_labels.size())
        throw DimensionMismatch("gan_loss: value and label counts differ");
    if (!fake_scale.empty() && fake_scale.size() != fake_d.size()) throw DimensionMismatch("gan_loss: one scale per generated sample");
    check_finite(real_d, "gan_loss");
    check_finite(fake_d, "gan_loss");
    const bool js = config.family == LossFamily::js;
    if (js) {
        check_probability(real_d, "gan_loss");
        check_probability(fake_d, "gan_loss");
    }
    const WeightFunction weight{config.weight, alpha_hat};
    const double inv_s = 1.0 / config.normalization;
    GanLossResult out;
    out.real_grad.resize(real_d.size());
    out.fake_grad.resize(fake_d.size());
    const double nr = static_cast<double>(real_d.size());
    const double nf = static_cast<double>(fake_d.size());
    double real_sum = 0.0, fake_sum = 0.0;
    for (std::size_t i = 0; i < real_d.size(); ++i) {
        const double w = weight(real_labels[i]);
        if (js) {
            real_sum += w * clamped_log(real_d[i]);
            out.real_grad[i] = w * clamped_log_grad(real_d[i]) / nr;
        } else {
            real_sum += w * real_d[i];
            out.real_grad[i] = w / nr;
        }
    }
    for (std::size_t i = 0; i < fake_d.size(); ++i) {
        const double w = fake_scale.empty() ? weight(fake_labels[i]) : weight(fake_labels[i]) * fake_scale[i];
        if (js) {
            fake_sum += w * clamped_log(1.0 - fake_d[i]);
            out.fake_grad[i] = -inv_s * w * clamped_log_grad(1.0 - fake_d[i]) / nf;
        } else {
            fake_sum += w * fake_d[i];
            out.fake_grad[i] = -inv_s * w / nf;
        }
    }
    const double real_term = real_d.empty() ? 0.0 : real_sum / nr;
    const double fake_term = fake_d.empty() ? 0.0 : inv_s * (fake_sum / nf);
    out.value = js ? real_term + fake_term : real_term - fake_term;
    return out;
}

ClassificationLossResult classification_loss(const Matrix& real_probs, std::span<const Label> real_labels, const Matrix& fake_probs,
                                             std::span<const Label> fake_labels, std::span<const double> fake_scale) {
    if (real_probs.rows() != real_labels.size() || fake_probs.rows() != fake_labels.size())
        throw DimensionMismatch("classification_loss: probability and label counts differ");
    if (!fake_scale.empty() && fake_scale.size() != fake_probs.rows())
        throw DimensionMismatch("classification_loss: one scale per generated sample");
    if ((real_probs.rows() > 0 && real_probs.cols() != 2) || (fake_probs.rows() > 0 && fake_probs.cols() != 2))
        throw DimensionMismatch("classification_loss: expected two class probabilities per sample");
    ClassificationLossResult out;
    out.real_grad = Matrix(real_probs.rows(), 2);
    out.fake_grad = Matrix(fake_probs.rows(), 2);
    auto term = [](const Matrix& probs, std::span<const Label> labels, Matrix& grad, std::span<const double> scale) {
        if (probs.rows() == 0) return 0.0;
        const double n = static_cast<double>(probs.rows());
        double sum = 0.0;
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            const std::size_t c = class_index(labels[i]);
            const double p = probs(i, c);
            if (!std::isfinite(p)) throw InvalidArgument("classification_loss: non-finite probability");
            const double k = scale.empty() ? 1.0 : scale[i];
            sum -= k * clamped_log(p);
            grad(i, c) = -k * clamped_log_grad(p) / n;
        }
        return sum / n;
    };
    out.value = term(real_probs, real_labels, out.real_grad, {}) + term(fake_probs, fake_labels, out.fake_grad, fake_scale);
    return out;
}

}  // namespace raregan
