#include <doctest.h>

#include <cstring>

#include "raregan/errors.hpp"
#include "raregan/losses.hpp"
#include "support.hpp"

using namespace raregan;
using namespace raregan::testing;

namespace {

std::vector<double> uniform_values(std::size_t n, double lo, double hi, Rng& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

std::vector<Label> random_labels(std::size_t n, double p_rare, Rng& rng) {
    std::bernoulli_distribution b(p_rare);
    std::vector<Label> v(n);
    for (Label& l : v) l = b(rng) ? Label::rare : Label::common;
    return v;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_CASE("alpha estimate and its variance") {
    std::vector<Label> labels(1000, Label::common);
    std::fill_n(labels.begin(), 8, Label::rare);
    CHECK(estimate_alpha(labels) == 0.008);
    CHECK(estimate_alpha(std::vector<Label>(500, Label::common)) == 0.0);
    CHECK_THROWS_AS(estimate_alpha(std::vector<Label>{}), InvalidArgument);
    CHECK(alpha_variance(0.01, 10000) == doctest::Approx(9.9e-7).epsilon(1e-12));

    // Monte Carlo: variance of x/n over repeated Bernoulli(0.01) pools of 10000.
    Rng rng(3);
    std::binomial_distribution<int> binom(10000, 0.01);
    const int reps = 4000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < reps; ++i) {
        const double a = binom(rng) / 10000.0;
        sum += a;
        sq += a * a;
    }
    const double mean = sum / reps;
    const double var = sq / reps - mean * mean;
    CHECK(var == doctest::Approx(9.9e-7).epsilon(0.1));
}

TEST_CASE("weight function values") {
    CHECK(compute_weight(Label::rare, 1.0, 0.3) == 1.0);
    CHECK(compute_weight(Label::common, 1.0, 0.3) == 1.0);
    CHECK(compute_weight(Label::rare, 3.0, 0.00776) == 3.0);
    // (1 - 3 * 0.00776) / (1 - 0.00776) = 0.97672 / 0.99224
    CHECK(compute_weight(Label::common, 3.0, 0.00776) == doctest::Approx(0.97672 / 0.99224).epsilon(1e-14));
    CHECK(std::abs(compute_weight(Label::common, 3.0, 0.00776) - 0.984358) < 1e-6);
    CHECK_THROWS_AS(compute_weight(Label::rare, 0.5, 0.1), InvalidArgument);
    CHECK_THROWS_AS(compute_weight(Label::common, 10.0, 0.1), InvalidArgument);
    CHECK_THROWS_AS(compute_weight(Label::common, 20.0, 0.1), InvalidArgument);
}

TEST_CASE("weights average to one under the estimated class split") {
    Rng rng(9);
    std::uniform_real_distribution<double> ua(1e-4, 0.5);
    for (int i = 0; i < 10000; ++i) {
        const double a = ua(rng);
        std::uniform_real_distribution<double> uw(1.0, 1.0 / a);
        const double w = uw(rng);
        if (w * a >= 1.0) continue;
        const double total = a * compute_weight(Label::rare, w, a) + (1.0 - a) * compute_weight(Label::common, w, a);
        CHECK(std::abs(total - 1.0) < 4 * std::numeric_limits<double>::epsilon());
    }
}

TEST_CASE("effective weight demotes unusable weights") {
    CHECK(effective_weight(3.0, 0.0).demoted);
    CHECK(effective_weight(3.0, 0.0).w == 1.0);
    CHECK(effective_weight(3.0, 0.4).demoted);
    CHECK_FALSE(effective_weight(3.0, 0.01).demoted);
    CHECK(effective_weight(3.0, 0.01).w == 3.0);
    CHECK_FALSE(effective_weight(1.0, 0.0).demoted);
}

TEST_CASE("exact normalization") {
    CHECK(exact_normalization(3.0, 0.01, 0.01) == doctest::Approx(1.0));
    CHECK(exact_normalization(1.0, 0.2, 0.7) == doctest::Approx(1.0));
    // s = w a_hat + (1 - w a)(1 - a_hat)/(1 - a)
    CHECK(exact_normalization(2.0, 0.1, 0.3) == doctest::Approx(2.0 * 0.3 + 0.8 * 0.7 / 0.9));
}

TEST_CASE("plain loss examples") {
    const std::vector<double> real{1, 3}, fake{0, 2};
    CHECK(gan_loss_unweighted(LossFamily::wasserstein, real, fake).value == 1.0);
    const std::vector<double> half{0.5, 0.5};
    CHECK(gan_loss_unweighted(LossFamily::js, half, half).value == doctest::Approx(-1.3862943611198906));
    CHECK_THROWS_AS(gan_loss_unweighted(LossFamily::js, std::vector<double>{1.5}, half), InvalidArgument);
    CHECK_THROWS(gan_loss_unweighted(LossFamily::wasserstein, std::vector<double>{NAN}, half));
    // Clamped logs stay finite at the boundary.
    CHECK(std::isfinite(gan_loss_unweighted(LossFamily::js, std::vector<double>{0.0}, std::vector<double>{1.0}).value));
}

TEST_CASE("w = 1, s = 1 weighted losses are bit-identical to the plain losses") {
    Rng rng(17);
    for (LossFamily family : {LossFamily::js, LossFamily::wasserstein}) {
        LossConfig c;
        c.family = family;
        c.weight = 1.0;
        c.normalization = 1.0;
        for (int i = 0; i < 200; ++i) {
            const std::size_t nr = 1 + i % 37, nf = 1 + (i * 7) % 41;
            const double lo = family == LossFamily::js ? 0.0 : -5.0, hi = family == LossFamily::js ? 1.0 : 5.0;
            const auto rd = uniform_values(nr, lo, hi, rng), fd = uniform_values(nf, lo, hi, rng);
            const auto rl = random_labels(nr, 0.3, rng), fl = random_labels(nf, 0.3, rng);
            const double ahat = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
            const GanLossResult weighted = gan_loss(c, ahat, rd, rl, fd, fl);
            const GanLossResult plain = gan_loss_unweighted(family, rd, fd);
            CHECK(bit_equal(weighted.value, plain.value));
            for (std::size_t k = 0; k < nr; ++k) CHECK(bit_equal(weighted.real_grad[k], plain.real_grad[k]));
            for (std::size_t k = 0; k < nf; ++k) CHECK(bit_equal(weighted.fake_grad[k], plain.fake_grad[k]));
        }
    }
}

TEST_CASE("weighted loss value and gradients") {
    Rng rng(23);
    for (LossFamily family : {LossFamily::js, LossFamily::wasserstein}) {
        LossConfig c;
        c.family = family;
        c.weight = 3.0;
        c.normalization = 1.3;
        const double ahat = 0.05;
        const auto rd = uniform_values(6, 0.05, 0.95, rng), fd = uniform_values(5, 0.05, 0.95, rng);
        const auto rl = random_labels(6, 0.5, rng), fl = random_labels(5, 0.5, rng);
        const std::vector<double> scale{0.5, 1.0, 2.0, 1.5, 0.25};
        const GanLossResult r = gan_loss(c, ahat, rd, rl, fd, fl, scale);

        // Direct evaluation of the weighted forms.
        auto W = [&](Label l) { return l == Label::rare ? 3.0 : (1.0 - 3.0 * ahat) / (1.0 - ahat); };
        double real_term = 0.0, fake_term = 0.0;
        for (std::size_t i = 0; i < rd.size(); ++i) real_term += W(rl[i]) * (family == LossFamily::js ? std::log(rd[i]) : rd[i]);
        for (std::size_t i = 0; i < fd.size(); ++i)
            fake_term += scale[i] * W(fl[i]) * (family == LossFamily::js ? std::log(1.0 - fd[i]) : fd[i]);
        real_term /= 6.0;
        fake_term /= 5.0 * 1.3;
        CHECK(r.value == doctest::Approx(family == LossFamily::js ? real_term + fake_term : real_term - fake_term).epsilon(1e-13));

        std::vector<double> both(rd);
        both.insert(both.end(), fd.begin(), fd.end());
        const auto numeric = numeric_gradient(
            [&](std::span<const double> x) {
                return gan_loss(c, ahat, x.subspan(0, 6), rl, x.subspan(6), fl, scale).value;
            },
            both);
        std::vector<double> analytic(r.real_grad);
        analytic.insert(analytic.end(), r.fake_grad.begin(), r.fake_grad.end());
        CHECK(max_rel_error(analytic, numeric) < 1e-6);
    }
}

TEST_CASE("classification loss") {
    const Matrix perfect = Matrix::from_rows({{1, 0}, {0, 1}});
    const std::vector<Label> rc{Label::rare, Label::common};
    CHECK(classification_loss(perfect, rc, perfect, rc).value == 0.0);
    const Matrix half = Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}});
    CHECK(classification_loss(half, rc, half, rc).value == doctest::Approx(2.0 * std::log(2.0)));
    const Matrix quarter = Matrix::from_rows({{0.25, 0.75}});
    const std::vector<Label> r{Label::rare};
    CHECK(classification_loss(quarter, r, Matrix(0, 2), {}).value == doctest::Approx(1.3862943611198906));
    CHECK(std::isfinite(classification_loss(Matrix::from_rows({{0.0, 1.0}}), r, Matrix(0, 2), {}).value));
    CHECK_THROWS_AS(classification_loss(quarter, rc, Matrix(0, 2), {}), DimensionMismatch);

    Rng rng(4);
    const std::vector<std::size_t> groups{2};
    const Matrix real = random_simplex_rows(4, groups, rng), fake = random_simplex_rows(3, groups, rng);
    const auto rl = random_labels(4, 0.5, rng), fl = random_labels(3, 0.5, rng);
    const std::vector<double> scale{2.0, 0.5, 1.0};
    const ClassificationLossResult res = classification_loss(real, rl, fake, fl, scale);
    std::vector<double> x(real.data().begin(), real.data().end());
    x.insert(x.end(), fake.data().begin(), fake.data().end());
    const auto numeric = numeric_gradient(
        [&](std::span<const double> v) {
            Matrix a(4, 2), b(3, 2);
            std::copy(v.begin(), v.begin() + 8, a.data().begin());
            std::copy(v.begin() + 8, v.end(), b.data().begin());
            return classification_loss(a, rl, b, fl, scale).value;
        },
        x);
    std::vector<double> analytic(res.real_grad.data().begin(), res.real_grad.data().end());
    analytic.insert(analytic.end(), res.fake_grad.data().begin(), res.fake_grad.data().end());
    CHECK(max_rel_error(analytic, numeric) < 1e-6);
}

TEST_CASE("loss config parsing and validation") {
    CHECK(loss_family_from_string("w") == LossFamily::wasserstein);
    CHECK(loss_family_from_string("js") == LossFamily::js);
    CHECK(lipschitz_from_string("gp") == Lipschitz::gradient_penalty);
    CHECK_THROWS(loss_family_from_string("hinge"));
    LossConfig c;
    CHECK(c.critic_steps() == 5);
    c.family = LossFamily::js;
    CHECK(c.critic_steps() == 1);
    c.weight = 0.5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}
