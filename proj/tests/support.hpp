#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "raregan/nn.hpp"

namespace raregan::testing {

inline double rel_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, rel_error(analytic[i], numeric[i]));
    return worst;
}

// Central differences of f at x.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                                            double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = n(rng);
    return m;
}

// Rows that lie on the per-group simplex, like generator output.
inline Matrix random_simplex_rows(std::size_t rows, std::span<const std::size_t> groups, Rng& rng) {
    std::size_t width = 0;
    for (std::size_t g : groups) width += g;
    std::gamma_distribution<double> gamma(1.0, 1.0);
    Matrix m(rows, width);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = 0;
        for (std::size_t g : groups) {
            double sum = 0.0;
            for (std::size_t j = 0; j < g; ++j) sum += m(r, off + j) = gamma(rng) + 1e-3;
            for (std::size_t j = 0; j < g; ++j) m(r, off + j) /= sum;
            off += g;
        }
    }
    return m;
}

// True when every ReLU pre-activation is at least `margin` away from the kink,
// so central differences do not straddle it.
inline bool away_from_kinks(const DenseNet& net, const Matrix& input, double margin = 1e-4) {
    const ForwardCache cache = forward(net, input);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        if (net.layers()[l].activation != Activation::relu) continue;
        for (double z : cache.pre[l].data())
            if (std::abs(z) < margin) return false;
    }
    return true;
}

inline double weighted_sum(const Matrix& m, const Matrix& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * r.data()[i];
    return s;
}

}  // namespace raregan::testing
