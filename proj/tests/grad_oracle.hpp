#pragma once

// Central finite differences and softmax cross-entropy written from scratch,
// used only as independent references for the analytic loss gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dnc/linalg.hpp"

namespace oracle {

/// d f / d params[i] by (f(p + h e_i) - f(p - h e_i)) / 2h for every i.
inline std::vector<double> central_diff(std::vector<double>& params, const std::function<double()>& f,
                                        double step = 1e-5) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + step;
        const double up = f();
        params[i] = keep - step;
        const double down = f();
        params[i] = keep;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||).
inline double relative_error(const std::vector<double>& a, std::span<const double> b) {
    double diff = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
    return std::sqrt(diff) / denom;
}

/// Mean of -log softmax(logits_i)[y_i] computed as log(sum exp) - logit.
inline double softmax_xent(const std::vector<std::vector<double>>& logits, const std::vector<std::size_t>& labels) {
    double total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double sum = 0;
        for (double l : logits[i]) sum += std::exp(l);
        total += std::log(sum) - logits[i][labels[i]];
    }
    return total / static_cast<double>(logits.size());
}

inline std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(d);
    double sq = 0;
    for (double& x : v) {
        x = g(rng);
        sq += x * x;
    }
    for (double& x : v) x /= std::sqrt(sq);
    return v;
}

}  // namespace oracle
