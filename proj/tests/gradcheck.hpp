#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace mmf::testing {

// |a - f| / max(|a|, |f|, floor). The floor keeps exactly-zero gradients
// (dead ReLUs, unused inputs) from dividing by zero while still demanding
// an absolute error below floor * 1e-4 for them.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central finite differences of `loss` with respect to every entry of
// `params`, which is perturbed in place and restored.
inline std::vector<double> numeric_gradient(std::span<double> params, const std::function<double()>& loss,
                                            double h = 1e-5) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = loss();
        params[i] = keep - h;
        const double down = loss();
        params[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    double worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
    return worst;
}

} // namespace mmf::testing
