#pragma once

// Independent numerical oracles shared by the test suites. These deliberately
// avoid the library's own computational paths.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gptop/tensor.hpp"

namespace oracles {

/// Central finite difference of f around x, step h.
inline double central_fd(const std::function<double(double)>& f, double x, double h = 1e-6) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Gradient of a scalar-valued function of one leaf tensor via central FD.
/// `eval` must recompute the scalar from the leaf's current values.
inline std::vector<double> fd_gradient(gptop::ad::Tensor& leaf,
                                       const std::function<double()>& eval, double h = 1e-6) {
    std::vector<double> g(leaf.numel());
    auto& vals = leaf.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        double keep = vals[i];
        vals[i] = keep + h;
        double fp = eval();
        vals[i] = keep - h;
        double fm = eval();
        vals[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Largest relative mismatch between two gradient vectors. The denominator is
/// floored at `floor_scale` so near-zero entries compare absolutely.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor_scale = 1.0) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double denom = std::max(std::abs(b[i]), floor_scale);
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = 0.3,
                                         double hi = 1.5) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

}  // namespace oracles
