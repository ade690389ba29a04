#pragma once

#include <vector>

#include "rulkit/errors.hpp"

namespace rulkit {

/// Central-difference gradient estimate of a scalar function of a flat
/// parameter vector: (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps).
/// The numeric oracle used to cross-check reverse-mode gradients.
template <typename F>
std::vector<double> finite_diff(F&& f, std::vector<double> theta, double eps) {
    if (eps <= 0.0) throw ConfigError("finite_diff: eps must be positive");
    std::vector<double> grad(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = theta[i];
        theta[i] = orig + eps;
        const double fp = f(theta);
        theta[i] = orig - eps;
        const double fm = f(theta);
        theta[i] = orig;
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

} // namespace rulkit
