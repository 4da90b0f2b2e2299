#pragma once

#include <vector>

namespace recount {

/// Gauss-Hermite rule pre-transformed to integrate against a standard
/// normal density: integral of f(t) phi(t) dt ~= sum_i weights[i] *
/// f(nodes[i]). Weights sum to 1; nodes are symmetric about 0.
///
/// kernel_ratio[i] = weights[i] * exp(nodes[i]^2 / 2) is carried separately
/// because it is the quantity mode-centered (adaptive) quadrature multiplies
/// by; forming it from an underflowed outer weight would lose all relative
/// accuracy, so it is computed in closed form during construction.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::vector<double> log_weights;
    std::vector<double> kernel_ratio;

    std::size_t size() const { return nodes.size(); }
};

/// Builds an n-point rule by Newton refinement of the Hermite-function
/// recurrence (stable for any practical n, unlike the eigendecomposition
/// route whose outer weights degrade past ~60 nodes).
QuadratureRule gauss_hermite_normal(int n);

} // namespace recount
