#pragma once

#include "recount/types.hpp"

#include <vector>

namespace recount {

/// Rounds the exact count w to the granularity dictated by g. Half-way
/// values round up (away from zero): coarsen(15, Nearest10) == 20.
constexpr int coarsen(int w, HeapingClass g) {
    int b = rounding_base(g);
    if (b == 1) return w;
    return (2 * w + b) / (2 * b) * b;
}

/// One (latent count, rounding class) pair consistent with a report.
struct WgPair {
    int w;
    HeapingClass g;

    friend bool operator==(const WgPair&, const WgPair&) = default;
};

/// The finite set { (w, g) : coarsen(w, g) == y }. The exact pair (y, Exact)
/// is always present; pairs with coarser classes exist exactly when the
/// class's base divides y. Members are ordered by class, then by w.
std::vector<WgPair> inverse_coarsen(int y);

} // namespace recount
