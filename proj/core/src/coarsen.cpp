#include "recount/coarsen.hpp"

#include <algorithm>
#include <stdexcept>

namespace recount {

std::vector<WgPair> inverse_coarsen(int y) {
    if (y < 0)
        throw validation_error("inverse_coarsen: negative report");
    std::vector<WgPair> out;
    out.push_back({y, HeapingClass::Exact});
    for (HeapingClass g : {HeapingClass::Nearest5, HeapingClass::Nearest10,
                           HeapingClass::Nearest20}) {
        int b = rounding_base(g);
        if (y % b != 0)
            continue;
        // Round-half-up preimage of y: real w in [y - b/2, y + b/2),
        // clipped at zero.
        int lo = std::max(0, y - b / 2);
        int hi = y + (b - 1) / 2;
        for (int w = lo; w <= hi; ++w)
            out.push_back({w, g});
    }
    return out;
}

} // namespace recount
