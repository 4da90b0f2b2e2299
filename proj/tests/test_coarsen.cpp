#include "recount/coarsen.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace recount;

namespace {

// Brute-force oracle: the inverse set recovered by enumerating coarsen.
std::set<std::pair<int, int>> enumerate_inverse(int y, int w_limit) {
    std::set<std::pair<int, int>> out;
    for (int w = 0; w <= w_limit; ++w)
        for (HeapingClass g : all_heaping_classes)
            if (coarsen(w, g) == y) out.insert({w, static_cast<int>(g)});
    return out;
}

std::set<std::pair<int, int>> as_set(const std::vector<WgPair>& pairs) {
    std::set<std::pair<int, int>> out;
    for (const auto& p : pairs) out.insert({p.w, static_cast<int>(p.g)});
    return out;
}

} // namespace

TEST_CASE("coarsen matches the worked examples") {
    CHECK(coarsen(14, HeapingClass::Exact) == 14);
    CHECK(coarsen(14, HeapingClass::Nearest5) == 15);
    CHECK(coarsen(14, HeapingClass::Nearest10) == 10);
    CHECK(coarsen(14, HeapingClass::Nearest20) == 20);
}

TEST_CASE("coarsen maps zero to zero for every class") {
    for (HeapingClass g : all_heaping_classes) CHECK(coarsen(0, g) == 0);
}

TEST_CASE("half-way values round away from zero") {
    CHECK(coarsen(15, HeapingClass::Nearest10) == 20);
    CHECK(coarsen(30, HeapingClass::Nearest20) == 40);
    CHECK(coarsen(25, HeapingClass::Nearest10) == 30);
    CHECK(coarsen(10, HeapingClass::Nearest20) == 20);
}

TEST_CASE("inverse set of 5 is the exact pair plus the window 3..7") {
    auto set = as_set(inverse_coarsen(5));
    std::set<std::pair<int, int>> expected = {
        {5, 1}, {3, 2}, {4, 2}, {5, 2}, {6, 2}, {7, 2}};
    CHECK(set == expected);
}

TEST_CASE("a report not divisible by 5 pins the latent count") {
    auto pairs = inverse_coarsen(7);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].w == 7);
    CHECK(pairs[0].g == HeapingClass::Exact);
}

TEST_CASE("inverse sets for 20 and 0 match brute-force enumeration") {
    CHECK(as_set(inverse_coarsen(20)) == enumerate_inverse(20, 200));
    CHECK(as_set(inverse_coarsen(0)) == enumerate_inverse(0, 200));

    // Spot-check the derived windows for y = 20.
    auto set = as_set(inverse_coarsen(20));
    CHECK(set.count({18, 2}) == 1);
    CHECK(set.count({22, 2}) == 1);
    CHECK(set.count({15, 3}) == 1);
    CHECK(set.count({24, 3}) == 1);
    CHECK(set.count({10, 4}) == 1);
    CHECK(set.count({29, 4}) == 1);
    CHECK(set.count({30, 4}) == 0);
    CHECK(set.size() == 1 + 5 + 10 + 20);
}

TEST_CASE("round trip: every (w, g) is in the inverse set of its report") {
    for (int w = 0; w <= 200; ++w) {
        for (HeapingClass g : all_heaping_classes) {
            auto pairs = inverse_coarsen(coarsen(w, g));
            bool found = std::any_of(pairs.begin(), pairs.end(), [&](const WgPair& p) {
                return p.w == w && p.g == g;
            });
            CHECK(found);
        }
    }
}

TEST_CASE("inverse sets agree with enumeration for all reports up to 120") {
    for (int y = 0; y <= 120; ++y)
        CHECK(as_set(inverse_coarsen(y)) == enumerate_inverse(y, 400));
}

TEST_CASE("class windows are contiguous with the class's width") {
    for (int y = 0; y <= 200; y += 5) {
        auto pairs = inverse_coarsen(y);
        for (HeapingClass g :
             {HeapingClass::Nearest5, HeapingClass::Nearest10, HeapingClass::Nearest20}) {
            int b = rounding_base(g);
            if (y % b != 0) continue;
            std::vector<int> ws;
            for (const auto& p : pairs)
                if (p.g == g) ws.push_back(p.w);
            REQUIRE(!ws.empty());
            std::sort(ws.begin(), ws.end());
            int expected_width = b - std::max(0, b / 2 - y);  // clipped at zero
            CHECK(static_cast<int>(ws.size()) == expected_width);
            CHECK(ws.back() - ws.front() == expected_width - 1);
        }
    }
}
