#include <doctest.h>

#include <algorithm>
#include <array>
#include <set>

#include "skelnav/skeleton.hpp"
#include "support.hpp"

using namespace skelnav;
using namespace skelnav::skeleton;

namespace {

// Neighbour k, counterclockwise from east, in (row, col) offsets.
constexpr std::array<int, 8> kR = {0, -1, -1, -1, 0, 1, 1, 1};
constexpr std::array<int, 8> kC = {1, 1, 0, -1, -1, -1, 0, 1};

// Simple-point test from the definition: exactly one 8-component of
// foreground neighbours and exactly one 4-component of background neighbours
// that touches the centre through a 4-neighbour.
bool simple_by_definition(unsigned code) {
    int grid[3][3] = {};
    for (int k = 0; k < 8; ++k) grid[1 + kR[k]][1 + kC[k]] = (code >> k) & 1U;
    auto components = [&](int value, bool eight, bool need_4adjacent) {
        int seen[3][3] = {};
        int count = 0;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                if ((r == 1 && c == 1) || grid[r][c] != value || seen[r][c]) continue;
                bool touches = false;
                std::vector<std::pair<int, int>> stack{{r, c}};
                seen[r][c] = 1;
                while (!stack.empty()) {
                    auto [a, b] = stack.back();
                    stack.pop_back();
                    if (std::abs(a - 1) + std::abs(b - 1) == 1) touches = true;
                    for (int da = -1; da <= 1; ++da)
                        for (int db = -1; db <= 1; ++db) {
                            if (!eight && da != 0 && db != 0) continue;
                            const int x = a + da, y = b + db;
                            if (x < 0 || y < 0 || x > 2 || y > 2 || (x == 1 && y == 1)) continue;
                            if (grid[x][y] != value || seen[x][y]) continue;
                            seen[x][y] = 1;
                            stack.push_back({x, y});
                        }
                }
                if (!need_4adjacent || touches) ++count;
            }
        return count;
    };
    return components(1, true, false) == 1 && components(0, false, true) == 1;
}

unsigned code_at(const Mask& m, int r, int c) {
    unsigned code = 0;
    for (int k = 0; k < 8; ++k)
        if (m.get_or(r + kR[k], c + kC[k], 0)) code |= 1U << k;
    return code;
}

int neighbours(const Mask& m, int r, int c) {
    int n = 0;
    for (int k = 0; k < 8; ++k) n += m.get_or(r + kR[k], c + kC[k], 0) != 0;
    return n;
}

// Reference thinning, written for clarity rather than speed: four directional
// sub-iterations per pass, each a full raster scan for border pixels that are
// simple and not end points, removed in row-major order with a re-check.
Mask reference_thin(Mask m) {
    constexpr int sides[4][2] = {{-1, 0}, {1, 0}, {0, 1}, {0, -1}};
    auto deletable = [&](int r, int c) {
        return neighbours(m, r, c) >= 2 && simple_by_definition(code_at(m, r, c));
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& s : sides) {
            std::vector<Cell> cand;
            for (int r = 0; r < m.rows(); ++r)
                for (int c = 0; c < m.cols(); ++c)
                    if (m(r, c) && !m.get_or(r + s[0], c + s[1], 0) && deletable(r, c)) cand.push_back({r, c});
            for (const Cell p : cand) {
                if (!deletable(p.row, p.col)) continue;
                m[p] = 0;
                changed = true;
            }
        }
    }
    return m;
}

Mask plus_shape() {
    Mask m(41, 41, 0);
    for (int r = 5; r < 36; ++r)
        for (int c = 18; c < 23; ++c) m(r, c) = 1;
    for (int r = 18; r < 23; ++r)
        for (int c = 5; c < 36; ++c) m(r, c) = 1;
    return m;
}

bool has_2x2_block(const Mask& m) {
    for (int r = 0; r + 1 < m.rows(); ++r)
        for (int c = 0; c + 1 < m.cols(); ++c)
            if (m(r, c) && m(r + 1, c) && m(r, c + 1) && m(r + 1, c + 1)) return true;
    return false;
}

bool subset(const Mask& a, const Mask& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] && !b.data()[i]) return false;
    return true;
}

SkeletonGraph graph_of(const Mask& m) {
    perception::OccupancyGrid g;
    g.cells = m;
    return skeletonize(g);
}

}  // namespace

TEST_CASE("simple-point table agrees with the definition for all 256 codes") {
    for (unsigned code = 0; code < 256; ++code) {
        CAPTURE(code);
        CHECK(is_simple(code) == simple_by_definition(code));
    }
}

TEST_CASE("a thin line is already a skeleton") {
    Mask line(5, 30, 0);
    for (int c = 5; c < 25; ++c) line(2, c) = 1;
    CHECK(thin(line) == line);
}

TEST_CASE("filled square thins like the reference") {
    Mask sq(31, 31, 0);
    for (int r = 5; r < 26; ++r)
        for (int c = 5; c < 26; ++c) sq(r, c) = 1;
    const auto got = thin(sq);
    CHECK(got == reference_thin(sq));
    CHECK(count_components8(got) == 1);
    CHECK_FALSE(has_2x2_block(got));
    // At most one crossing pixel with more than two neighbours, at the centre.
    int crossings = 0;
    for (int r = 0; r < 31; ++r)
        for (int c = 0; c < 31; ++c)
            if (got(r, c) && neighbours(got, r, c) > 2) {
                ++crossings;
                CHECK(std::abs(r - 15) <= 1);
                CHECK(std::abs(c - 15) <= 1);
            }
    CHECK(crossings <= 1);
}

TEST_CASE("plus shape thins to a plus with one degree-4 pixel") {
    const auto plus = plus_shape();
    const auto got = thin(plus);
    CHECK(got == reference_thin(plus));
    CHECK(count_components8(got) == 1);
    const auto deg = degree_map(got);
    int four = 0, ones = 0;
    for (int r = 0; r < 41; ++r)
        for (int c = 0; c < 41; ++c) {
            if (!got(r, c)) continue;
            CHECK(deg(r, c) == neighbours(got, r, c));
            four += deg(r, c) == 4;
            ones += deg(r, c) == 1;
        }
    // Literal 8-neighbour degree: the crossing pixel and its four orthogonal
    // neighbours (diagonally adjacent to each other) all count 4.
    CHECK(four == 5);
    CHECK(ones == 4);
    int cr = -1, cc = -1;
    for (int r = 0; r < 41; ++r)
        for (int c = 0; c < 41; ++c)
            if (got(r, c) && got.get_or(r - 1, c, 0) && got.get_or(r + 1, c, 0) && got.get_or(r, c - 1, 0) &&
                got.get_or(r, c + 1, 0)) {
                cr = r;
                cc = c;
            }
    REQUIRE(cr >= 0);
    CHECK(deg(cr, cc) == 4);
}

TEST_CASE("degree map counts neighbours") {
    Mask line(3, 10, 0);
    for (int c = 2; c < 8; ++c) line(1, c) = 1;
    const auto deg = degree_map(line);
    CHECK(deg(1, 2) == 1);
    CHECK(deg(1, 7) == 1);
    CHECK(deg(1, 4) == 2);
    CHECK(deg(0, 0) == 0);
}

TEST_CASE("degree selection") {
    Mask line(3, 10, 0);
    for (int c = 2; c < 8; ++c) line(1, c) = 1;
    const auto g = graph_of(line);
    CHECK(select_by_degree(g, DegreeConfig::Deg1) == std::vector<Cell>{{1, 2}, {1, 7}});

    const auto plus = graph_of(plus_shape());
    const auto crossing = select_by_degree(plus, DegreeConfig::DegGt2);
    REQUIRE(crossing.size() == 5);
    for (auto c : crossing) CHECK(plus.degree[c] == 4);
    // One pixel of the cluster touches the other four orthogonally.
    int hubs = 0;
    for (auto c : crossing) {
        int orth = 0;
        for (auto d : crossing) orth += std::abs(c.row - d.row) + std::abs(c.col - d.col) == 1;
        hubs += orth == 4;
    }
    CHECK(hubs == 1);

    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto sk = graph_of(testsupport::blob_map(120, 120, seed));
        std::set<Cell> ne2;
        for (auto c : select_by_degree(sk, DegreeConfig::DegNe2)) ne2.insert(c);
        for (auto cfg : {DegreeConfig::Deg1, DegreeConfig::DegGt2})
            for (auto c : select_by_degree(sk, cfg)) CHECK(ne2.count(c) == 1);
    }
}

TEST_CASE("degree config names") {
    CHECK(parse_degree_config("deg1") == DegreeConfig::Deg1);
    CHECK(parse_degree_config("gt2") == DegreeConfig::DegGt2);
    CHECK(parse_degree_config("ne2") == DegreeConfig::DegNe2);
    CHECK(to_string(DegreeConfig::DegGt2) == "gt2");
    CHECK_THROWS_AS(parse_degree_config("deg3"), InputError);
}

TEST_CASE("blob skeletons keep topology") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const auto m = testsupport::blob_map(150, 150, seed);
        const auto s = thin(m);
        CAPTURE(seed);
        CHECK(subset(s, m));
        CHECK_FALSE(has_2x2_block(s));
        CHECK(count_components8(s) == count_components8(m));
        CHECK(thin(m) == s);
        CHECK(s == reference_thin(m));
    }
}

TEST_CASE("empty input gives an empty skeleton") {
    Mask empty(10, 10, 0);
    CHECK(count_set(thin(empty)) == 0);
    Mask single(5, 5, 0);
    single(2, 2) = 1;
    CHECK(thin(single) == single);
}
