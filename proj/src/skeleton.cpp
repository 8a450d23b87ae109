#include "skelnav/skeleton.hpp"

#include <algorithm>
#include <array>
#include <ostream>
#include <string>

namespace skelnav::skeleton {

namespace {

// Neighbour k, counterclockwise from east.
constexpr std::array<int, 8> kDr = {0, -1, -1, -1, 0, 1, 1, 1};
constexpr std::array<int, 8> kDc = {1, 1, 0, -1, -1, -1, 0, 1};

// Yokoi's 8-connectivity number equals 1 exactly for simple points.
constexpr std::array<bool, 256> build_simple_table() {
    std::array<bool, 256> table{};
    for (unsigned code = 0; code < 256; ++code) {
        auto off = [code](int k) { return ((code >> (k & 7)) & 1u) ? 0 : 1; };
        int n = 0;
        for (int k = 0; k < 8; k += 2) n += off(k) - off(k) * off(k + 1) * off(k + 2);
        table[code] = n == 1;
    }
    return table;
}

constexpr auto kSimple = build_simple_table();

unsigned neighbourhood(const Mask& m, int r, int c) {
    unsigned code = 0;
    for (int k = 0; k < 8; ++k) {
        if (m.get_or(r + kDr[k], c + kDc[k], 0)) code |= 1u << k;
    }
    return code;
}

int popcount8(unsigned code) {
    int n = 0;
    for (; code; code &= code - 1) ++n;
    return n;
}

bool has_background4(const Mask& m, int r, int c) {
    return !m.get_or(r - 1, c, 0) || !m.get_or(r + 1, c, 0) || !m.get_or(r, c - 1, 0) || !m.get_or(r, c + 1, 0);
}

bool deletable(const Mask& m, int r, int c) {
    const unsigned code = neighbourhood(m, r, c);
    return kSimple[code] && popcount8(code) >= 2;
}

}  // namespace

bool is_simple(unsigned neighbourhood_code) { return kSimple[neighbourhood_code & 0xFFu]; }

DegreeConfig parse_degree_config(std::string_view name) {
    if (name == "deg1") return DegreeConfig::Deg1;
    if (name == "gt2") return DegreeConfig::DegGt2;
    if (name == "ne2") return DegreeConfig::DegNe2;
    throw InputError("unknown degree config '" + std::string(name) + "' (expected deg1, gt2 or ne2)");
}

std::string_view to_string(DegreeConfig cfg) {
    switch (cfg) {
        case DegreeConfig::Deg1: return "deg1";
        case DegreeConfig::DegGt2: return "gt2";
        case DegreeConfig::DegNe2: return "ne2";
    }
    throw InputError("unknown degree config");
}

Mask thin(const Mask& in) {
    Mask m = in;
    Mask on_border(m.rows(), m.cols(), 0);
    std::vector<Cell> border;
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
            if (m(r, c) && has_background4(m, r, c)) {
                on_border(r, c) = 1;
                border.push_back({r, c});
            }
        }
    }

    // North, south, east, west.
    constexpr std::array<int, 4> kSideR = {-1, 1, 0, 0};
    constexpr std::array<int, 4> kSideC = {0, 0, 1, -1};

    std::vector<Cell> candidates;
    std::vector<Cell> removed;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int dir = 0; dir < 4; ++dir) {
            candidates.clear();
            for (const Cell p : border) {
                if (m.get_or(p.row + kSideR[dir], p.col + kSideC[dir], 0)) continue;
                if (deletable(m, p.row, p.col)) candidates.push_back(p);
            }
            if (candidates.empty()) continue;

            removed.clear();
            for (const Cell p : candidates) {
                if (!deletable(m, p.row, p.col)) continue;
                m[p] = 0;
                removed.push_back(p);
            }
            if (removed.empty()) continue;
            changed = true;

            for (const Cell p : removed) {
                on_border[p] = 0;
                for (int k = 0; k < 8; ++k) {
                    const int nr = p.row + kDr[k];
                    const int nc = p.col + kDc[k];
                    if (m.in_bounds(nr, nc) && m(nr, nc) && !on_border(nr, nc) && has_background4(m, nr, nc)) {
                        on_border(nr, nc) = 1;
                        border.push_back({nr, nc});
                    }
                }
            }
            std::erase_if(border, [&](Cell p) { return !m[p]; });
            std::sort(border.begin(), border.end());
        }
    }
    return m;
}

Raster<std::uint8_t> degree_map(const Mask& mask) {
    Raster<std::uint8_t> deg(mask.rows(), mask.cols(), 0);
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (mask(r, c)) deg(r, c) = static_cast<std::uint8_t>(popcount8(neighbourhood(mask, r, c)));
        }
    }
    return deg;
}

SkeletonGraph skeletonize(std::shared_ptr<const perception::OccupancyGrid> grid) {
    if (!grid) throw InputError("skeletonize: null grid");
    SkeletonGraph g;
    g.mask = thin(grid->cells);
    g.degree = degree_map(g.mask);
    g.source = std::move(grid);
    return g;
}

SkeletonGraph skeletonize(const perception::OccupancyGrid& grid) {
    return skeletonize(std::make_shared<const perception::OccupancyGrid>(grid));
}

std::map<Cell, int> node_degrees(const SkeletonGraph& graph) {
    std::map<Cell, int> out;
    for (int r = 0; r < graph.mask.rows(); ++r) {
        for (int c = 0; c < graph.mask.cols(); ++c) {
            if (graph.mask(r, c)) out.emplace(Cell{r, c}, graph.degree(r, c));
        }
    }
    return out;
}

std::vector<Cell> select_by_degree(const SkeletonGraph& graph, DegreeConfig config) {
    auto keep = [config](int d) {
        switch (config) {
            case DegreeConfig::Deg1: return d == 1;
            case DegreeConfig::DegGt2: return d > 2;
            case DegreeConfig::DegNe2: return d != 2;
        }
        throw InputError("unknown degree config");
    };
    std::vector<Cell> out;
    for (int r = 0; r < graph.mask.rows(); ++r) {
        for (int c = 0; c < graph.mask.cols(); ++c) {
            if (graph.mask(r, c) && keep(graph.degree(r, c))) out.push_back({r, c});
        }
    }
    return out;
}

void write_degree_pgm(std::ostream& os, const SkeletonGraph& graph) {
    const int rows = graph.mask.rows();
    const int cols = graph.mask.cols();
    os << "P5\n" << cols << ' ' << rows << "\n255\n";
    std::string row(static_cast<std::size_t>(cols), '\0');
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            unsigned char v = 0;
            if (graph.mask(r, c)) {
                const int d = graph.degree(r, c);
                v = d <= 1 ? 255 : d == 2 ? 128 : 200;
            } else if (graph.source && graph.source->cells.in_bounds(r, c) && graph.source->cells(r, c)) {
                v = 40;
            }
            row[static_cast<std::size_t>(c)] = static_cast<char>(v);
        }
        os.write(row.data(), cols);
    }
}

}  // namespace skelnav::skeleton
