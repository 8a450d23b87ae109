#pragma once

// Helpers shared by the test binaries.

#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <limits>
#include <random>
#include <string>

#include "skelnav/geometry.hpp"
#include "skelnav/perception.hpp"
#include "skelnav/simenv.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return SKELNAV_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& rel) { return source_dir() / "fixtures" / rel; }

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::path(SKELNAV_BINARY_DIR) / "scratch" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Rectangular room of free cells with a one-cell wall border.
inline skelnav::sim::SimWorld room(int rows, int cols, double cell = 0.1) {
    skelnav::Mask m(rows, cols, 0);
    for (int r = 1; r < rows - 1; ++r)
        for (int c = 1; c < cols - 1; ++c) m(r, c) = 1;
    return skelnav::sim::SimWorld(m, cell);
}

/// Union of random discs, clipped to the raster.
inline skelnav::Mask blob_map(int rows, int cols, std::uint64_t seed, int n_discs = 12) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> rr(0, rows - 1), cc(0, cols - 1);
    std::uniform_int_distribution<int> rad(rows / 25 + 2, rows / 6 + 3);
    skelnav::Mask m(rows, cols, 0);
    for (int i = 0; i < n_discs; ++i) {
        const int r0 = rr(rng), c0 = cc(rng), rad0 = rad(rng);
        for (int r = std::max(0, r0 - rad0); r <= std::min(rows - 1, r0 + rad0); ++r)
            for (int c = std::max(0, c0 - rad0); c <= std::min(cols - 1, c0 + rad0); ++c)
                if ((r - r0) * (r - r0) + (c - c0) * (c - c0) <= rad0 * rad0) m(r, c) = 1;
    }
    return m;
}

/// Geodesic distance by repeated relaxation sweeps over the 8-connected cell
/// graph until nothing changes. Slow but independent of the library's search.
inline double sweep_geodesic(const skelnav::sim::SimWorld& world, skelnav::Vec2 a, skelnav::Vec2 b) {
    const auto& m = world.free_cells();
    const double inf = std::numeric_limits<double>::infinity();
    skelnav::Raster<double> d(m.rows(), m.cols(), inf);
    const auto t = world.cell_of(b);
    d[t] = 0.0;
    const double diag = std::sqrt(2.0) * world.cell_size();
    for (bool changed = true; changed;) {
        changed = false;
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) {
                if (!m(r, c)) continue;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if ((dr == 0 && dc == 0) || !m.in_bounds(r + dr, c + dc) || !m(r + dr, c + dc)) continue;
                        const double v = d(r + dr, c + dc) + (dr && dc ? diag : world.cell_size());
                        if (v < d(r, c)) {
                            d(r, c) = v;
                            changed = true;
                        }
                    }
            }
    }
    return d[world.cell_of(a)];
}

/// Minimum over every monotone alignment from (0,0) to (n-1,m-1) with steps
/// (1,0), (0,1), (1,1), enumerated by depth-first search.
inline double exhaustive_dtw(const std::vector<skelnav::Vec2>& p, const std::vector<skelnav::Vec2>& q) {
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        acc += skelnav::distance(p[i], q[j]);
        if (i + 1 == p.size() && j + 1 == q.size()) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < p.size()) walk(i + 1, j, acc);
        if (j + 1 < q.size()) walk(i, j + 1, acc);
        if (i + 1 < p.size() && j + 1 < q.size()) walk(i + 1, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

/// Worst per-sector gap, in cells, between the outer edge of the Eq. 1
/// region seen from the middle of a 40 m empty room and the expected radius
/// min(r, visible range). The visible range of each 5 degree sector is the
/// farthest closed-form floor hit inside r over every pixel of every view.
inline double floor_roundtrip_deviation(const skelnav::perception::CameraIntrinsics& k,
                                        const skelnav::perception::PerceptionConfig& cfg, int n_views = 12) {
    using namespace skelnav;
    const auto world = room(400, 400, 0.1);
    const auto obs = sim::render_panorama(world, {{20.0, 20.0}, 0.0}, n_views, k);
    const auto raw = perception::extract_navigable_region(perception::merge_panorama(obs, k), cfg);

    constexpr int kSectors = 72;
    auto sector_of = [](double x, double y) {
        const double a = std::atan2(y, x) * 180.0 / std::numbers::pi + 180.0;
        return std::min(kSectors - 1, static_cast<int>(a / 5.0));
    };
    const double f = (k.width / 2.0) / std::tan(k.horizontal_fov_deg * std::numbers::pi / 360.0);
    std::vector<double> visible(kSectors, 0.0);
    for (int v = 0; v < n_views; ++v) {
        const double a = 360.0 / n_views * v * std::numbers::pi / 180.0;
        for (int r = k.height / 2; r < k.height; ++r) {
            const double d = k.camera_height * f / (r - (k.height - 1) / 2.0);
            for (int c = 0; c < k.width; ++c) {
                const double left = d * ((k.width - 1) / 2.0 - c) / f;
                const double x = d * std::cos(a) - left * std::sin(a);
                const double y = d * std::sin(a) + left * std::cos(a);
                const double rho = std::hypot(x, y);
                if (rho < cfg.planning_radius) visible[sector_of(x, y)] = std::max(visible[sector_of(x, y)], rho);
            }
        }
    }
    std::vector<double> extent(kSectors, 0.0);
    for (int r = 0; r < raw.cells.rows(); ++r)
        for (int c = 0; c < raw.cells.cols(); ++c)
            if (raw.cells(r, c)) {
                const Vec2 p = raw.cell_center({r, c});
                extent[sector_of(p.x, p.y)] = std::max(extent[sector_of(p.x, p.y)], norm(p));
            }
    double worst = 0.0;
    for (int s = 0; s < kSectors; ++s) {
        const double expected = std::min(cfg.planning_radius, visible[s]);
        worst = std::max(worst, std::abs(extent[s] - expected) / cfg.cell_size);
    }
    return worst;
}

}  // namespace testsupport
