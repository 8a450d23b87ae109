#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string_view>
#include <vector>

#include "skelnav/geometry.hpp"
#include "skelnav/perception.hpp"

namespace skelnav::skeleton {

/// One-pixel-wide medial skeleton of a navigable raster with per-pixel
/// 8-neighbour degree. `degree` is 0 off the skeleton.
struct SkeletonGraph {
    Mask mask;
    Raster<std::uint8_t> degree;
    std::shared_ptr<const perception::OccupancyGrid> source;
};

enum class DegreeConfig { Deg1, DegGt2, DegNe2 };

/// Parses "deg1", "gt2", "ne2".
DegreeConfig parse_degree_config(std::string_view name);
std::string_view to_string(DegreeConfig cfg);

/// Iterative topology-preserving thinning to a fixpoint.
///
/// Each pass runs four directional sub-iterations (north, south, east, west
/// border pixels). A border pixel is removed when it is simple (its removal
/// leaves the 8-connected foreground and 4-connected background topology
/// unchanged) and is not an end point (it has at least two 8-neighbours).
/// Candidates are collected from the state at the start of the
/// sub-iteration and then removed in row-major order with the simple-point
/// test re-checked, so the result is deterministic and never changes topology.
SkeletonGraph skeletonize(std::shared_ptr<const perception::OccupancyGrid> grid);
SkeletonGraph skeletonize(const perception::OccupancyGrid& grid);

/// Thinning on a bare mask; the workhorse behind skeletonize.
Mask thin(const Mask& in);

/// Literal count of 8-adjacent set pixels for each set pixel.
Raster<std::uint8_t> degree_map(const Mask& mask);

std::map<Cell, int> node_degrees(const SkeletonGraph& graph);

/// Skeleton pixels passing the degree filter, row-major.
std::vector<Cell> select_by_degree(const SkeletonGraph& graph, DegreeConfig config);

/// True if the 3x3 neighbourhood code (bit k set = neighbour k present,
/// k = 0..7 counterclockwise from east) describes a simple point.
bool is_simple(unsigned neighbourhood);

/// Debug dump as binary PGM: background 0, navigable 40, degree 0/1 = 255,
/// degree 2 = 128, degree 3+ = 200.
void write_degree_pgm(std::ostream& os, const SkeletonGraph& graph);

}  // namespace skelnav::skeleton
