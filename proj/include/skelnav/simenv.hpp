#pragma once

// Synthetic continuous 2D world used to exercise the navigation loop.
//
// World frame: x to the right (east), y up (north), metres. The bitmap's
// first row is the northern edge; cell (row, col) covers
// x in [col*cell, (col+1)*cell) and y in [(rows-1-row)*cell, (rows-row)*cell).
// Everything outside the bitmap counts as wall.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skelnav/geometry.hpp"
#include "skelnav/perception.hpp"

namespace skelnav::sim {

inline constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct Region {
    std::string label;
    std::vector<Vec2> polygon;

    bool contains(Vec2 p) const;
};

struct Object {
    std::string label;
    Vec2 position;
};

struct EpisodeSpec {
    std::string id;
    Pose start;
    Vec2 goal;
    std::string instruction;
    std::vector<Vec2> subtask_hints;
    std::vector<Vec2> reference_path;
};

struct Action {
    double rotate_deg = 0.0;
    double translate_m = 0.0;

    friend bool operator==(const Action&, const Action&) = default;
};

class SimWorld {
public:
    static constexpr double kDefaultWallHeight = 2.5;
    static constexpr double kDefaultAgentRadius = 0.2;

    SimWorld(Mask free_cells, double cell_size);

    /// Loads `dir/world.pgm` and `dir/world.json`.
    static SimWorld load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    const Mask& free_cells() const { return free_; }
    double cell_size() const { return cell_size_; }
    double width_m() const { return free_.cols() * cell_size_; }
    double height_m() const { return free_.rows() * cell_size_; }

    Cell cell_of(Vec2 p) const;
    Vec2 cell_center(Cell c) const;
    bool is_free(Vec2 p) const;
    bool is_free(Cell c) const { return free_.in_bounds(c) && free_[c] != 0; }

    /// Distance along a horizontal ray to the first wall cell boundary, capped at `max_range`.
    double cast_ray(Vec2 origin, double angle_deg, double max_range = kUnreachable) const;

    /// First region containing `p`, if any.
    const Region* region_at(Vec2 p) const;

    /// Geodesic distance field towards `target`'s cell, one entry per cell
    /// (row-major, +inf where unreachable). Cached and thread-safe.
    std::shared_ptr<const std::vector<double>> distance_field(Vec2 target) const;

    double wall_height = kDefaultWallHeight;
    double agent_radius = kDefaultAgentRadius;
    std::vector<Region> regions;
    std::vector<Object> objects;
    std::vector<EpisodeSpec> episodes;

    const EpisodeSpec& episode(const std::string& id) const;

private:
    Mask free_;
    double cell_size_;

    struct FieldCache;
    std::shared_ptr<FieldCache> cache_;
};

perception::Observation render_panorama(const SimWorld& world, const Pose& pose, int n_views,
                                        const perception::CameraIntrinsics& intrinsics, int timestep = 0);

/// Depth of a single view (heading relative to the pose's yaw).
perception::DepthFrame render_view(const SimWorld& world, const Pose& pose, double heading_deg,
                                   const perception::CameraIntrinsics& intrinsics);

/// Rotate, then translate along the new yaw, stopping `agent_radius` short of walls.
Pose step(const SimWorld& world, const Pose& pose, const Action& action);

/// Seeded displacement by `magnitude` in a random unobstructed direction.
/// Up to 16 directions are tried; if none has room, the pose moves as far as
/// the roomiest tried direction allows.
Pose inject_perturbation(const SimWorld& world, const Pose& pose, double magnitude, std::uint64_t seed);

/// Shortest 8-connected path length over free cells (diagonal cost sqrt(2)*cell).
double geodesic_distance(const SimWorld& world, Vec2 a, Vec2 b);

/// Cell-centre polyline of one shortest path from a to b, endpoints replaced by a and b.
std::vector<Vec2> shortest_path(const SimWorld& world, Vec2 a, Vec2 b);

/// Drops interior vertices whose removal keeps the polyline within
/// line-of-sight of free space.
std::vector<Vec2> simplify_path(const SimWorld& world, const std::vector<Vec2>& path);

// Portable graymap I/O (P2 or P5 in; P5 out). 0 = wall, >= 128 = free.
Mask read_pgm_mask(const std::filesystem::path& path);
void write_pgm_mask(const std::filesystem::path& path, const Mask& free_cells);

nlohmann::json to_json(const EpisodeSpec& e);
EpisodeSpec episode_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);

}  // namespace skelnav::sim
