#pragma once

// Depth panorama -> agent-centric navigable raster.
//
// Frames. The agent frame is z-up: x points forward, y to the left, z up,
// with the origin at the camera centre. A camera frame in the usual y-up
// convention would project floor points onto its x-z plane; here the same
// projection is onto x-y. The conversion happens once, in
// depth_to_pointcloud, and nothing downstream sees camera coordinates.
//
// Depth values are planar (distance along the optical axis), as produced by
// common simulator depth sensors.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "skelnav/geometry.hpp"

namespace skelnav::perception {

struct CameraIntrinsics {
    int width = 256;
    int height = 256;
    double horizontal_fov_deg = 90.0;
    double camera_height = 1.25;

    void validate() const;
    double focal_px() const;
};

/// Marks a pixel whose ray hit nothing.
inline constexpr float kNoReturn = std::numeric_limits<float>::infinity();

inline bool is_valid_depth(float d) { return std::isfinite(d) && d > 0.0F; }

struct DepthFrame {
    int width = 0;
    int height = 0;
    std::vector<float> depth;  // row-major, metres

    float at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
};

/// One timestep's panoramic bundle. `pose` is the simulator's ground-truth
/// capture pose; it stands in for the RGB channel, which the scripted
/// providers read as symbolic labels.
struct Observation {
    std::vector<DepthFrame> frames;
    std::vector<double> headings_deg;  // relative to agent forward
    int timestep = 0;
    std::optional<Pose> pose;

    void validate() const;
    double view_spacing_deg() const;
    /// Index of the view whose heading is nearest `heading_deg` (circularly).
    /// Exact ties go away from the first view's heading, matching round-half-away-from-zero.
    std::size_t nearest_view(double heading_deg) const;
    /// Index of the view at heading 0 (or nearest to it).
    std::size_t front_view() const { return nearest_view(0.0); }
};

struct Point3 {
    double x = 0.0;  // forward
    double y = 0.0;  // left
    double z = 0.0;  // up, relative to camera
};

struct PointCloud {
    std::vector<Point3> points;
};

struct PerceptionConfig {
    double height_threshold = -1.0;
    double planning_radius = 5.0;
    double cell_size = 0.02;
    int smoothing_kernel = 75;
    /// Radius (metres) of the near zone the camera cannot see the floor in;
    /// see fill_blind_zone. 0 disables it.
    double blind_fill_radius = 1.5;

    void validate() const;
};

/// Agent-centric raster. Cell (r, c) covers agent-frame
/// x in [origin.x + r*cell, origin.x + (r+1)*cell) and
/// y in [origin.y + c*cell, origin.y + (c+1)*cell).
struct OccupancyGrid {
    Mask cells;  // 1 = navigable
    double cell_size = 0.02;
    Vec2 origin;
    Cell agent_cell;

    /// Agent-frame coordinates of a cell centre.
    Vec2 cell_center(Cell p) const;
    /// Cell containing an agent-frame point, which may be out of bounds.
    Cell cell_of(Vec2 p) const;
};

/// Empty (all non-navigable) grid sized for `cfg`.
OccupancyGrid make_empty_grid(const PerceptionConfig& cfg);

PointCloud depth_to_pointcloud(const DepthFrame& frame, double heading_deg, const CameraIntrinsics& intrinsics);

PointCloud merge_panorama(const Observation& obs, const CameraIntrinsics& intrinsics);

OccupancyGrid extract_navigable_region(const PointCloud& cloud, const PerceptionConfig& cfg);

/// Marks cells within cfg.blind_fill_radius of the agent as navigable when no
/// obstacle point (z >= height_threshold) was observed nearer along their
/// azimuth (0.5 degree bins). A downward-limited camera never sees the floor
/// right around the agent; without this, a narrow corridor splits into a part
/// ahead and a part behind.
OccupancyGrid fill_blind_zone(const OccupancyGrid& grid, const PointCloud& cloud, const PerceptionConfig& cfg);

/// Hole fill, Gaussian smoothing, re-binarisation and largest-component filter.
OccupancyGrid refine_region(const OccupancyGrid& grid, const PerceptionConfig& cfg);

/// Sigma used for a given odd kernel size (the OpenCV convention for sigma <= 0).
double gaussian_sigma_for_kernel(int kernel);

/// Normalised 1-D Gaussian taps of length `kernel`.
std::vector<double> gaussian_kernel(int kernel);

/// Separable Gaussian blur with zero padding outside the raster.
Raster<float> gaussian_blur(const Raster<float>& in, int kernel);

/// Marks every non-navigable cell not 4-reachable from the raster border.
Mask fill_holes(const Mask& in);

/// Keeps only the largest 8-connected component (first in row-major order on ties).
Mask largest_component(const Mask& in);

// Fixture format: one JSON header line {"width","height","heading_deg"}
// followed by width*height little-endian float32 depths, row-major.
void write_depth_frame(std::ostream& os, const DepthFrame& frame, double heading_deg);
DepthFrame read_depth_frame(std::istream& is, double* heading_deg = nullptr);

}  // namespace skelnav::perception
