#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skelnav/geometry.hpp"
#include "skelnav/perception.hpp"
#include "skelnav/skeleton.hpp"

namespace skelnav::backends {
class DescriptionProvider;
}

namespace skelnav::waypoint {

/// Candidate move in the agent frame. Heading is counterclockwise-positive
/// with forward = 0 and lies in (-180, 180].
struct Waypoint {
    Vec2 local;
    double distance = 0.0;
    double heading_deg = 0.0;
    int id = -1;

    bool rotate_only() const { return distance == 0.0; }
};

Waypoint from_local(Vec2 local, int id = -1);
Vec2 polar_to_local(double distance, double heading_deg);

/// Rotate-in-place candidate used when no waypoint survives filtering.
Waypoint fallback_waypoint();
inline constexpr double kFallbackHeadingDeg = 90.0;

struct WaypointConfig {
    double merge_radius = 10.0;  // pixels
    double min_exclusion = 1.0;  // metres
    skeleton::DegreeConfig degree_config = skeleton::DegreeConfig::Deg1;

    void validate() const;
};

struct DecisionEntry {
    Waypoint waypoint;
    std::string description;
    std::size_t view_index = 0;
    double view_heading_deg = 0.0;  // heading of the view the description came from
};

/// Simulator ground truth handed to scripted providers. Never serialised.
struct OracleContext {
    Pose agent_pose;
    std::optional<Vec2> target;
};

struct DecisionSpace {
    std::vector<DecisionEntry> entries;
    std::string scene;  // panoramic summary
    bool fallback = false;
    std::optional<OracleContext> oracle;

    bool contains(int id) const;
    const DecisionEntry& at(int id) const;
};

/// Transitive clustering within `merge_radius` (pixels, inclusive). Each
/// cluster collapses to its centroid, rounded half away from zero and, when a
/// mask is given and the rounded centroid is off it, snapped to the nearest
/// mask pixel (row-major first on ties). Clustering repeats on the cluster
/// representatives until no two lie within the radius, so the result is a
/// fixpoint. Output is sorted row-major.
std::vector<Cell> merge_close(std::span<const Cell> pixels, double merge_radius, const Mask* snap_mask = nullptr);

Waypoint pixel_to_waypoint(Cell pixel, const perception::OccupancyGrid& grid);

/// Drops waypoints strictly closer than `min_exclusion`.
std::vector<Waypoint> filter_near(std::vector<Waypoint> waypoints, double min_exclusion);

/// Skeleton -> degree selection -> merge -> agent-frame waypoints -> near filter.
std::vector<Waypoint> structured_waypoints(const skeleton::SkeletonGraph& graph, const WaypointConfig& cfg);

/// Full structured waypoint pipeline from one observation.
struct WaypointPlan {
    perception::OccupancyGrid region;
    skeleton::SkeletonGraph skeleton;
    std::vector<Waypoint> waypoints;
};
WaypointPlan plan_waypoints(const perception::Observation& obs, const perception::CameraIntrinsics& camera,
                            const perception::PerceptionConfig& perception_cfg, const WaypointConfig& cfg);

/// Orders by ascending |heading| (left before right on ties, then nearer
/// first), assigns ids 0..n-1 in that order and requests one directional
/// description per waypoint from the view nearest its heading. An empty list
/// becomes the single rotate-in-place fallback.
DecisionSpace assemble_decision_space(std::vector<Waypoint> waypoints, backends::DescriptionProvider& provider,
                                      const perception::Observation& obs);

nlohmann::json to_json(const DecisionSpace& space);
DecisionSpace decision_space_from_json(const nlohmann::json& j);

}  // namespace skelnav::waypoint
