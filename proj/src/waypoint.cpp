#include "skelnav/waypoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "skelnav/backends.hpp"

namespace skelnav::waypoint {

Waypoint from_local(Vec2 local, int id) {
    Waypoint w;
    w.local = local;
    w.distance = norm(local);
    w.heading_deg = w.distance == 0.0 ? 0.0 : wrap_degrees(rad2deg(std::atan2(local.y, local.x)));
    w.id = id;
    return w;
}

Vec2 polar_to_local(double distance, double heading_deg) {
    const double h = deg2rad(heading_deg);
    return {distance * std::cos(h), distance * std::sin(h)};
}

Waypoint fallback_waypoint() {
    Waypoint w;
    w.local = {0.0, 0.0};
    w.distance = 0.0;
    w.heading_deg = kFallbackHeadingDeg;
    w.id = 0;
    return w;
}

void WaypointConfig::validate() const {
    if (!(merge_radius >= 0.0)) throw InputError("merge_radius must be >= 0");
    if (!(min_exclusion >= 0.0)) throw InputError("min_exclusion must be >= 0");
}

bool DecisionSpace::contains(int id) const {
    return std::any_of(entries.begin(), entries.end(), [id](const auto& e) { return e.waypoint.id == id; });
}

const DecisionEntry& DecisionSpace::at(int id) const {
    for (const auto& e : entries) {
        if (e.waypoint.id == id) return e;
    }
    throw InputError("waypoint id " + std::to_string(id) + " is not in the decision space");
}

namespace {

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

double pixel_distance(Cell a, Cell b) { return std::hypot(a.row - b.row, a.col - b.col); }

Cell snap_to_mask(Cell p, const Mask& mask) {
    if (mask.in_bounds(p) && mask[p]) return p;
    Cell best = p;
    double best_d = std::numeric_limits<double>::infinity();
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (!mask(r, c)) continue;
            const double d = pixel_distance(p, {r, c});
            if (d < best_d) {
                best_d = d;
                best = {r, c};
            }
        }
    }
    return best;
}

}  // namespace

std::vector<Cell> merge_close(std::span<const Cell> pixels, double merge_radius, const Mask* snap_mask) {
    if (pixels.empty()) return {};
    // Clusters hold the original member pixels; representatives are recomputed each round.
    std::vector<std::vector<Cell>> clusters;
    for (const Cell p : pixels) clusters.push_back({p});

    auto representative = [&](const std::vector<Cell>& members) {
        double sr = 0.0;
        double sc = 0.0;
        for (const Cell m : members) {
            sr += m.row;
            sc += m.col;
        }
        const auto n = static_cast<double>(members.size());
        Cell c{static_cast<int>(std::round(sr / n)), static_cast<int>(std::round(sc / n))};
        return snap_mask ? snap_to_mask(c, *snap_mask) : c;
    };

    while (true) {
        std::vector<Cell> reps;
        reps.reserve(clusters.size());
        for (const auto& members : clusters) reps.push_back(representative(members));

        DisjointSets sets(reps.size());
        bool merged = false;
        for (std::size_t i = 0; i < reps.size(); ++i) {
            for (std::size_t j = i + 1; j < reps.size(); ++j) {
                if (pixel_distance(reps[i], reps[j]) <= merge_radius) {
                    sets.unite(i, j);
                    merged = true;
                }
            }
        }
        if (!merged) {
            std::sort(reps.begin(), reps.end());
            reps.erase(std::unique(reps.begin(), reps.end()), reps.end());
            return reps;
        }
        std::vector<std::vector<Cell>> next;
        std::vector<std::size_t> slot(clusters.size(), std::numeric_limits<std::size_t>::max());
        for (std::size_t i = 0; i < clusters.size(); ++i) {
            const std::size_t root = sets.find(i);
            if (slot[root] == std::numeric_limits<std::size_t>::max()) {
                slot[root] = next.size();
                next.emplace_back();
            }
            auto& dst = next[slot[root]];
            dst.insert(dst.end(), clusters[i].begin(), clusters[i].end());
        }
        clusters = std::move(next);
    }
}

Waypoint pixel_to_waypoint(Cell pixel, const perception::OccupancyGrid& grid) {
    if (!grid.cells.in_bounds(pixel))
        throw InputError("pixel (" + std::to_string(pixel.row) + ", " + std::to_string(pixel.col) +
                         ") is outside the grid");
    return from_local(grid.cell_center(pixel));
}

std::vector<Waypoint> filter_near(std::vector<Waypoint> waypoints, double min_exclusion) {
    std::erase_if(waypoints, [min_exclusion](const Waypoint& w) { return w.distance < min_exclusion; });
    return waypoints;
}

std::vector<Waypoint> structured_waypoints(const skeleton::SkeletonGraph& graph, const WaypointConfig& cfg) {
    cfg.validate();
    if (!graph.source) throw InputError("skeleton graph has no source grid");
    const auto selected = skeleton::select_by_degree(graph, cfg.degree_config);
    const auto merged = merge_close(selected, cfg.merge_radius, &graph.mask);
    std::vector<Waypoint> out;
    out.reserve(merged.size());
    for (const Cell p : merged) out.push_back(pixel_to_waypoint(p, *graph.source));
    return filter_near(std::move(out), cfg.min_exclusion);
}

WaypointPlan plan_waypoints(const perception::Observation& obs, const perception::CameraIntrinsics& camera,
                            const perception::PerceptionConfig& perception_cfg, const WaypointConfig& cfg) {
    const auto cloud = perception::merge_panorama(obs, camera);
    const auto raw = perception::fill_blind_zone(perception::extract_navigable_region(cloud, perception_cfg), cloud,
                                                 perception_cfg);
    auto region = std::make_shared<const perception::OccupancyGrid>(perception::refine_region(raw, perception_cfg));
    WaypointPlan plan{*region, skeleton::skeletonize(region), {}};
    plan.waypoints = structured_waypoints(plan.skeleton, cfg);
    return plan;
}

DecisionSpace assemble_decision_space(std::vector<Waypoint> waypoints, backends::DescriptionProvider& provider,
                                      const perception::Observation& obs) {
    DecisionSpace space;
    if (waypoints.empty()) {
        waypoints.push_back(fallback_waypoint());
        space.fallback = true;
    }
    std::stable_sort(waypoints.begin(), waypoints.end(), [](const Waypoint& a, const Waypoint& b) {
        const double ha = std::abs(a.heading_deg);
        const double hb = std::abs(b.heading_deg);
        if (ha != hb) return ha < hb;
        if (a.heading_deg != b.heading_deg) return a.heading_deg > b.heading_deg;
        return a.distance < b.distance;
    });
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
        Waypoint& w = waypoints[i];
        w.id = static_cast<int>(i);
        const std::size_t view = obs.nearest_view(w.heading_deg);
        std::string text;
        try {
            text = provider.describe_direction(obs, view, w);
        } catch (const BackendError& e) {
            throw BackendError("description for waypoint " + std::to_string(w.id) + " failed: " + e.what());
        }
        space.entries.push_back({w, std::move(text), view, obs.headings_deg[view]});
    }
    return space;
}

nlohmann::json to_json(const DecisionSpace& space) {
    auto arr = nlohmann::json::array();
    for (const auto& e : space.entries) {
        arr.push_back({{"id", e.waypoint.id},
                       {"distance_m", e.waypoint.distance},
                       {"heading_deg", e.waypoint.heading_deg},
                       {"description", e.description}});
    }
    return arr;
}

DecisionSpace decision_space_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw InputError("decision space must be a JSON array");
    DecisionSpace space;
    for (const auto& item : j) {
        DecisionEntry e;
        const double d = item.at("distance_m").get<double>();
        const double h = item.at("heading_deg").get<double>();
        e.waypoint = from_local(polar_to_local(d, h), item.at("id").get<int>());
        e.waypoint.distance = d;
        e.waypoint.heading_deg = h;
        e.description = item.at("description").get<std::string>();
        space.entries.push_back(std::move(e));
    }
    space.fallback = space.entries.size() == 1 && space.entries.front().waypoint.distance == 0.0;
    return space;
}

}  // namespace skelnav::waypoint
