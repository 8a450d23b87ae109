#pragma once

// Navigation metrics over executed trajectories. Success is strict: NE < 3 m.

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelnav/geometry.hpp"
#include "skelnav/regulator.hpp"
#include "skelnav/simenv.hpp"

namespace skelnav::metrics {

inline constexpr double kSuccessThreshold = 3.0;

double trajectory_length(std::span<const Vec2> path);
double navigation_error(const sim::SimWorld& world, Vec2 final_position, Vec2 goal);
int success(double ne, double threshold = kSuccessThreshold);
int oracle_success(const sim::SimWorld& world, std::span<const Vec2> path, Vec2 goal,
                   double threshold = kSuccessThreshold);
double spl(int sr, double shortest, double tl);

/// Point-to-point cost used inside DTW.
enum class DtwCost { Euclidean, Geodesic };

/// Boundary-matched monotone alignment cost. The geodesic cost needs a world.
double dtw(std::span<const Vec2> path, std::span<const Vec2> ref, DtwCost cost = DtwCost::Euclidean,
           const sim::SimWorld* world = nullptr);
double ndtw_from_dtw(double dtw_value, std::size_t ref_size, double d_th = kSuccessThreshold);
double ndtw(std::span<const Vec2> path, std::span<const Vec2> ref, double d_th = kSuccessThreshold);
double sdtw(int sr, double ndtw_value);

struct EpisodeMetrics {
    std::string episode_id;
    double tl = 0.0;
    double ne = 0.0;
    int sr = 0;
    int osr = 0;
    double spl = 0.0;
    double ndtw = 0.0;
    double sdtw = 0.0;
    bool failed = false;
};

struct MetricReport {
    std::vector<EpisodeMetrics> episodes;
    EpisodeMetrics mean;  // aggregate means; sr/osr fields unused here
    double mean_sr = 0.0;
    double mean_osr = 0.0;
    DtwCost cost = DtwCost::Euclidean;
};

/// Failed records count as SR 0 (and therefore SPL 0 and SDTW 0).
EpisodeMetrics evaluate(const sim::SimWorld& world, const regulator::EpisodeRecord& record,
                        DtwCost cost = DtwCost::Euclidean);
MetricReport aggregate(std::vector<EpisodeMetrics> episodes, DtwCost cost = DtwCost::Euclidean);

/// {"aggregate": {TL, NE, NDTW, OSR, SR, SPL, SDTW}, "episodes": [...], "meta": {...}}.
/// Rates are reported in percent, distances in metres.
nlohmann::json to_json(const MetricReport& report);

}  // namespace skelnav::metrics
