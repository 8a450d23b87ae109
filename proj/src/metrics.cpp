#include "skelnav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace skelnav::metrics {

using nlohmann::json;

double trajectory_length(std::span<const Vec2> path) {
    double total = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) total += distance(path[i - 1], path[i]);
    return total;
}

double navigation_error(const sim::SimWorld& world, Vec2 final_position, Vec2 goal) {
    return sim::geodesic_distance(world, final_position, goal);
}

int success(double ne, double threshold) { return ne < threshold ? 1 : 0; }

int oracle_success(const sim::SimWorld& world, std::span<const Vec2> path, Vec2 goal, double threshold) {
    for (const Vec2 p : path) {
        if (sim::geodesic_distance(world, p, goal) < threshold) return 1;
    }
    return 0;
}

double spl(int sr, double shortest, double tl) {
    if (shortest < 0.0 || tl < 0.0) throw InputError("spl needs non-negative lengths");
    if (shortest == 0.0) return sr;
    if (!std::isfinite(shortest)) return 0.0;  // goal unreachable
    return sr * shortest / std::max(tl, shortest);
}

double dtw(std::span<const Vec2> path, std::span<const Vec2> ref, DtwCost cost, const sim::SimWorld* world) {
    if (path.empty() || ref.empty()) throw InputError("dtw needs non-empty paths");
    if (cost == DtwCost::Geodesic && !world) throw InputError("geodesic dtw needs a world");
    auto d = [&](Vec2 a, Vec2 b) {
        return cost == DtwCost::Euclidean ? distance(a, b) : sim::geodesic_distance(*world, a, b);
    };
    const std::size_t n = path.size();
    const std::size_t m = ref.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = d(path[i - 1], ref[j - 1]) + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double ndtw_from_dtw(double dtw_value, std::size_t ref_size, double d_th) {
    if (ref_size == 0) throw InputError("reference path is empty");
    return std::exp(-dtw_value / (static_cast<double>(ref_size) * d_th));
}

double ndtw(std::span<const Vec2> path, std::span<const Vec2> ref, double d_th) {
    return ndtw_from_dtw(dtw(path, ref), ref.size(), d_th);
}

double sdtw(int sr, double ndtw_value) { return sr * ndtw_value; }

EpisodeMetrics evaluate(const sim::SimWorld& world, const regulator::EpisodeRecord& record, DtwCost cost) {
    const auto path = regulator::trajectory(record);
    EpisodeMetrics m;
    m.episode_id = record.episode_id;
    m.failed = record.failed;
    m.tl = trajectory_length(path);
    m.ne = navigation_error(world, path.back(), record.goal);
    m.sr = record.failed ? 0 : success(m.ne);
    m.osr = oracle_success(world, path, record.goal);
    m.spl = spl(m.sr, sim::geodesic_distance(world, record.start.position, record.goal), m.tl);
    const auto& ref = record.reference_path.empty() ? std::vector<Vec2>{record.start.position, record.goal}
                                                    : record.reference_path;
    m.ndtw = ndtw_from_dtw(dtw(path, ref, cost, &world), ref.size());
    m.sdtw = sdtw(m.sr, m.ndtw);
    return m;
}

MetricReport aggregate(std::vector<EpisodeMetrics> episodes, DtwCost cost) {
    MetricReport r;
    r.cost = cost;
    r.episodes = std::move(episodes);
    if (r.episodes.empty()) return r;
    const double n = static_cast<double>(r.episodes.size());
    for (const auto& e : r.episodes) {
        r.mean.tl += e.tl;
        r.mean.ne += e.ne;
        r.mean_sr += e.sr;
        r.mean_osr += e.osr;
        r.mean.spl += e.spl;
        r.mean.ndtw += e.ndtw;
        r.mean.sdtw += e.sdtw;
    }
    for (double* v : {&r.mean.tl, &r.mean.ne, &r.mean_sr, &r.mean_osr, &r.mean.spl, &r.mean.ndtw, &r.mean.sdtw})
        *v /= n;
    return r;
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json to_json(const MetricReport& report) {
    json eps = json::array();
    for (const auto& e : report.episodes) {
        eps.push_back({{"episode_id", e.episode_id},
                       {"failed", e.failed},
                       {"TL", e.tl},
                       {"NE", finite_or_null(e.ne)},
                       {"NDTW", e.ndtw},
                       {"OSR", e.osr},
                       {"SR", e.sr},
                       {"SPL", e.spl},
                       {"SDTW", e.sdtw}});
    }
    return {{"aggregate",
             {{"TL", report.mean.tl},
              {"NE", finite_or_null(report.mean.ne)},
              {"NDTW", 100.0 * report.mean.ndtw},
              {"OSR", 100.0 * report.mean_osr},
              {"SR", 100.0 * report.mean_sr},
              {"SPL", 100.0 * report.mean.spl},
              {"SDTW", 100.0 * report.mean.sdtw}}},
            {"episodes", eps},
            {"meta",
             {{"count", report.episodes.size()},
              {"success_threshold_m", kSuccessThreshold},
              {"dtw_cost", report.cost == DtwCost::Euclidean ? "euclidean" : "geodesic"},
              {"sdtw_convention", "success-weighted nDTW"}}}};
}

}  // namespace skelnav::metrics
