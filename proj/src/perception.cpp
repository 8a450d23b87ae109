#include "skelnav/perception.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <cstring>
#include <istream>
#include <ostream>
#include <queue>
#include <string>

#include <nlohmann/json.hpp>

namespace skelnav::perception {

void CameraIntrinsics::validate() const {
    if (width <= 0 || height <= 0) throw InputError("camera width and height must be positive");
    if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0))
        throw InputError("horizontal fov must lie in (0, 180) degrees");
    if (!(camera_height > 0.0)) throw InputError("camera height must be positive");
}

double CameraIntrinsics::focal_px() const {
    return 0.5 * width / std::tan(deg2rad(horizontal_fov_deg) * 0.5);
}

void PerceptionConfig::validate() const {
    if (!(cell_size > 0.0)) throw InputError("cell_size must be positive");
    if (!(planning_radius > 0.0)) throw InputError("planning radius must be positive");
    if (smoothing_kernel < 1 || smoothing_kernel % 2 == 0)
        throw InputError("smoothing kernel must be odd and >= 1");
    if (!std::isfinite(height_threshold)) throw InputError("height threshold must be finite");
    if (!(blind_fill_radius >= 0.0)) throw InputError("blind fill radius must be >= 0");
}

void Observation::validate() const {
    if (frames.size() != headings_deg.size()) throw InputError("observation frames and headings differ in count");
    if (frames.empty()) return;
    const double spacing = 360.0 / static_cast<double>(frames.size());
    for (std::size_t i = 1; i < headings_deg.size(); ++i) {
        const double step = headings_deg[i] - headings_deg[i - 1];
        if (!(step > 0.0)) throw InputError("observation headings must be strictly increasing");
        if (std::abs(step - spacing) > 1e-6) throw InputError("observation headings must be evenly spaced");
    }
    for (const auto& f : frames) {
        if (f.width <= 0 || f.height <= 0 ||
            f.depth.size() != static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height))
            throw InputError("depth frame size does not match its dimensions");
        for (float d : f.depth) {
            if (std::isnan(d) || d < 0.0F) throw InputError("depth values must be >= 0 or the no-return sentinel");
        }
    }
}

double Observation::view_spacing_deg() const {
    if (headings_deg.empty()) throw InputError("observation has no views");
    return 360.0 / static_cast<double>(headings_deg.size());
}

std::size_t Observation::nearest_view(double heading_deg) const {
    const double spacing = view_spacing_deg();
    const auto n = static_cast<long long>(headings_deg.size());
    const double rel = wrap_degrees(heading_deg - headings_deg.front());
    long long k = std::llround(rel / spacing);
    k = ((k % n) + n) % n;
    return static_cast<std::size_t>(k);
}

Vec2 OccupancyGrid::cell_center(Cell p) const {
    return {origin.x + (p.row + 0.5) * cell_size, origin.y + (p.col + 0.5) * cell_size};
}

Cell OccupancyGrid::cell_of(Vec2 p) const {
    return {static_cast<int>(std::floor((p.x - origin.x) / cell_size)),
            static_cast<int>(std::floor((p.y - origin.y) / cell_size))};
}

OccupancyGrid make_empty_grid(const PerceptionConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(std::ceil(2.0 * cfg.planning_radius / cfg.cell_size - 1e-9));
    OccupancyGrid g;
    g.cells = Mask(n, n, 0);
    g.cell_size = cfg.cell_size;
    const double half = 0.5 * n * cfg.cell_size;
    g.origin = {-half, -half};
    g.agent_cell = g.cell_of({0.0, 0.0});
    return g;
}

PointCloud depth_to_pointcloud(const DepthFrame& frame, double heading_deg, const CameraIntrinsics& intrinsics) {
    intrinsics.validate();
    if (frame.width != intrinsics.width || frame.height != intrinsics.height)
        throw InputError("depth frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                         " but intrinsics are " + std::to_string(intrinsics.width) + "x" +
                         std::to_string(intrinsics.height));
    if (frame.depth.size() != static_cast<std::size_t>(frame.width) * static_cast<std::size_t>(frame.height))
        throw InputError("depth frame size does not match its dimensions");

    const double f = intrinsics.focal_px();
    const double cx = 0.5 * (frame.width - 1);
    const double cy = 0.5 * (frame.height - 1);
    const double ch = std::cos(deg2rad(heading_deg));
    const double sh = std::sin(deg2rad(heading_deg));

    std::vector<double> left(frame.width);
    for (int c = 0; c < frame.width; ++c) left[c] = (cx - c) / f;

    PointCloud cloud;
    cloud.points.reserve(frame.depth.size());
    for (int r = 0; r < frame.height; ++r) {
        const double up = (cy - r) / f;
        for (int c = 0; c < frame.width; ++c) {
            const float d = frame.at(r, c);
            if (!is_valid_depth(d)) continue;
            const double fwd = d;
            const double lft = d * left[c];
            cloud.points.push_back({ch * fwd - sh * lft, sh * fwd + ch * lft, d * up});
        }
    }
    return cloud;
}

PointCloud merge_panorama(const Observation& obs, const CameraIntrinsics& intrinsics) {
    if (obs.frames.empty()) throw InputError("observation contains no frames");
    if (obs.frames.size() != obs.headings_deg.size()) throw InputError("observation frames and headings differ in count");
    PointCloud merged;
    for (std::size_t i = 0; i < obs.frames.size(); ++i) {
        auto part = depth_to_pointcloud(obs.frames[i], obs.headings_deg[i], intrinsics);
        merged.points.insert(merged.points.end(), part.points.begin(), part.points.end());
    }
    return merged;
}

OccupancyGrid extract_navigable_region(const PointCloud& cloud, const PerceptionConfig& cfg) {
    OccupancyGrid grid = make_empty_grid(cfg);
    const double r2 = cfg.planning_radius * cfg.planning_radius;
    for (const auto& p : cloud.points) {
        if (!(p.z < cfg.height_threshold)) continue;
        if (!(p.x * p.x + p.y * p.y < r2)) continue;
        const Cell c = grid.cell_of({p.x, p.y});
        if (grid.cells.in_bounds(c)) grid.cells[c] = 1;
    }
    return grid;
}

OccupancyGrid fill_blind_zone(const OccupancyGrid& grid, const PointCloud& cloud, const PerceptionConfig& cfg) {
    OccupancyGrid out = grid;
    if (cfg.blind_fill_radius <= 0.0) return out;
    constexpr int kBins = 720;
    auto bin_of = [](double x, double y) {
        const double a = std::atan2(y, x) * (kBins / (2.0 * std::numbers::pi));
        return (static_cast<int>(std::floor(a)) % kBins + kBins) % kBins;
    };
    std::vector<double> nearest(kBins, std::numeric_limits<double>::infinity());
    const double r2 = cfg.planning_radius * cfg.planning_radius;
    for (const auto& p : cloud.points) {
        if (p.z < cfg.height_threshold) continue;
        const double d2 = p.x * p.x + p.y * p.y;
        if (!(d2 < r2) || d2 == 0.0) continue;
        auto& n = nearest[bin_of(p.x, p.y)];
        n = std::min(n, std::sqrt(d2));
    }
    const int span = static_cast<int>(std::ceil(cfg.blind_fill_radius / grid.cell_size)) + 1;
    for (int dr = -span; dr <= span; ++dr) {
        for (int dc = -span; dc <= span; ++dc) {
            const Cell c{grid.agent_cell.row + dr, grid.agent_cell.col + dc};
            if (!out.cells.in_bounds(c)) continue;
            const Vec2 q = grid.cell_center(c);
            const double d = norm(q);
            if (d > cfg.blind_fill_radius) continue;
            if (d == 0.0 || d < nearest[bin_of(q.x, q.y)]) out.cells[c] = 1;
        }
    }
    return out;
}

double gaussian_sigma_for_kernel(int kernel) {
    return 0.3 * ((kernel - 1) * 0.5 - 1.0) + 0.8;
}

std::vector<double> gaussian_kernel(int kernel) {
    if (kernel < 1 || kernel % 2 == 0) throw InputError("gaussian kernel size must be odd and >= 1");
    const double sigma = gaussian_sigma_for_kernel(kernel);
    const int half = kernel / 2;
    std::vector<double> taps(kernel);
    double sum = 0.0;
    for (int i = 0; i < kernel; ++i) {
        const double x = i - half;
        taps[i] = std::exp(-(x * x) / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

Raster<float> gaussian_blur(const Raster<float>& in, int kernel) {
    const auto taps = gaussian_kernel(kernel);
    const int half = kernel / 2;
    const int rows = in.rows();
    const int cols = in.cols();

    Raster<float> tmp(rows, cols, 0.0F);
    for (int r = 0; r < rows; ++r) {
        bool any = false;
        for (int c = 0; c < cols && !any; ++c) any = in(r, c) != 0.0F;
        if (!any) continue;
        for (int c = 0; c < cols; ++c) {
            const int lo = std::max(0, c - half);
            const int hi = std::min(cols - 1, c + half);
            double acc = 0.0;
            for (int k = lo; k <= hi; ++k) acc += taps[k - c + half] * in(r, k);
            tmp(r, c) = static_cast<float>(acc);
        }
    }

    Raster<float> out(rows, cols, 0.0F);
    std::vector<double> acc(cols);
    for (int r = 0; r < rows; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const int lo = std::max(0, r - half);
        const int hi = std::min(rows - 1, r + half);
        for (int k = lo; k <= hi; ++k) {
            const double w = taps[k - r + half];
            const float* src = &tmp(k, 0);
            for (int c = 0; c < cols; ++c) acc[c] += w * src[c];
        }
        for (int c = 0; c < cols; ++c) out(r, c) = static_cast<float>(acc[c]);
    }
    return out;
}

Mask fill_holes(const Mask& in) {
    const int rows = in.rows();
    const int cols = in.cols();
    Mask outside(rows, cols, 0);
    std::queue<Cell> q;
    auto seed = [&](int r, int c) {
        if (!in(r, c) && !outside(r, c)) {
            outside(r, c) = 1;
            q.push({r, c});
        }
    };
    for (int r = 0; r < rows; ++r) {
        seed(r, 0);
        seed(r, cols - 1);
    }
    for (int c = 0; c < cols; ++c) {
        seed(0, c);
        seed(rows - 1, c);
    }
    constexpr int dr[4] = {-1, 1, 0, 0};
    constexpr int dc[4] = {0, 0, -1, 1};
    while (!q.empty()) {
        const Cell p = q.front();
        q.pop();
        for (int k = 0; k < 4; ++k) {
            const int nr = p.row + dr[k];
            const int nc = p.col + dc[k];
            if (in.in_bounds(nr, nc)) seed(nr, nc);
        }
    }
    Mask out(rows, cols, 0);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = outside.data()[i] ? 0 : 1;
    return out;
}

Mask largest_component(const Mask& in) {
    int n = 0;
    const auto labels = label_components8(in, &n);
    Mask out(in.rows(), in.cols(), 0);
    if (n == 0) return out;
    std::vector<std::size_t> sizes(static_cast<std::size_t>(n) + 1, 0);
    for (int l : labels.data()) ++sizes[l];
    int best = 1;
    for (int l = 2; l <= n; ++l) {
        if (sizes[l] > sizes[best]) best = l;
    }
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = labels.data()[i] == best ? 1 : 0;
    return out;
}

OccupancyGrid refine_region(const OccupancyGrid& grid, const PerceptionConfig& cfg) {
    cfg.validate();
    if (grid.cells.empty()) throw InputError("cannot refine an empty raster");
    OccupancyGrid out = grid;
    const Mask filled = fill_holes(grid.cells);

    Raster<float> soft(filled.rows(), filled.cols(), 0.0F);
    for (std::size_t i = 0; i < soft.size(); ++i) soft.data()[i] = filled.data()[i] ? 1.0F : 0.0F;
    const auto blurred = gaussian_blur(soft, cfg.smoothing_kernel);

    Mask binary(filled.rows(), filled.cols(), 0);
    for (std::size_t i = 0; i < binary.size(); ++i) binary.data()[i] = blurred.data()[i] >= 0.5F ? 1 : 0;
    out.cells = largest_component(binary);
    return out;
}

namespace {

void write_le_floats(std::ostream& os, const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    } else {
        for (float f : v) {
            auto bits = std::bit_cast<std::uint32_t>(f);
            char b[4];
            for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
            os.write(b, 4);
        }
    }
}

}  // namespace

void write_depth_frame(std::ostream& os, const DepthFrame& frame, double heading_deg) {
    nlohmann::json header = {{"width", frame.width}, {"height", frame.height}, {"heading_deg", heading_deg}};
    os << header.dump() << '\n';
    write_le_floats(os, frame.depth);
}

DepthFrame read_depth_frame(std::istream& is, double* heading_deg) {
    std::string line;
    if (!std::getline(is, line)) throw InputError("depth frame: missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("depth frame: bad header: ") + e.what());
    }
    DepthFrame f;
    try {
        f.width = header.at("width").get<int>();
        f.height = header.at("height").get<int>();
        if (heading_deg) *heading_deg = header.at("heading_deg").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("depth frame: bad header: ") + e.what());
    }
    if (f.width <= 0 || f.height <= 0) throw InputError("depth frame: non-positive dimensions");
    const std::size_t n = static_cast<std::size_t>(f.width) * static_cast<std::size_t>(f.height);
    std::vector<unsigned char> raw(n * 4);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size()) throw InputError("depth frame: truncated payload");
    f.depth.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
        f.depth[i] = std::bit_cast<float>(bits);
    }
    return f;
}

}  // namespace skelnav::perception
