#include "skelnav/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <mutex>
#include <queue>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace skelnav::sim {

using nlohmann::json;

struct SimWorld::FieldCache {
    std::mutex mutex;
    std::map<std::pair<int, int>, std::shared_ptr<const std::vector<double>>> fields;
};

bool Region::contains(Vec2 p) const {
    bool inside = false;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = polygon[i];
        const Vec2 b = polygon[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

SimWorld::SimWorld(Mask free_cells, double cell_size)
    : free_(std::move(free_cells)), cell_size_(cell_size), cache_(std::make_shared<FieldCache>()) {
    if (free_.empty()) throw InputError("world bitmap is empty");
    if (!(cell_size_ > 0.0)) throw InputError("world cell_size must be positive");
}

Cell SimWorld::cell_of(Vec2 p) const {
    const int col = static_cast<int>(std::floor(p.x / cell_size_));
    const int iy = static_cast<int>(std::floor(p.y / cell_size_));
    return {free_.rows() - 1 - iy, col};
}

Vec2 SimWorld::cell_center(Cell c) const {
    return {(c.col + 0.5) * cell_size_, (free_.rows() - c.row - 0.5) * cell_size_};
}

bool SimWorld::is_free(Vec2 p) const {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
    return is_free(cell_of(p));
}

double SimWorld::cast_ray(Vec2 origin, double angle_deg, double max_range) const {
    const double gx = origin.x / cell_size_;
    const double gy = origin.y / cell_size_;
    int ix = static_cast<int>(std::floor(gx));
    int iy = static_cast<int>(std::floor(gy));
    auto occupied = [&](int x, int y) { return !is_free(Cell{free_.rows() - 1 - y, x}); };
    if (occupied(ix, iy)) return 0.0;

    const double dx = std::cos(deg2rad(angle_deg));
    const double dy = std::sin(deg2rad(angle_deg));
    constexpr double kTiny = 1e-12;
    const int step_x = dx > 0 ? 1 : -1;
    const int step_y = dy > 0 ? 1 : -1;
    // Next grid line to cross along each axis.
    int next_x = dx > 0 ? ix + 1 : ix;
    int next_y = dy > 0 ? iy + 1 : iy;
    const double max_t = max_range / cell_size_;

    while (true) {
        const double tx = std::abs(dx) > kTiny ? (next_x - gx) / dx : kUnreachable;
        const double ty = std::abs(dy) > kTiny ? (next_y - gy) / dy : kUnreachable;
        double t;
        if (tx < ty) {
            t = tx;
            ix += step_x;
            next_x += step_x;
        } else {
            t = ty;
            iy += step_y;
            next_y += step_y;
        }
        if (t >= max_t) return max_range;
        if (occupied(ix, iy)) return t * cell_size_;
    }
}

const Region* SimWorld::region_at(Vec2 p) const {
    for (const auto& r : regions) {
        if (r.contains(p)) return &r;
    }
    return nullptr;
}

std::shared_ptr<const std::vector<double>> SimWorld::distance_field(Vec2 target) const {
    const Cell t = cell_of(target);
    if (!is_free(t)) throw InputError("geodesic target lies in a wall or outside the map");
    const auto key = std::make_pair(t.row, t.col);
    {
        std::lock_guard lock(cache_->mutex);
        if (auto it = cache_->fields.find(key); it != cache_->fields.end()) return it->second;
    }

    const int rows = free_.rows();
    const int cols = free_.cols();
    auto field = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows) * cols, kUnreachable);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    const int start = t.row * cols + t.col;
    (*field)[start] = 0.0;
    open.push({0.0, start});
    const double diag = std::sqrt(2.0) * cell_size_;
    while (!open.empty()) {
        const auto [d, idx] = open.top();
        open.pop();
        if (d > (*field)[idx]) continue;
        const int r = idx / cols;
        const int c = idx % cols;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int nr = r + dr;
                const int nc = c + dc;
                if (!free_.in_bounds(nr, nc) || !free_(nr, nc)) continue;
                const double nd = d + ((dr != 0 && dc != 0) ? diag : cell_size_);
                const int nidx = nr * cols + nc;
                if (nd < (*field)[nidx]) {
                    (*field)[nidx] = nd;
                    open.push({nd, nidx});
                }
            }
        }
    }

    std::lock_guard lock(cache_->mutex);
    auto [it, inserted] = cache_->fields.emplace(key, std::move(field));
    return it->second;
}

const EpisodeSpec& SimWorld::episode(const std::string& id) const {
    for (const auto& e : episodes) {
        if (e.id == id) return e;
    }
    throw InputError("unknown episode id '" + id + "'");
}

double geodesic_distance(const SimWorld& world, Vec2 a, Vec2 b) {
    if (!world.is_free(a)) throw InputError("geodesic_distance: first point is not in free space");
    if (!world.is_free(b)) throw InputError("geodesic_distance: second point is not in free space");
    const auto field = world.distance_field(b);
    const Cell c = world.cell_of(a);
    return (*field)[static_cast<std::size_t>(c.row) * world.free_cells().cols() + c.col];
}

std::vector<Vec2> shortest_path(const SimWorld& world, Vec2 a, Vec2 b) {
    const double total = geodesic_distance(world, a, b);
    if (!std::isfinite(total)) return {};
    const auto field = world.distance_field(b);
    const auto& free = world.free_cells();
    const int cols = free.cols();
    auto value = [&](Cell c) { return (*field)[static_cast<std::size_t>(c.row) * cols + c.col]; };
    const double diag = std::sqrt(2.0) * world.cell_size();

    std::vector<Vec2> path{a};
    Cell cur = world.cell_of(a);
    const Cell goal = world.cell_of(b);
    while (cur != goal) {
        Cell best = cur;
        double best_cost = kUnreachable;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const Cell n{cur.row + dr, cur.col + dc};
                if (!world.is_free(n) || !(value(n) < value(cur))) continue;
                const double cost = value(n) + ((dr != 0 && dc != 0) ? diag : world.cell_size());
                if (cost < best_cost) {
                    best = n;
                    best_cost = cost;
                }
            }
        }
        if (best == cur) break;
        cur = best;
        if (cur != goal) path.push_back(world.cell_center(cur));
    }
    path.push_back(b);
    return path;
}

namespace {

bool segment_free(const SimWorld& world, Vec2 a, Vec2 b) {
    const double len = distance(a, b);
    const int n = std::max(1, static_cast<int>(std::ceil(len / (0.25 * world.cell_size()))));
    for (int i = 0; i <= n; ++i) {
        const double s = static_cast<double>(i) / n;
        if (!world.is_free(a + s * (b - a))) return false;
    }
    return true;
}

}  // namespace

std::vector<Vec2> simplify_path(const SimWorld& world, const std::vector<Vec2>& path) {
    if (path.size() <= 2) return path;
    std::vector<Vec2> out{path.front()};
    std::size_t anchor = 0;
    while (anchor + 1 < path.size()) {
        std::size_t next = anchor + 1;
        for (std::size_t j = path.size() - 1; j > anchor + 1; --j) {
            if (segment_free(world, path[anchor], path[j])) {
                next = j;
                break;
            }
        }
        out.push_back(path[next]);
        anchor = next;
    }
    return out;
}

perception::DepthFrame render_view(const SimWorld& world, const Pose& pose, double heading_deg,
                                   const perception::CameraIntrinsics& intrinsics) {
    intrinsics.validate();
    perception::DepthFrame frame;
    frame.width = intrinsics.width;
    frame.height = intrinsics.height;
    frame.depth.assign(static_cast<std::size_t>(frame.width) * frame.height, perception::kNoReturn);

    const double f = intrinsics.focal_px();
    const double cx = 0.5 * (frame.width - 1);
    const double cy = 0.5 * (frame.height - 1);
    const double cam_h = intrinsics.camera_height;

    std::vector<double> up(frame.height);
    for (int r = 0; r < frame.height; ++r) up[r] = (cy - r) / f;

    for (int c = 0; c < frame.width; ++c) {
        const double left = (cx - c) / f;
        const double azimuth = pose.yaw_deg + heading_deg + rad2deg(std::atan(left));
        const double wall = world.cast_ray(pose.position, azimuth);
        // Forward (planar) depth at which the column's rays meet the wall plane.
        const double wall_depth = wall / std::sqrt(1.0 + left * left);
        for (int r = 0; r < frame.height; ++r) {
            double best = perception::kNoReturn;
            const double hit_height = cam_h + up[r] * wall_depth;
            if (hit_height >= 0.0 && hit_height <= world.wall_height) best = wall_depth;
            if (up[r] < 0.0) {
                const double floor_depth = cam_h / -up[r];
                if (floor_depth < best) best = floor_depth;
            }
            frame.depth[static_cast<std::size_t>(r) * frame.width + c] = static_cast<float>(best);
        }
    }
    return frame;
}

perception::Observation render_panorama(const SimWorld& world, const Pose& pose, int n_views,
                                        const perception::CameraIntrinsics& intrinsics, int timestep) {
    if (n_views < 1 || 360 % n_views != 0) throw InputError("n_views must be >= 1 and divide 360");
    if (!world.is_free(pose.position)) throw InputError("cannot render from a pose inside a wall");
    perception::Observation obs;
    obs.timestep = timestep;
    obs.pose = pose;
    const double spacing = 360.0 / n_views;
    for (int i = 0; i < n_views; ++i) {
        obs.headings_deg.push_back(i * spacing);
        obs.frames.push_back(render_view(world, pose, i * spacing, intrinsics));
    }
    return obs;
}

Pose step(const SimWorld& world, const Pose& pose, const Action& action) {
    if (!(action.translate_m >= 0.0)) throw InputError("translation must be non-negative");
    Pose out = pose;
    out.yaw_deg = wrap_degrees(pose.yaw_deg + action.rotate_deg);
    if (action.translate_m == 0.0) return out;
    const double room = world.cast_ray(pose.position, out.yaw_deg, action.translate_m + world.agent_radius);
    const double move = std::min(action.translate_m, std::max(0.0, room - world.agent_radius));
    const double yaw = deg2rad(out.yaw_deg);
    out.position = pose.position + move * Vec2{std::cos(yaw), std::sin(yaw)};
    return out;
}

Pose inject_perturbation(const SimWorld& world, const Pose& pose, double magnitude, std::uint64_t seed) {
    if (!(magnitude >= 0.0)) throw InputError("perturbation magnitude must be non-negative");
    if (magnitude == 0.0) return pose;
    std::mt19937_64 rng(seed);
    double best_angle = 0.0;
    double best_room = -1.0;
    for (int attempt = 0; attempt < 16; ++attempt) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        const double angle = 360.0 * u;
        const double need = magnitude + world.agent_radius;
        const double room = world.cast_ray(pose.position, angle, need);
        if (room >= need) {
            Pose out = pose;
            out.position = pose.position + magnitude * Vec2{std::cos(deg2rad(angle)), std::sin(deg2rad(angle))};
            return out;
        }
        if (room > best_room) {
            best_room = room;
            best_angle = angle;
        }
    }
    Pose out = pose;
    const double move = std::min(magnitude, std::max(0.0, best_room - world.agent_radius));
    out.position = pose.position + move * Vec2{std::cos(deg2rad(best_angle)), std::sin(deg2rad(best_angle))};
    return out;
}

// ---- I/O -----------------------------------------------------------------

namespace {

std::string next_pgm_token(std::istream& is) {
    std::string tok;
    char ch;
    while (is.get(ch)) {
        if (ch == '#') {
            std::string rest;
            std::getline(is, rest);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

Vec2 vec_from_json(const json& j) {
    if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
    if (j.is_object()) return {j.at("x").get<double>(), j.at("y").get<double>()};
    throw InputError("expected a 2D point as [x, y] or {x, y}");
}

json vec_to_json(Vec2 v) { return json::array({v.x, v.y}); }

}  // namespace

Mask read_pgm_mask(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open map bitmap " + path.string());
    const std::string magic = next_pgm_token(is);
    if (magic != "P5" && magic != "P2") throw InputError("map bitmap is not a PGM (P2/P5): " + path.string());
    int width = 0;
    int height = 0;
    int maxval = 0;
    try {
        width = std::stoi(next_pgm_token(is));
        height = std::stoi(next_pgm_token(is));
        maxval = std::stoi(next_pgm_token(is));
    } catch (const std::exception&) {
        throw InputError("malformed PGM header in " + path.string());
    }
    if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) throw InputError("unsupported PGM geometry in " + path.string());
    Mask m(height, width, 0);
    const auto n = static_cast<std::size_t>(width) * height;
    if (magic == "P5") {
        std::vector<unsigned char> raw(n);
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is.gcount()) != n) throw InputError("truncated PGM payload in " + path.string());
        for (std::size_t i = 0; i < n; ++i) m.data()[i] = raw[i] * 255 >= 128 * maxval ? 1 : 0;
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const std::string tok = next_pgm_token(is);
            if (tok.empty()) throw InputError("truncated PGM payload in " + path.string());
            m.data()[i] = std::stoi(tok) * 255 >= 128 * maxval ? 1 : 0;
        }
    }
    return m;
}

void write_pgm_mask(const std::filesystem::path& path, const Mask& free_cells) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write " + path.string());
    os << "P5\n" << free_cells.cols() << ' ' << free_cells.rows() << "\n255\n";
    for (auto v : free_cells.data()) os.put(static_cast<char>(v ? 255 : 0));
}

json to_json(const Pose& p) { return {{"x", p.position.x}, {"y", p.position.y}, {"yaw_deg", p.yaw_deg}}; }

Pose pose_from_json(const json& j) {
    return {{j.at("x").get<double>(), j.at("y").get<double>()}, j.value("yaw_deg", 0.0)};
}

json to_json(const EpisodeSpec& e) {
    json hints = json::array();
    for (auto h : e.subtask_hints) hints.push_back(vec_to_json(h));
    json ref = json::array();
    for (auto p : e.reference_path) ref.push_back(vec_to_json(p));
    return {{"id", e.id},           {"start", to_json(e.start)},     {"goal", vec_to_json(e.goal)},
            {"instruction", e.instruction}, {"subtask_hints", hints}, {"reference_path", ref}};
}

EpisodeSpec episode_from_json(const json& j) {
    EpisodeSpec e;
    e.id = j.at("id").get<std::string>();
    e.start = pose_from_json(j.at("start"));
    e.goal = vec_from_json(j.at("goal"));
    e.instruction = j.at("instruction").get<std::string>();
    if (j.contains("subtask_hints")) {
        for (const auto& h : j.at("subtask_hints")) e.subtask_hints.push_back(vec_from_json(h));
    }
    if (j.contains("reference_path")) {
        for (const auto& p : j.at("reference_path")) e.reference_path.push_back(vec_from_json(p));
    }
    return e;
}

SimWorld SimWorld::load(const std::filesystem::path& dir) {
    const auto json_path = dir / "world.json";
    std::ifstream is(json_path);
    if (!is) throw InputError("cannot open " + json_path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw InputError("malformed " + json_path.string() + ": " + e.what());
    }
    try {
        SimWorld world(read_pgm_mask(dir / "world.pgm"), j.at("cell_size").get<double>());
        world.wall_height = j.value("wall_height", kDefaultWallHeight);
        world.agent_radius = j.value("agent_radius", kDefaultAgentRadius);
        for (const auto& r : j.value("regions", json::array())) {
            Region region{r.at("label").get<std::string>(), {}};
            for (const auto& p : r.at("polygon")) region.polygon.push_back(vec_from_json(p));
            if (region.polygon.size() < 3) throw InputError("region '" + region.label + "' needs >= 3 vertices");
            world.regions.push_back(std::move(region));
        }
        for (const auto& o : j.value("objects", json::array())) {
            world.objects.push_back({o.at("label").get<std::string>(), vec_from_json(o.at("position"))});
        }
        for (const auto& ej : j.value("episodes", json::array())) {
            EpisodeSpec e = episode_from_json(ej);
            if (!world.is_free(e.start.position)) throw InputError("episode " + e.id + ": start is not free");
            if (!world.is_free(e.goal)) throw InputError("episode " + e.id + ": goal is not free");
            if (e.reference_path.empty()) {
                e.reference_path = simplify_path(world, shortest_path(world, e.start.position, e.goal));
            }
            if (e.reference_path.empty() || distance(e.reference_path.front(), e.start.position) > 1e-6 ||
                distance(e.reference_path.back(), e.goal) > 1e-6)
                throw InputError("episode " + e.id + ": reference path must run from start to goal");
            world.episodes.push_back(std::move(e));
        }
        return world;
    } catch (const json::exception& e) {
        throw InputError("malformed " + json_path.string() + ": " + e.what());
    }
}

void SimWorld::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_pgm_mask(dir / "world.pgm", free_);
    json j;
    j["cell_size"] = cell_size_;
    j["wall_height"] = wall_height;
    j["agent_radius"] = agent_radius;
    j["regions"] = json::array();
    for (const auto& r : regions) {
        json poly = json::array();
        for (auto p : r.polygon) poly.push_back(vec_to_json(p));
        j["regions"].push_back({{"label", r.label}, {"polygon", poly}});
    }
    j["objects"] = json::array();
    for (const auto& o : objects) j["objects"].push_back({{"label", o.label}, {"position", vec_to_json(o.position)}});
    j["episodes"] = json::array();
    for (const auto& e : episodes) j["episodes"].push_back(to_json(e));
    std::ofstream os(dir / "world.json");
    os << j.dump(2) << '\n';
}

}  // namespace skelnav::sim
