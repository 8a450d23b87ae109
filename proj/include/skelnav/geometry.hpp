#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <numbers>
#include <vector>

#include "skelnav/errors.hpp"

namespace skelnav {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle in degrees into (-180, 180].
inline double wrap_degrees(double deg) {
    double w = std::fmod(deg, 360.0);
    if (w > 180.0) w -= 360.0;
    if (w <= -180.0) w += 360.0;
    return w;
}

/// Rotates `v` counterclockwise by `deg` degrees.
inline Vec2 rotate(Vec2 v, double deg) {
    const double c = std::cos(deg2rad(deg));
    const double s = std::sin(deg2rad(deg));
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Agent pose in the world frame. Yaw is counterclockwise from +x, in degrees.
struct Pose {
    Vec2 position;
    double yaw_deg = 0.0;

    friend bool operator==(const Pose&, const Pose&) = default;
};

/// Maps an agent-frame point (x forward, y left) into the world frame.
inline Vec2 agent_to_world(const Pose& pose, Vec2 local) {
    return pose.position + rotate(local, pose.yaw_deg);
}

inline Vec2 world_to_agent(const Pose& pose, Vec2 world) {
    return rotate(world - pose.position, -pose.yaw_deg);
}

/// Raster cell address. Ordering is row-major.
struct Cell {
    int row = 0;
    int col = 0;

    friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// Dense row-major 2D array. Masks use `Raster<std::uint8_t>` with 0/1 values.
template <class T>
class Raster {
public:
    Raster() = default;
    Raster(int rows, int cols, T fill = T{}) : rows_(rows), cols_(cols) {
        if (rows < 0 || cols < 0) throw InputError("raster dimensions must be non-negative");
        data_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    bool in_bounds(int r, int c) const { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }
    bool in_bounds(Cell p) const { return in_bounds(p.row, p.col); }

    T& operator()(int r, int c) { return data_[index(r, c)]; }
    const T& operator()(int r, int c) const { return data_[index(r, c)]; }
    T& operator[](Cell p) { return (*this)(p.row, p.col); }
    const T& operator[](Cell p) const { return (*this)(p.row, p.col); }

    /// Out-of-bounds reads return `fallback` (truncated neighbourhoods).
    T get_or(int r, int c, T fallback) const { return in_bounds(r, c) ? (*this)(r, c) : fallback; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    friend bool operator==(const Raster&, const Raster&) = default;

private:
    std::size_t index(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using Mask = Raster<std::uint8_t>;

inline std::size_t count_set(const Mask& m) {
    std::size_t n = 0;
    for (auto v : m.data()) n += v != 0;
    return n;
}

/// Number of 8-connected components of set cells.
std::size_t count_components8(const Mask& m);

/// Labels 8-connected components (0 = background, labels from 1 in row-major discovery order).
Raster<int> label_components8(const Mask& m, int* n_labels = nullptr);

}  // namespace skelnav
