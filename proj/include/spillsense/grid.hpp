#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "spillsense/errors.hpp"

namespace spillsense {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Vec2 {
    double u = 0.0;
    double v = 0.0;
};

inline Point operator+(Point a, Vec2 d) { return {a.x + d.u, a.y + d.v}; }
inline Vec2 operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 d) { return {s * d.u, s * d.v}; }
inline double norm(Vec2 d) { return std::hypot(d.u, d.v); }
inline double distance(Point a, Point b) { return norm(a - b); }

struct CellIndex {
    int i = 0;  // west -> east
    int j = 0;  // south -> north
    bool operator==(const CellIndex&) const = default;
};

/// Regular cell-centered grid over the planar water surface. Cells flagged
/// as land carry zero velocity and are excluded from all domain integrals.
class GridSpec {
public:
    GridSpec(int nx, int ny, double dx, double dy, Point origin,
             std::vector<uint8_t> land_mask = {})
        : nx_(nx), ny_(ny), dx_(dx), dy_(dy), origin_(origin),
          land_(std::move(land_mask)) {
        if (nx_ < 3 || ny_ < 3)
            throw ConfigError("GridSpec: need at least 3x3 cells");
        if (dx_ <= 0.0 || dy_ <= 0.0)
            throw ConfigError("GridSpec: cell spacings must be positive");
        if (land_.empty()) land_.assign(cell_count(), 0);
        if (land_.size() != cell_count())
            throw ConfigError("GridSpec: land mask size mismatch");
        std::size_t water = 0;
        for (uint8_t m : land_)
            if (!m) ++water;
        water_cells_ = water;
        domain_area_ = dx_ * dy_ * static_cast<double>(water);
    }

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double dx() const { return dx_; }
    double dy() const { return dy_; }
    Point origin() const { return origin_; }
    std::size_t cell_count() const {
        return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
    }
    std::size_t water_cell_count() const { return water_cells_; }
    double domain_area() const { return domain_area_; }
    double cell_area() const { return dx_ * dy_; }

    std::size_t idx(int i, int j) const {
        return static_cast<std::size_t>(j) * nx_ + i;
    }
    bool in_range(int i, int j) const {
        return i >= 0 && i < nx_ && j >= 0 && j < ny_;
    }
    bool is_land(int i, int j) const { return land_[idx(i, j)] != 0; }
    bool is_water(int i, int j) const { return land_[idx(i, j)] == 0; }
    const std::vector<uint8_t>& land_mask() const { return land_; }

    Point cell_center(int i, int j) const {
        if (!in_range(i, j))
            throw OutOfDomainError("cell_center: index out of range");
        return {origin_.x + i * dx_, origin_.y + j * dy_};
    }

    /// Bounding box of the domain: cell areas extend half a spacing beyond
    /// the outermost cell centers.
    bool in_bounding_box(Point p) const {
        return p.x >= origin_.x - 0.5 * dx_ &&
               p.x <= origin_.x + (nx_ - 0.5) * dx_ &&
               p.y >= origin_.y - 0.5 * dy_ &&
               p.y <= origin_.y + (ny_ - 0.5) * dy_;
    }

    /// Maps a point to the unique cell containing it. Points on a shared
    /// cell edge belong to the lower-indexed cell.
    CellIndex locate(Point p) const {
        if (!in_bounding_box(p))
            throw OutOfDomainError("locate: point outside domain bounding box");
        double gx = (p.x - origin_.x) / dx_;
        double gy = (p.y - origin_.y) / dy_;
        int i = static_cast<int>(std::ceil(gx - 0.5));
        int j = static_cast<int>(std::ceil(gy - 0.5));
        if (i < 0) i = 0;  // exact west/south boundary
        if (j < 0) j = 0;
        if (i >= nx_) i = nx_ - 1;
        if (j >= ny_) j = ny_ - 1;
        return {i, j};
    }

private:
    int nx_;
    int ny_;
    double dx_;
    double dy_;
    Point origin_;
    std::vector<uint8_t> land_;
    std::size_t water_cells_ = 0;
    double domain_area_ = 0.0;
};

using GridPtr = std::shared_ptr<const GridSpec>;

inline GridPtr make_grid(int nx, int ny, double dx, double dy, Point origin = {},
                         std::vector<uint8_t> land_mask = {}) {
    return std::make_shared<const GridSpec>(nx, ny, dx, dy, origin,
                                            std::move(land_mask));
}

/// Uniform discrete time axis t_k = t0 + k*dt, k = 0..steps.
class TimeGrid {
public:
    TimeGrid(double t0, double tf, double dt) : t0_(t0), tf_(tf), dt_(dt) {
        if (tf_ <= t0_) throw ConfigError("TimeGrid: tf must exceed t0");
        if (dt_ <= 0.0) throw ConfigError("TimeGrid: dt must be positive");
        steps_ = static_cast<int>(std::llround((tf_ - t0_) / dt_));
        if (steps_ < 1) throw ConfigError("TimeGrid: window shorter than dt");
    }

    double t0() const { return t0_; }
    double tf() const { return tf_; }
    double dt() const { return dt_; }
    int steps() const { return steps_; }
    double time_at(int k) const { return t0_ + k * dt_; }

private:
    double t0_;
    double tf_;
    double dt_;
    int steps_;
};

}  // namespace spillsense
