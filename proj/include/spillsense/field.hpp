#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "spillsense/grid.hpp"

namespace spillsense {

/// Cell-centered scalar field. Value semantics; safe to share across
/// threads once no writer remains.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(GridPtr grid, double fill = 0.0)
        : grid_(std::move(grid)),
          v_(grid_->cell_count(), fill) {}

    const GridPtr& grid() const { return grid_; }
    bool empty() const { return !grid_; }

    double& at(int i, int j) { return v_[grid_->idx(i, j)]; }
    double at(int i, int j) const { return v_[grid_->idx(i, j)]; }
    double& operator[](std::size_t k) { return v_[k]; }
    double operator[](std::size_t k) const { return v_[k]; }
    std::size_t size() const { return v_.size(); }

    std::vector<double>& data() { return v_; }
    const std::vector<double>& data() const { return v_; }

    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

    void zero_on_land() {
        const auto& mask = grid_->land_mask();
        for (std::size_t k = 0; k < v_.size(); ++k)
            if (mask[k]) v_[k] = 0.0;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : v_) m = std::max(m, std::abs(x));
        return m;
    }

    double max_value() const {
        double m = -std::numeric_limits<double>::infinity();
        for (double x : v_) m = std::max(m, x);
        return m;
    }

    double min_value() const {
        double m = std::numeric_limits<double>::infinity();
        for (double x : v_) m = std::min(m, x);
        return m;
    }

    double sum() const {
        double s = 0.0;
        for (double x : v_) s += x;
        return s;
    }

    bool all_finite() const {
        for (double x : v_)
            if (!std::isfinite(x)) return false;
        return true;
    }

private:
    GridPtr grid_;
    std::vector<double> v_;
};

inline void require_same_grid(const ScalarField& a, const ScalarField& b) {
    if (a.grid() != b.grid())
        throw GridMismatchError("fields live on different grids");
}

/// Two-component vector field; both components share one grid.
struct VectorField {
    ScalarField u;  // west -> east
    ScalarField v;  // south -> north

    VectorField() = default;
    explicit VectorField(GridPtr grid, double fu = 0.0, double fv = 0.0)
        : u(grid, fu), v(grid, fv) {}

    const GridPtr& grid() const { return u.grid(); }
    bool empty() const { return u.empty(); }

    void fill(double fu, double fv) {
        u.fill(fu);
        v.fill(fv);
    }
    void zero_on_land() {
        u.zero_on_land();
        v.zero_on_land();
    }
    double max_speed() const {
        double m = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k)
            m = std::max(m, std::hypot(u[k], v[k]));
        return m;
    }
};

namespace detail {
inline double bilinear(const ScalarField& f, double gx, double gy) {
    const auto& g = *f.grid();
    // Clamp into the cell-center hull; the half-cell rim degenerates to the
    // nearest edge value.
    gx = std::clamp(gx, 0.0, static_cast<double>(g.nx() - 1));
    gy = std::clamp(gy, 0.0, static_cast<double>(g.ny() - 1));
    int i0 = std::min(static_cast<int>(gx), g.nx() - 2);
    int j0 = std::min(static_cast<int>(gy), g.ny() - 2);
    if (g.nx() == 1) i0 = 0;
    if (g.ny() == 1) j0 = 0;
    double fx = gx - i0;
    double fy = gy - j0;
    double a = f.at(i0, j0) * (1 - fx) + f.at(i0 + 1, j0) * fx;
    double b = f.at(i0, j0 + 1) * (1 - fx) + f.at(i0 + 1, j0 + 1) * fx;
    return a * (1 - fy) + b * fy;
}
}  // namespace detail

inline double interpolate(const ScalarField& f, Point p) {
    const auto& g = *f.grid();
    if (!g.in_bounding_box(p))
        throw OutOfDomainError("interpolate: point outside domain");
    double gx = (p.x - g.origin().x) / g.dx();
    double gy = (p.y - g.origin().y) / g.dy();
    return detail::bilinear(f, gx, gy);
}

inline Vec2 interpolate(const VectorField& f, Point p) {
    const auto& g = *f.grid();
    if (!g.in_bounding_box(p))
        throw OutOfDomainError("interpolate: point outside domain");
    double gx = (p.x - g.origin().x) / g.dx();
    double gy = (p.y - g.origin().y) / g.dy();
    return {detail::bilinear(f.u, gx, gy), detail::bilinear(f.v, gx, gy)};
}

/// Fixed stacking order for state snapshots: fields in declared order, each
/// row-major over cells (index = j*nx + i).
class StateLayout {
public:
    StateLayout() = default;
    StateLayout(GridPtr grid, std::vector<std::string> field_names)
        : grid_(std::move(grid)), names_(std::move(field_names)) {}

    const GridPtr& grid() const { return grid_; }
    const std::vector<std::string>& names() const { return names_; }
    int field_count() const { return static_cast<int>(names_.size()); }
    std::size_t state_size() const { return names_.size() * grid_->cell_count(); }

    std::size_t entry(int field, int i, int j) const {
        return static_cast<std::size_t>(field) * grid_->cell_count() +
               grid_->idx(i, j);
    }
    int field_of(std::size_t row) const {
        return static_cast<int>(row / grid_->cell_count());
    }
    CellIndex cell_of(std::size_t row) const {
        std::size_t c = row % grid_->cell_count();
        return {static_cast<int>(c % grid_->nx()),
                static_cast<int>(c / grid_->nx())};
    }

    Eigen::VectorXd stack(const std::vector<const ScalarField*>& fields) const {
        if (fields.size() != names_.size())
            throw GridMismatchError("stack: field count does not match layout");
        Eigen::VectorXd x(state_size());
        std::size_t off = 0;
        for (const ScalarField* f : fields) {
            if (f->grid() != grid_)
                throw GridMismatchError("stack: field grid mismatch");
            for (std::size_t k = 0; k < f->size(); ++k) x[off + k] = (*f)[k];
            off += f->size();
        }
        return x;
    }

    std::vector<ScalarField> unstack(const Eigen::VectorXd& x) const {
        if (static_cast<std::size_t>(x.size()) != state_size())
            throw GridMismatchError("unstack: state size mismatch");
        std::vector<ScalarField> out;
        out.reserve(names_.size());
        const std::size_t cells = grid_->cell_count();
        std::size_t off = 0;
        for (std::size_t f = 0; f < names_.size(); ++f) {
            ScalarField s(grid_);
            for (std::size_t k = 0; k < cells; ++k) s[k] = x[off + k];
            out.push_back(std::move(s));
            off += cells;
        }
        return out;
    }

private:
    GridPtr grid_;
    std::vector<std::string> names_;
};

using StateTrajectory = std::vector<Eigen::VectorXd>;

}  // namespace spillsense
