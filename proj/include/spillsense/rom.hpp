#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "spillsense/field.hpp"
#include "spillsense/grid.hpp"
#include "spillsense/io.hpp"

namespace spillsense {

/// Time-ordered snapshot pair: X holds snapshots 0..m-2, X' holds 1..m-1.
struct SnapshotMatrix {
    Eigen::MatrixXd x;
    Eigen::MatrixXd x_shift;

    static SnapshotMatrix from_trajectory(const StateTrajectory& traj) {
        if (traj.size() < 2)
            throw ConfigError("SnapshotMatrix: need at least two snapshots");
        const auto rows = traj.front().size();
        SnapshotMatrix out;
        out.x.resize(rows, static_cast<Eigen::Index>(traj.size()) - 1);
        out.x_shift.resize(rows, static_cast<Eigen::Index>(traj.size()) - 1);
        for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
            if (traj[k].size() != rows)
                throw GridMismatchError("SnapshotMatrix: ragged trajectory");
            out.x.col(static_cast<Eigen::Index>(k)) = traj[k];
            out.x_shift.col(static_cast<Eigen::Index>(k)) = traj[k + 1];
        }
        return out;
    }
};

struct DmdModel {
    Eigen::MatrixXd basis;      // U, rows x rank
    Eigen::VectorXd singulars;  // S, non-increasing
    Eigen::MatrixXd right;      // V, cols x rank
    Eigen::MatrixXd atilde;     // rank x rank reduced operator
    int rank = 0;

    Eigen::VectorXd predict(const Eigen::VectorXd& z) const { return atilde * z; }
    Eigen::VectorXd reconstruct(const Eigen::VectorXd& z) const { return basis * z; }
    Eigen::VectorXd project(const Eigen::VectorXd& x) const {
        return basis.transpose() * x;
    }
};

/// Truncated-SVD dynamic mode decomposition. Near-zero trailing singular
/// values shrink the rank with a warning instead of amplifying noise.
inline DmdModel fit_dmd(const SnapshotMatrix& snaps, int n_z) {
    if (n_z < 1) throw ConfigError("fit_dmd: rank must be positive");
    if (n_z > std::min(snaps.x.rows(), snaps.x.cols()))
        throw ConfigError("fit_dmd: rank exceeds snapshot dimensions");

    Eigen::BDCSVD<Eigen::MatrixXd> svd(snaps.x,
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    int r = n_z;
    while (r > 1 && sv(r - 1) < 1e-12 * sv(0)) --r;
    if (r < n_z)
        std::cerr << "fit_dmd: rank reduced from " << n_z << " to " << r
                  << " (rank-deficient snapshots)\n";

    DmdModel m;
    m.rank = r;
    m.basis = svd.matrixU().leftCols(r);
    m.singulars = sv.head(r);
    m.right = svd.matrixV().leftCols(r);
    m.atilde = m.basis.transpose() * snaps.x_shift * m.right *
               m.singulars.cwiseInverse().asDiagonal();
    return m;
}

/// Mode scaling of Eq-style U_S = U diag((S/||S||_2)^k_ID); the norm is the
/// Euclidean norm of the singular-value vector.
inline Eigen::MatrixXd scale_modes(const Eigen::MatrixXd& basis,
                                   const Eigen::VectorXd& singulars,
                                   double k_id) {
    if (singulars.size() != basis.cols())
        throw ConfigError("scale_modes: singular count mismatch");
    if (singulars.size() == 0 || singulars(0) <= 0.0)
        throw ConfigError("scale_modes: leading singular value must be positive");
    if (k_id == 0.0) return basis;
    const double norm = singulars.norm();
    Eigen::VectorXd w(singulars.size());
    for (Eigen::Index k = 0; k < singulars.size(); ++k)
        w(k) = std::pow(singulars(k) / norm, k_id);
    return basis * w.asDiagonal();
}

struct IdSelection {
    std::vector<Eigen::Index> rows;  // J, distinct state indices
    Eigen::MatrixXd projection;      // K with U_S ~ K U_S(J,:)
    double k_id = 0.0;
};

namespace detail {

// Strong rank-revealing QR column selection (swap formulation): starting
// from column-pivoted QR, swap an interior column for an exterior one while
// any |R11^{-1} R12| entry exceeds f. Each swap grows det(R11) by at least
// f, so the loop terminates.
inline std::vector<Eigen::Index> srrqr_select(const Eigen::MatrixXd& a, int k,
                                              double f) {
    const Eigen::Index m = a.cols();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> piv(a);
    std::vector<Eigen::Index> order(m);
    for (Eigen::Index i = 0; i < m; ++i)
        order[i] = piv.colsPermutation().indices()(i);

    const int kk = std::min<Eigen::Index>(k, std::min(a.rows(), m));
    const int max_swaps = 10 * static_cast<int>(m) + 50;
    for (int pass = 0; pass < max_swaps; ++pass) {
        Eigen::MatrixXd ap(a.rows(), m);
        for (Eigen::Index i = 0; i < m; ++i) ap.col(i) = a.col(order[i]);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(ap);
        Eigen::MatrixXd r =
            qr.matrixQR().topRows(std::min(a.rows(), m)).triangularView<Eigen::Upper>();
        Eigen::MatrixXd r11 = r.topLeftCorner(kk, kk);
        if (m == kk) break;
        Eigen::MatrixXd t = r11.triangularView<Eigen::Upper>().solve(
            r.topRightCorner(kk, m - kk));

        Eigen::Index bi = 0, bj = 0;
        double best = t.cwiseAbs().maxCoeff(&bi, &bj);
        if (best <= f) break;
        std::swap(order[bi], order[kk + bj]);
    }
    order.resize(static_cast<std::size_t>(k));
    return order;
}

}  // namespace detail

/// Interpolative decomposition through strong RRQR (f = 2) on U_S^T: picks
/// N_p rows J and the least-squares projection K with U_S ~ K U_S(J,:).
inline IdSelection interpolative_decomposition(const Eigen::MatrixXd& u_s,
                                               int n_p, double f = 2.0,
                                               double k_id = 0.0) {
    if (n_p < 1) throw ConfigError("interpolative_decomposition: need n_p >= 1");
    if (n_p > u_s.rows())
        throw ConfigError("interpolative_decomposition: more rows requested than exist");

    IdSelection sel;
    sel.k_id = k_id;
    sel.rows = detail::srrqr_select(u_s.transpose(), n_p, f);

    Eigen::MatrixXd sub(n_p, u_s.cols());
    for (int i = 0; i < n_p; ++i) sub.row(i) = u_s.row(sel.rows[i]);
    // K^T solves the transposed least-squares system sub^T K^T = U_S^T.
    sel.projection = sub.transpose()
                         .colPivHouseholderQr()
                         .solve(u_s.transpose())
                         .transpose();
    return sel;
}

/// Plain column-pivoted QR selection; only valid when the requested count
/// equals the mode count, which is the documented limitation of the method.
inline std::vector<Eigen::Index> qr_pivot_selection(const Eigen::MatrixXd& basis,
                                                    int count) {
    if (count != basis.cols())
        throw ConfigError("qr_pivot_selection: count must equal the mode count");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> piv(basis.transpose());
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        rows[static_cast<std::size_t>(i)] = piv.colsPermutation().indices()(i);
    return rows;
}

/// Inverse-distance weighting of the selected sensing locations against the
/// oil presence support; the closest location scores exactly 1.
inline ScalarField pdmd_weighting(const IdSelection& sel,
                                  const ScalarField& presence,
                                  const StateLayout& layout) {
    if (sel.rows.empty()) throw ConfigError("pdmd_weighting: empty selection");
    const GridSpec& g = *layout.grid();
    std::vector<Point> oil;
    for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i)
            if (presence.at(i, j) != 0.0) oil.push_back(g.cell_center(i, j));
    if (oil.empty()) throw EmptySpillError("pdmd_weighting: no oil presence");

    const double floor_m = std::min(g.dx(), g.dy());
    std::vector<CellIndex> cells;
    std::vector<double> dist;
    cells.reserve(sel.rows.size());
    for (Eigen::Index row : sel.rows) {
        CellIndex c = layout.cell_of(static_cast<std::size_t>(row));
        Point p = g.cell_center(c.i, c.j);
        double d = std::numeric_limits<double>::infinity();
        for (const Point& o : oil) d = std::min(d, distance(p, o));
        cells.push_back(c);
        dist.push_back(std::max(d, floor_m));
    }
    double dmin = *std::min_element(dist.begin(), dist.end());
    ScalarField out(layout.grid());
    for (std::size_t k = 0; k < cells.size(); ++k)
        out.at(cells[k].i, cells[k].j) =
            std::max(out.at(cells[k].i, cells[k].j), dmin / dist[k]);
    return out;
}

// ---------------------------------------------------------------------------
// Time-varying Kalman filter over modal amplitudes.
// ---------------------------------------------------------------------------

struct KalmanState {
    Eigen::VectorXd z;        // modal estimate
    Eigen::MatrixXd cov;      // P, symmetric PSD
    Eigen::MatrixXd q_proc;   // process noise Q
    double r_meas = 1e-4;     // measurement noise scale
};

inline KalmanState make_kalman_state(const DmdModel& model, double p0,
                                     double r_meas) {
    KalmanState s;
    s.z = Eigen::VectorXd::Zero(model.rank);
    s.cov = p0 * Eigen::MatrixXd::Identity(model.rank, model.rank);
    double tr = model.singulars.sum();
    double q = 1e-4 * tr * tr / static_cast<double>(model.rank);
    s.q_proc = q * Eigen::MatrixXd::Identity(model.rank, model.rank);
    s.r_meas = r_meas;
    return s;
}

/// Predict with the reduced operator, then (if any measurements) the Joseph
/// form update. A singular innovation covariance is ridge-regularized with a
/// warning instead of failing.
inline KalmanState kalman_step(const KalmanState& state,
                               const Eigen::MatrixXd& atilde,
                               const Eigen::VectorXd& y,
                               const Eigen::MatrixXd& h) {
    KalmanState out = state;
    out.z = atilde * state.z;
    out.cov = atilde * state.cov * atilde.transpose() + state.q_proc;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    if (h.rows() == 0) return out;
    if (h.rows() != y.size() || h.cols() != state.z.size())
        throw ConfigError("kalman_step: measurement dimensions mismatch");

    const Eigen::Index mct = h.rows();
    Eigen::MatrixXd r =
        state.r_meas * Eigen::MatrixXd::Identity(mct, mct);
    Eigen::MatrixXd innov = h * out.cov * h.transpose() + r;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(innov);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        std::cerr << "kalman_step: innovation covariance regularized\n";
        double ridge = std::max(1e-12 * innov.trace() / mct, 1e-12);
        innov += ridge * Eigen::MatrixXd::Identity(mct, mct);
        ldlt.compute(innov);
    }
    Eigen::MatrixXd gain = ldlt.solve(h * out.cov).transpose();

    out.z += gain * (y - h * out.z);
    Eigen::MatrixXd ikh =
        Eigen::MatrixXd::Identity(state.z.size(), state.z.size()) - gain * h;
    out.cov = ikh * out.cov * ikh.transpose() + gain * r * gain.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    return out;
}

// ---------------------------------------------------------------------------
// Model export for reproducibility.
// ---------------------------------------------------------------------------

inline void write_dmd_model(const std::string& path, const DmdModel& model,
                            const std::vector<Eigen::Index>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("write_dmd_model: cannot open " + path);
    out << "DMD1 " << model.rank << ' ' << rows.size() << '\n';
    for (int i = 0; i < model.rank; ++i) {
        for (int j = 0; j < model.rank; ++j)
            out << format_number(model.atilde(i, j), 17)
                << (j + 1 == model.rank ? '\n' : ' ');
    }
    for (int i = 0; i < model.rank; ++i)
        out << format_number(model.singulars(i), 17)
            << (i + 1 == model.rank ? '\n' : ' ');
    for (std::size_t i = 0; i < rows.size(); ++i)
        out << rows[i] << (i + 1 == rows.size() ? '\n' : ' ');
    if (rows.empty()) out << '\n';
    if (!out) throw IoError("write_dmd_model: write failed for " + path);
}

}  // namespace spillsense
