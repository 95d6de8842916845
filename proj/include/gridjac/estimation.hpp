#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "gridjac/errors.hpp"

namespace gridjac {

//! Snapshot pairs (x^(i), y^(i)) in reduced coordinates, equal lengths T+1.
struct SnapshotSeries {
    std::vector<Eigen::VectorXd> xs;
    std::vector<Eigen::VectorXd> ys;
    std::vector<int> timestamps;
};

//! Column k holds the consecutive difference x^(k+1) - x^(k) (same for y).
struct DeltaMatrices {
    Eigen::MatrixXd a; // state deltas, K x T
    Eigen::MatrixXd b; // injection deltas, K x T
};

inline DeltaMatrices build_deltas(const SnapshotSeries& series) {
    const std::size_t len = series.xs.size();
    if (len < 2) throw InsufficientData("need at least two snapshots");
    if (series.ys.size() != len)
        throw DimensionError("xs and ys length mismatch");
    const Eigen::Index k = series.xs.front().size();
    DeltaMatrices d;
    d.a.resize(k, static_cast<Eigen::Index>(len) - 1);
    d.b.resize(k, static_cast<Eigen::Index>(len) - 1);
    for (std::size_t i = 0; i + 1 < len; ++i) {
        if (series.xs[i].size() != k || series.ys[i].size() != k)
            throw DimensionError("snapshot vectors must all have length K");
        d.a.col(static_cast<Eigen::Index>(i)) = series.xs[i + 1] - series.xs[i];
        d.b.col(static_cast<Eigen::Index>(i)) = series.ys[i + 1] - series.ys[i];
    }
    return d;
}

enum class EstimationMethod { OLS, TLS };

struct JacobianEstimate {
    Eigen::MatrixXd j; // K x K
    EstimationMethod method = EstimationMethod::OLS;
    bool pinv_fallback = false;    // OLS hit a rank-deficient AA^T
    bool ill_conditioned = false;  // TLS singular-value gap degenerate
    double correction_norm = 0.0;  // TLS: Frobenius norm of the implied [E F]
};

namespace detail {

//! Moore-Penrose inverse of a symmetric PSD matrix via eigendecomposition.
inline Eigen::MatrixXd pinv_sym(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double cutoff =
        ev.cwiseAbs().maxCoeff() * m.rows() * std::numeric_limits<double>::epsilon();
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev(i) > cutoff) inv(i) = 1.0 / ev(i);
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

inline void require_overdetermined(const DeltaMatrices& d) {
    if (d.a.rows() != d.b.rows() || d.a.cols() != d.b.cols())
        throw DimensionError("delta matrices must have equal shapes");
    if (d.a.cols() <= d.a.rows())
        throw InsufficientData("estimators require T > K columns");
}

} // namespace detail

//! J^T = (A A^T)^-1 A B^T. A rank-deficient normal matrix falls back to the
//! pseudo-inverse and flags the estimate.
inline JacobianEstimate ols_estimate(const DeltaMatrices& d) {
    detail::require_overdetermined(d);
    const Eigen::MatrixXd aat = d.a * d.a.transpose();
    const Eigen::MatrixXd abt = d.a * d.b.transpose();
    JacobianEstimate est;
    est.method = EstimationMethod::OLS;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(aat);
    if (lu.isInvertible()) {
        est.j = lu.solve(abt).transpose();
    } else {
        est.pinv_fallback = true;
        est.j = (detail::pinv_sym(aat) * abt).transpose();
    }
    return est;
}

//! Total least squares via the SVD of the augmented matrix [A^T B^T]:
//! J^T = -V12 V22^-1 from the partitioned right singular vectors. The implied
//! correction [E F] has Frobenius norm equal to the root-sum-square of the
//! K smallest singular values.
inline JacobianEstimate tls_estimate(const DeltaMatrices& d) {
    detail::require_overdetermined(d);
    const Eigen::Index k = d.a.rows();
    Eigen::MatrixXd aug(d.a.cols(), 2 * k);
    aug.leftCols(k) = d.a.transpose();
    aug.rightCols(k) = d.b.transpose();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(aug, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const Eigen::MatrixXd& v = svd.matrixV(); // 2K x 2K

    JacobianEstimate est;
    est.method = EstimationMethod::TLS;
    est.correction_norm = std::sqrt(sv.tail(k).squaredNorm());
    // Degenerate split between kept and discarded singular subspaces. The
    // solution is then not unique; we keep the deterministic SVD basis and
    // flag the estimate.
    est.ill_conditioned = (sv(k - 1) - sv(k)) <= 1e-12 * sv(0);

    const Eigen::MatrixXd v12 = v.block(0, k, k, k);
    const Eigen::MatrixXd v22 = v.block(k, k, k, k);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(v22.transpose());
    if (!lu.isInvertible())
        throw NoTLSSolution("V22 block is singular; no TLS solution exists");
    est.j = -lu.solve(v12.transpose());
    return est;
}

//! Appendix identity Z Z^T = X X^T + Y Y^T for Z = [X Y].
inline bool augmented_svd_identity_check(const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& y,
                                         double tol = 1e-12) {
    if (x.rows() != y.rows())
        throw DimensionError("X and Y must have equal row counts");
    Eigen::MatrixXd z(x.rows(), x.cols() + y.cols());
    z.leftCols(x.cols()) = x;
    z.rightCols(y.cols()) = y;
    const Eigen::MatrixXd zzt = z * z.transpose();
    const Eigen::MatrixXd sum = x * x.transpose() + y * y.transpose();
    return (zzt - sum).norm() < tol * zzt.norm();
}

struct EstimationReport {
    Eigen::MatrixXd j_est;
    Eigen::MatrixXd j_err; // entrywise |j_est - j_bench|
    double max_err = 0.0;
    double frob_err = 0.0;
    EstimationMethod method = EstimationMethod::OLS;
    bool pinv_fallback = false;
    bool ill_conditioned = false;
};

inline EstimationReport compare_to_benchmark(const JacobianEstimate& est,
                                             const Eigen::MatrixXd& j_bench) {
    if (est.j.rows() != j_bench.rows() || est.j.cols() != j_bench.cols())
        throw DimensionError("estimate and benchmark dimensions differ");
    EstimationReport rep;
    rep.j_est = est.j;
    rep.j_err = (est.j - j_bench).cwiseAbs();
    rep.max_err = rep.j_err.size() == 0 ? 0.0 : rep.j_err.maxCoeff();
    rep.frob_err = rep.j_err.norm();
    rep.method = est.method;
    rep.pinv_fallback = est.pinv_fallback;
    rep.ill_conditioned = est.ill_conditioned;
    return rep;
}

} // namespace gridjac
