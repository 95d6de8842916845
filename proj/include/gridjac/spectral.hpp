#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gridjac/errors.hpp"

namespace gridjac {

//! N x T data block, rows = nodes/channels, columns = time.
struct ObservationMatrix {
    Eigen::MatrixXd data;

    ObservationMatrix() = default;
    ObservationMatrix(Eigen::MatrixXd m) : data(std::move(m)) {
        if (data.rows() < 2 || data.cols() < 2)
            throw DimensionError("observation matrix needs N >= 2 and T >= 2");
    }

    Eigen::Index n() const { return data.rows(); }
    Eigen::Index t() const { return data.cols(); }
    double aspect_ratio() const {
        return static_cast<double>(data.rows()) / static_cast<double>(data.cols());
    }
};

//! X = L F + R with L the top-p unit-norm principal directions of (1/T)XX^T
//! and F = L^T X (L^T L = I makes the normal-equation form collapse to this).
struct FactorDecomposition {
    Eigen::MatrixXd loadings; // N x p
    Eigen::MatrixXd factors;  // p x T
    Eigen::MatrixXd residues; // N x T
    int p = 0;
};

inline FactorDecomposition factor_decompose(const ObservationMatrix& x, int p) {
    const Eigen::Index n = x.n(), t = x.t();
    if (p < 0 || p > std::min(n, t))
        throw RangeError("factor count out of [0, min(N,T)]");
    FactorDecomposition fd;
    fd.p = p;
    if (p == 0) {
        fd.loadings.resize(n, 0);
        fd.factors.resize(0, t);
        fd.residues = x.data;
        return fd;
    }
    const Eigen::MatrixXd cov = (x.data * x.data.transpose()) / static_cast<double>(t);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigensolver failed on the covariance matrix");
    fd.loadings.resize(n, p);
    for (int j = 0; j < p; ++j) // eigenvalues come out ascending
        fd.loadings.col(j) = es.eigenvectors().col(n - 1 - j);
    fd.factors = fd.loadings.transpose() * x.data;
    fd.residues = x.data - fd.loadings * fd.factors;
    return fd;
}

enum class DensityKind { Empirical, MarchenkoPastur, AR1Theoretical };

//! Sampled density: ascending support (duplicated abscissae are allowed and
//! delimit histogram steps), nonnegative values, unit trapezoid mass.
struct SpectralDensity {
    Eigen::VectorXd support;
    Eigen::VectorXd density;
    DensityKind kind = DensityKind::Empirical;

    double integral() const {
        double total = 0.0;
        for (Eigen::Index i = 0; i + 1 < support.size(); ++i)
            total += 0.5 * (density(i) + density(i + 1)) *
                     (support(i + 1) - support(i));
        return total;
    }
};

//! Eigenvalues of the sample covariance C_N = (1/T) R R^T, ascending.
inline Eigen::VectorXd covariance_eigenvalues(const ObservationMatrix& r) {
    const Eigen::MatrixXd cov =
        (r.data * r.data.transpose()) / static_cast<double>(r.t());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigensolver failed on the covariance matrix");
    return es.eigenvalues();
}

namespace detail {

//! Unit-mass histogram of values, emitted as a staircase so the trapezoid
//! integral is exactly one.
inline SpectralDensity histogram_density(const Eigen::VectorXd& values, int bins) {
    if (bins < 10) throw RangeError("need at least 10 bins");
    double lo = values.minCoeff(), hi = values.maxCoeff();
    if (!(hi > lo)) { // point mass: give it a narrow finite box
        const double pad = std::max(1.0, std::abs(lo)) * 1e-3;
        lo -= pad;
        hi += pad;
    }
    const double width = (hi - lo) / bins;
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(bins);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        int bin = static_cast<int>((values(i) - lo) / width);
        bin = std::clamp(bin, 0, bins - 1);
        counts(bin) += 1.0;
    }
    SpectralDensity out;
    out.kind = DensityKind::Empirical;
    out.support.resize(2 * bins);
    out.density.resize(2 * bins);
    const double mass = static_cast<double>(values.size()) * width;
    for (int i = 0; i < bins; ++i) {
        const double d = counts(i) / mass;
        out.support(2 * i) = lo + i * width;
        out.support(2 * i + 1) = lo + (i + 1) * width;
        out.density(2 * i) = d;
        out.density(2 * i + 1) = d;
    }
    return out;
}

} // namespace detail

//! Raw (histogram) empirical spectral density of (1/T) R R^T.
inline SpectralDensity esd(const ObservationMatrix& r, int bins) {
    return detail::histogram_density(covariance_eigenvalues(r), bins);
}

//! Gaussian-kernel smoothed ESD with Silverman's bandwidth.
inline SpectralDensity esd_smoothed(const ObservationMatrix& r, int points = 512) {
    const Eigen::VectorXd ev = covariance_eigenvalues(r);
    const Eigen::Index n = ev.size();
    const double mean = ev.mean();
    const double sd = std::sqrt((ev.array() - mean).square().sum() /
                                std::max<Eigen::Index>(1, n - 1));
    std::vector<double> sorted(ev.data(), ev.data() + n);
    std::sort(sorted.begin(), sorted.end());
    const double iqr = sorted[static_cast<std::size_t>(0.75 * (n - 1))] -
                       sorted[static_cast<std::size_t>(0.25 * (n - 1))];
    double spread = sd;
    if (iqr > 0.0) spread = std::min(spread, iqr / 1.34);
    double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    if (!(h > 0.0)) h = std::max(1.0, std::abs(mean)) * 1e-3;

    SpectralDensity out;
    out.kind = DensityKind::Empirical;
    const double lo = sorted.front() - 4.0 * h, hi = sorted.back() + 4.0 * h;
    out.support = Eigen::VectorXd::LinSpaced(points, lo, hi);
    out.density.resize(points);
    const double norm = 1.0 / (n * h * std::sqrt(2.0 * M_PI));
    for (int i = 0; i < points; ++i) {
        double acc = 0.0;
        for (double v : sorted) {
            const double u = (out.support(i) - v) / h;
            acc += std::exp(-0.5 * u * u);
        }
        out.density(i) = acc * norm;
    }
    return out;
}

//! Marchenko-Pastur density on [s1, s2], s1,2 = (1 -+ sqrt(c))^2.
inline SpectralDensity mp_density(double c, const Eigen::VectorXd& grid) {
    if (!(c > 0.0) || c > 1.0) throw RangeError("aspect ratio c must be in (0, 1]");
    const double s1 = (1.0 - std::sqrt(c)) * (1.0 - std::sqrt(c));
    const double s2 = (1.0 + std::sqrt(c)) * (1.0 + std::sqrt(c));
    SpectralDensity out;
    out.kind = DensityKind::MarchenkoPastur;
    out.support = grid;
    out.density = Eigen::VectorXd::Zero(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        const double x = grid(i);
        if (x <= s1 || x >= s2 || x <= 0.0) continue;
        out.density(i) = std::sqrt((x - s1) * (s2 - x)) / (2.0 * M_PI * c * x);
    }
    return out;
}

inline std::pair<double, double> mp_support(double c) {
    return {(1.0 - std::sqrt(c)) * (1.0 - std::sqrt(c)),
            (1.0 + std::sqrt(c)) * (1.0 + std::sqrt(c))};
}

namespace detail {

//! Roots of c4 m^4 + c3 m^3 + c2 m^2 + c1 m + c0 via the companion matrix.
inline std::array<std::complex<double>, 4> quartic_roots(
    std::complex<double> c4, std::complex<double> c3, std::complex<double> c2,
    std::complex<double> c1, std::complex<double> c0) {
    Eigen::Matrix4cd companion = Eigen::Matrix4cd::Zero();
    companion(0, 3) = -c0 / c4;
    companion(1, 3) = -c1 / c4;
    companion(2, 3) = -c2 / c4;
    companion(3, 3) = -c3 / c4;
    companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
    Eigen::ComplexEigenSolver<Eigen::Matrix4cd> es(companion);
    std::array<std::complex<double>, 4> roots;
    for (int i = 0; i < 4; ++i) roots[i] = es.eigenvalues()(i);
    return roots;
}

//! Moment generating function of the AR(1) separable model at one z:
//! the quartic in M with a^2 = 1 - b^2, tracked by continuity from prev.
inline std::complex<double> ar1_m_root(std::complex<double> z, double b, double c,
                                       std::complex<double> prev, double lambda) {
    const double a2 = 1.0 - b * b;
    const double a4 = a2 * a2;
    const std::complex<double> c4 = a4 * c * c;
    const std::complex<double> c3 = 2.0 * a2 * c * (-(1.0 + b * b) * z + a2 * c);
    const std::complex<double> c2 =
        a4 * z * z - 2.0 * a2 * c * (1.0 + b * b) * z + (c * c - 1.0) * a4;
    const std::complex<double> c1 = -2.0 * a4;
    const std::complex<double> c0 = -a4;
    const auto roots = quartic_roots(c4, c3, c2, c1, c0);

    // Physical branch: Im G <= 0 in the upper half plane (Herglotz), nearest
    // to the previous grid point's root.
    double best = std::numeric_limits<double>::infinity();
    std::complex<double> pick;
    bool found = false;
    for (const auto& m : roots) {
        const std::complex<double> g = (m + 1.0) / z;
        if (g.imag() > 1e-9) continue;
        const double dist = std::abs(m - prev);
        if (dist < best) {
            best = dist;
            pick = m;
            found = true;
        }
    }
    if (!found)
        throw RootSelectionError(lambda, "no physical quartic root at lambda = " +
                                             std::to_string(lambda));
    return pick;
}

} // namespace detail

//! Limiting spectral density of the AR(1) separable covariance model:
//! solve the quartic for M(z) at z = lambda + i*eps, map through
//! G = (M+1)/z and take -Im G / pi. eps defaults to 1e-4 of the grid span
//! (halving it moves interior values by < 1e-3, see the sensitivity test).
inline SpectralDensity ar1_theoretical_density(double b, double c,
                                               const Eigen::VectorXd& grid,
                                               double epsilon = 0.0) {
    if (!(std::abs(b) < 1.0)) throw RangeError("AR coefficient must satisfy |b| < 1");
    if (!(c > 0.0) || c > 1.0) throw RangeError("aspect ratio c must be in (0, 1]");
    if (grid.size() < 2) throw RangeError("need at least two grid points");
    const double span = grid(grid.size() - 1) - grid(0);
    if (!(span > 0.0)) throw RangeError("grid must be ascending");
    const double eps = epsilon > 0.0 ? epsilon : 1e-4 * span;

    SpectralDensity out;
    out.kind = DensityKind::AR1Theoretical;
    out.support = grid;
    out.density.resize(grid.size());

    // Start the continuity tracking far to the right of the support, where
    // G ~ 1/z and hence M ~ 1/z, then walk in.
    const double far = grid(grid.size() - 1) + 2.0 * span + 2.0;
    std::complex<double> prev(1.0 / far, 0.0);
    for (int step = 0; step < 32; ++step) {
        const double lam = far + (grid(grid.size() - 1) - far) * step / 31.0;
        prev = detail::ar1_m_root({lam, eps}, b, c, prev, lam);
    }
    for (Eigen::Index i = grid.size() - 1; i >= 0; --i) {
        const double lam = grid(i);
        prev = detail::ar1_m_root({lam, eps}, b, c, prev, lam);
        const std::complex<double> g = (prev + 1.0) / std::complex<double>(lam, eps);
        double rho = -g.imag() / M_PI;
        if (rho < 1e-9) rho = 0.0;
        out.density(i) = rho;
    }
    return out;
}

//! Burg's method at order one. Returns the AR coefficient estimate and the
//! implied innovation variance; |b_hat| < 1 by construction.
inline std::pair<double, double> estimate_ar_coefficient(
    const Eigen::VectorXd& series) {
    const Eigen::Index n = series.size();
    if (n < 16) throw InsufficientData("need at least 16 samples");
    double num = 0.0, den = 0.0;
    for (Eigen::Index t = 1; t < n; ++t) {
        num += series(t) * series(t - 1);
        den += series(t) * series(t) + series(t - 1) * series(t - 1);
    }
    num *= 2.0;
    if (den <= 0.0) throw DegenerateSeries("series has no energy");
    const double b_hat = num / den;
    if (!(std::abs(b_hat) < 1.0))
        throw DegenerateSeries("degenerate series: |b_hat| reached 1");
    const double marginal_var = series.squaredNorm() / static_cast<double>(n);
    return {b_hat, (1.0 - b_hat * b_hat) * marginal_var};
}

//! AR(1) model with unit marginal variance: innovations ~ N(0, 1 - b^2).
struct ARModel {
    double b = 0.0;
    double innovation_var = 1.0;

    explicit ARModel(double coeff) : b(coeff), innovation_var(1.0 - coeff * coeff) {
        if (!(std::abs(coeff) < 1.0))
            throw RangeError("AR coefficient must satisfy |b| < 1");
    }
};

//! Integrate a sampled density over [lo, hi] (piecewise-linear, zero outside).
inline double integrate_density_over(const SpectralDensity& rho, double lo,
                                     double hi) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i + 1 < rho.support.size(); ++i) {
        const double x0 = rho.support(i), x1 = rho.support(i + 1);
        if (x1 <= lo || x0 >= hi || x1 <= x0) continue;
        const double a = std::max(x0, lo), bnd = std::min(x1, hi);
        const double w = x1 - x0;
        const double ya = rho.density(i) + (rho.density(i + 1) - rho.density(i)) *
                                               (a - x0) / w;
        const double yb = rho.density(i) + (rho.density(i + 1) - rho.density(i)) *
                                               (bnd - x0) / w;
        acc += 0.5 * (ya + yb) * (bnd - a);
    }
    return acc;
}

//! Bin masses of a density on a common uniform grid, normalized to sum one.
inline Eigen::VectorXd rebin_masses(const SpectralDensity& rho, double lo,
                                    double hi, int bins) {
    Eigen::VectorXd masses(bins);
    const double width = (hi - lo) / bins;
    for (int i = 0; i < bins; ++i)
        masses(i) = integrate_density_over(rho, lo + i * width, lo + (i + 1) * width);
    const double total = masses.sum();
    if (!(total > 0.0)) throw MetricError("density has no mass on the common grid");
    return masses / total;
}

//! Divergence between two binned densities: sum_i p_i (a log a + b log b
//! - 2 v log v), v = (a+b)/2, uniform weights p_i = 1, 0 log 0 = 0. This is
//! twice the standard Jensen-Shannon bin term.
inline double js_metric(const SpectralDensity& rho_a, const SpectralDensity& rho_b,
                        int bins = 100) {
    if (rho_a.support.size() == 0 || rho_b.support.size() == 0)
        throw MetricError("empty density support");
    const double lo = std::min(rho_a.support.minCoeff(), rho_b.support.minCoeff());
    const double hi = std::max(rho_a.support.maxCoeff(), rho_b.support.maxCoeff());
    if (!(hi > lo)) throw MetricError("degenerate common grid");
    const Eigen::VectorXd a = rebin_masses(rho_a, lo, hi, bins);
    const Eigen::VectorXd b = rebin_masses(rho_b, lo, hi, bins);
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    double d = 0.0;
    for (int i = 0; i < bins; ++i) {
        const double v = 0.5 * (a(i) + b(i));
        d += xlogx(a(i)) + xlogx(b(i)) - 2.0 * xlogx(v);
    }
    return std::max(0.0, d);
}

} // namespace gridjac
