#pragma once

#include <algorithm>
#include <vector>

#include "mcqr/common.hpp"
#include "mcqr/simplex.hpp"

namespace mcqr {

struct OlsFit {
    Mat b_hat;  // d x p
};

/// Plain least squares without intercept: b_hat' solves the normal equations.
inline OlsFit fit_ols(const Mat& x, const Mat& y) {
    require<EmptyInput>(x.rows() > 0, "ols: empty input");
    require<DimensionError>(x.rows() == y.rows(), "ols: row mismatch");
    require<InvalidConfig>(x.cols() >= 1 && y.cols() >= 1,
                           "ols: need at least one covariate and one output");
    check_finite(x, "ols covariates");
    check_finite(y, "ols outputs");
    const Eigen::ColPivHouseholderQR<Mat> qr(x);
    require<RankDeficient>(qr.rank() == x.cols(), "ols: rank-deficient covariates");
    OlsFit fit;
    fit.b_hat = qr.solve(y).transpose();
    return fit;
}

struct CqrConfig {
    int num_levels = 19;  // quantile levels k/(num_levels+1), k = 1..num_levels

    double tau(int k) const {
        return static_cast<double>(k + 1) / static_cast<double>(num_levels + 1);
    }
    void validate() const {
        require<InvalidConfig>(num_levels >= 1, "cqr: need at least one level");
    }
};

struct CqrFit {
    Vec b_hat;      // p coefficients
    Vec q_hat;      // num_levels intercepts, ascending
    double objective = 0.0;  // sum of check losses at the optimum
};

/// Composite quantile regression for a single output: one slope vector shared
/// across all levels, one intercept per level. Solved through the dual linear
/// program, whose variables are box-bounded level scores with zero-sum rows;
/// the slope and the intercepts fall out as the equality multipliers.
inline CqrFit fit_cqr_1d(const Mat& x, const Vec& y, const CqrConfig& cfg = {}) {
    cfg.validate();
    const int n = static_cast<int>(y.size());
    const int p = static_cast<int>(x.cols());
    const int k_levels = cfg.num_levels;
    require<EmptyInput>(n > 0, "cqr: empty input");
    require<DimensionError>(x.rows() == n, "cqr: row mismatch");
    check_finite(x, "cqr covariates");
    check_finite(y, "cqr outputs");

    LpProblem lp;
    const int rows = p + k_levels;
    const int cols = n * k_levels;
    lp.a = Mat::Zero(rows, cols);
    lp.c = Vec(cols);
    lp.lo = Vec(cols);
    lp.up = Vec(cols);
    for (int k = 0; k < k_levels; ++k) {
        const double tau = cfg.tau(k);
        for (int i = 0; i < n; ++i) {
            const int v = k * n + i;
            if (p > 0) lp.a.col(v).head(p) = x.row(i).transpose();
            lp.a(p + k, v) = 1.0;
            lp.c[v] = -y[i];
            lp.lo[v] = tau - 1.0;
            lp.up[v] = tau;
        }
    }
    lp.rhs = Vec::Zero(rows);

    const auto sol = solve_lp(lp);
    require<SolverStalled>(sol.status == LpStatus::optimal,
                           "cqr: unexpected solver status");

    CqrFit fit;
    fit.b_hat = -sol.y.head(p);
    fit.q_hat = -sol.y.tail(k_levels);
    std::sort(fit.q_hat.data(), fit.q_hat.data() + k_levels);
    fit.objective = -sol.objective;
    return fit;
}

struct CoorcqrFit {
    Mat b_hat;      // d x p, one 1-d fit per output
    Mat q_hat;      // d x num_levels
    double objective = 0.0;  // summed across outputs
};

/// Coordinate-wise composite quantile regression: each output column is fit
/// independently with the shared configuration.
inline CoorcqrFit fit_coorcqr(const Mat& x, const Mat& y,
                              const CqrConfig& cfg = {}) {
    cfg.validate();
    require<EmptyInput>(y.rows() > 0 && y.cols() > 0, "coorcqr: empty input");
    require<DimensionError>(x.rows() == y.rows(), "coorcqr: row mismatch");
    const int d = static_cast<int>(y.cols());
    CoorcqrFit fit;
    fit.b_hat = Mat(d, x.cols());
    fit.q_hat = Mat(d, cfg.num_levels);
    for (int j = 0; j < d; ++j) {
        const CqrFit one = fit_cqr_1d(x, y.col(j), cfg);
        fit.b_hat.row(j) = one.b_hat.transpose();
        fit.q_hat.row(j) = one.q_hat.transpose();
        fit.objective += one.objective;
    }
    return fit;
}

struct SpqrConfig {
    Vec direction;              // unit vector, unused at level 0
    double level = 0.0;         // quantile level in [0, 1]
    double smoothing_eps = 1e-8;
    int max_iters = 10000;
    double tol = 1e-8;          // first-order stationarity threshold

    void validate(Eigen::Index d) const {
        require<InvalidConfig>(level >= 0.0 && level <= 1.0,
                               "spqr: level must lie in [0, 1]");
        require<InvalidConfig>(smoothing_eps > 0.0, "spqr: smoothing_eps must be > 0");
        require<InvalidConfig>(max_iters >= 1 && tol > 0.0, "spqr: bad iteration limits");
        if (level > 0.0) {
            require<DimensionError>(direction.size() == d,
                                    "spqr: direction dimension mismatch");
            require<InvalidConfig>(std::abs(direction.norm() - 1.0) <= 1e-8,
                                   "spqr: direction must be a unit vector");
        }
    }
};

struct SpqrFit {
    Mat b_hat;   // d x p
    Vec a_hat;   // d intercept
    double objective = 0.0;
    long iterations = 0;
    bool converged = false;
    std::vector<double> objective_trace;  // value before each update
};

/// Spatial quantile regression with intercept: minimizes the smoothed norm
/// objective mean sqrt(|r_i|^2 + eps) + level * u'(mean residual) by
/// iteratively reweighted least squares with step halving. At level 0 this is
/// geometric-median regression.
inline SpqrFit fit_spqr(const Mat& x, const Mat& y, const SpqrConfig& cfg = {}) {
    require<EmptyInput>(y.rows() > 0 && y.cols() > 0, "spqr: empty input");
    require<DimensionError>(x.rows() == y.rows(), "spqr: row mismatch");
    check_finite(x, "spqr covariates");
    check_finite(y, "spqr outputs");
    const int n = static_cast<int>(y.rows());
    const int d = static_cast<int>(y.cols());
    const int p = static_cast<int>(x.cols());
    cfg.validate(d);

    Mat xa(n, p + 1);  // covariates with an intercept column
    if (p > 0) xa.leftCols(p) = x;
    xa.col(p).setOnes();
    const Vec xabar = xa.colwise().mean();
    const Vec ybar = y.colwise().mean();
    const double tau = cfg.level;
    const Vec u = tau > 0.0 ? cfg.direction : Vec::Zero(d);

    const auto objective = [&](const Mat& c) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const Vec r = y.row(i).transpose() - c * xa.row(i).transpose();
            s += std::sqrt(r.squaredNorm() + cfg.smoothing_eps);
        }
        s /= n;
        if (tau > 0.0) s += tau * u.dot(ybar - c * xabar);
        return s;
    };

    Mat c = xa.colPivHouseholderQr().solve(y).transpose();  // least squares start
    double fcur = objective(c);

    SpqrFit fit;
    fit.objective_trace.push_back(fcur);

    for (long it = 1; it <= cfg.max_iters; ++it) {
        fit.iterations = it;

        Mat gram = Mat::Zero(p + 1, p + 1);
        Mat cross = Mat::Zero(d, p + 1);
        Mat grad = Mat::Zero(d, p + 1);
        for (int i = 0; i < n; ++i) {
            const Vec xi = xa.row(i).transpose();
            const Vec r = y.row(i).transpose() - c * xi;
            const double w = 1.0 / std::sqrt(r.squaredNorm() + cfg.smoothing_eps);
            gram.noalias() += w * xi * xi.transpose();
            cross.noalias() += w * y.row(i).transpose() * xi.transpose();
            grad.noalias() -= w * r * xi.transpose();
        }
        gram /= n;
        cross /= n;
        grad /= n;
        if (tau > 0.0) {
            cross.noalias() += tau * u * xabar.transpose();
            grad.noalias() -= tau * u * xabar.transpose();
        }

        if (grad.cwiseAbs().maxCoeff() <= cfg.tol) {
            fit.converged = true;
            break;
        }

        Mat cnext = gram.ldlt().solve(cross.transpose()).transpose();
        double fnext = objective(cnext);
        for (int halve = 0; halve < 60 && fnext > fcur; ++halve) {
            cnext = 0.5 * (cnext + c);
            fnext = objective(cnext);
        }
        if (fnext > fcur) break;  // no descent direction left at this precision
        c = cnext;
        fcur = fnext;
        fit.objective_trace.push_back(fcur);
    }

    fit.b_hat = c.leftCols(p);
    fit.a_hat = c.col(p);
    fit.objective = fcur;
    return fit;
}

} // namespace mcqr
