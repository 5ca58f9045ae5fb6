#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mcqr/common.hpp"
#include "mcqr/linalg.hpp"
#include "mcqr/ot.hpp"
#include "mcqr/rng.hpp"

namespace mcqr {

/// Inner-product value of two 1-d samples under the monotone coupling, which
/// is optimal in one dimension. Runs in O(n log n) through sorting and a
/// northwest-corner sweep over the two sorted grids.
inline double wip_1d(Vec a, Vec b) {
    require<EmptyInput>(a.size() > 0 && b.size() > 0, "wip_1d: empty sample");
    check_finite(a, "wip_1d a");
    check_finite(b, "wip_1d b");
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    const long m = a.size(), n = b.size();
    long i = 0, j = 0;
    // integer point masses (n per a-point, m per b-point) keep the sweep exact
    double sup = static_cast<double>(n), dem = static_cast<double>(m);
    double total = 0.0;
    for (;;) {
        const double t = std::min(sup, dem);
        total += t * a[i] * b[j];
        sup -= t;
        dem -= t;
        if (i == m - 1 && j == n - 1) break;
        if (sup == 0.0 && i < m - 1) {
            ++i;
            sup = static_cast<double>(n);
        } else {
            ++j;
            dem = static_cast<double>(m);
        }
    }
    return total / (static_cast<double>(m) * static_cast<double>(n));
}

enum class ResidualKind { gaussian, uniform01, point_mass };

struct IdentityCheck {
    double lhs = 0.0;  // grid-composite quantile value plus half the mean output
    double rhs = 0.0;  // transport inner product of residuals against U[0,1]
};

/// Compares the two representations of the 1-d composite quantile value on a
/// synthetic sample: the dense-grid check-loss program plus half the output
/// mean, against the transport inner product of the residuals with uniform
/// reference draws. Both converge to the same population quantity.
inline IdentityCheck check_cqr_wip_identity(int n, double b, RngStream& rng,
                                            ResidualKind kind = ResidualKind::gaussian,
                                            double point_value = 1.0,
                                            int levels = 199) {
    require<InvalidConfig>(n >= 2, "identity check: n must be >= 2");
    require<InvalidConfig>(levels >= 1, "identity check: levels must be >= 1");

    Vec x(n), w(n);
    for (int i = 0; i < n; ++i) x[i] = rng.normal();
    switch (kind) {
        case ResidualKind::gaussian:
            for (int i = 0; i < n; ++i) w[i] = rng.normal();
            break;
        case ResidualKind::uniform01:
            for (int i = 0; i < n; ++i) w[i] = rng.uniform();
            break;
        case ResidualKind::point_mass:
            w.setConstant(point_value);
            break;
    }
    const Vec y = b * x + w;

    // residuals recovered at the true slope, sorted once; each level's
    // intercept is an order statistic and the check-loss sum comes from
    // prefix sums
    Vec ws = w;
    std::sort(ws.data(), ws.data() + n);
    Vec prefix(n + 1);
    prefix[0] = 0.0;
    for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + ws[i];

    double grid_value = 0.0;
    for (int k = 1; k <= levels; ++k) {
        const double tau = static_cast<double>(k) / (levels + 1);
        const int idx = static_cast<int>(std::ceil(n * tau)) - 1;  // 0-based
        const double q = ws[idx];
        // sum over w <= q of (q - w) weighted (1 - tau), over w > q of
        // (w - q) weighted tau
        const int below = idx + 1;
        const double below_sum = q * below - prefix[below];
        const double above_sum = (prefix[n] - prefix[below]) - q * (n - below);
        grid_value += ((1.0 - tau) * below_sum + tau * above_sum) / n;
    }
    grid_value /= levels + 1;

    IdentityCheck out;
    out.lhs = grid_value + 0.5 * y.mean();

    Vec u(n);
    for (int i = 0; i < n; ++i) u[i] = rng.uniform();
    out.rhs = wip_1d(w, u);
    return out;
}

/// The curve sqrt(r^2 + delta^2) - r: how much the loss must rise at distance
/// delta from the optimum when the noise term contributes level r.
inline double lower_bound_curve(double r, double delta) {
    require<DomainError>(r >= 0.0 && delta >= 0.0,
                         "lower_bound_curve: negative input");
    return std::hypot(r, delta) - r;
}

struct BoundCheck {
    double lhs = 0.0;   // closed-form excess loss
    double rhs = 0.0;   // lower-bound curve value
    bool pass = false;
};

/// Closed-form Gaussian instance of the excess-loss lower bound: with
/// covariate covariance sigma, coefficient error delta and Gaussian noise
/// covariance, the excess loss against a standard normal reference is
/// tr^{1/2}-expressible and must dominate the curve at the Mahalanobis
/// distance of delta.
inline BoundCheck verify_population_lower_bound(const SpdMatrix& sigma,
                                                const Mat& delta,
                                                const SpdMatrix& noise_cov) {
    require<DimensionError>(delta.cols() == sigma.dim(),
                            "lower bound: delta/sigma mismatch");
    require<DimensionError>(delta.rows() == noise_cov.dim(),
                            "lower bound: delta/noise mismatch");
    check_finite(delta, "lower bound delta");

    const Eigen::Index d = delta.rows();
    const Mat eye = Mat::Identity(d, d);
    Mat shifted = delta * sigma.mat() * delta.transpose() + noise_cov.mat();
    shifted = 0.5 * (shifted + shifted.transpose()).eval();

    BoundCheck out;
    const double r = gelbrich_wip(noise_cov, SpdMatrix(eye));
    out.lhs = gelbrich_wip(SpdMatrix(shifted), SpdMatrix(eye)) - r;
    out.rhs = lower_bound_curve(r, mahalanobis_matrix_norm(delta, sigma));
    out.pass = out.lhs >= out.rhs - 1e-9;
    return out;
}

struct SuperadditivityTrial {
    double statistic = 0.0;  // wip(Z+E,U)^2 - wip(Z,U)^2 - wip(E,U)^2
    double bootstrap_se = 0.0;
    bool pass = false;
};

/// One sampled trial of the squared-product superadditivity: independent
/// Gaussian clouds Z and E with random covariances against a standard normal
/// reference. The statistic should be nonnegative in population; the pass
/// flag allows three bootstrap standard errors of sampling slack, with every
/// resample drawing all three clouds independently.
inline SuperadditivityTrial sampled_superadditivity_trial(std::uint64_t seed,
                                                          std::uint64_t stream,
                                                          int n, int d,
                                                          int bootstraps) {
    require<InvalidConfig>(n >= 2, "superadditivity trial: n must be >= 2");
    require<InvalidConfig>(d >= 1, "superadditivity trial: d must be >= 1");
    require<InvalidConfig>(bootstraps >= 2,
                           "superadditivity trial: need >= 2 bootstraps");
    RngStream rng(seed, stream);

    const auto draw_chol = [&] {
        Mat g(d, d);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
        const Mat spd =
            g * g.transpose() / static_cast<double>(d) + 0.4 * Mat::Identity(d, d);
        return cholesky(SpdMatrix(spd));
    };
    const auto draw_cloud = [&](const Mat& chol_lower) {
        Mat z(n, d);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) z(i, j) = rng.normal();
        return Mat(z * chol_lower.transpose());
    };
    const Mat cz = draw_chol();
    const Mat ce = draw_chol();
    const Mat z = draw_cloud(cz);
    const Mat e = draw_cloud(ce);
    const Mat u = draw_cloud(Mat::Identity(d, d));

    const auto stat_of = [](const Mat& zc, const Mat& ec, const Mat& uc) {
        const double full = wasserstein_product(PointCloud(zc + ec), PointCloud(uc));
        const double sz = wasserstein_product(PointCloud(zc), PointCloud(uc));
        const double se = wasserstein_product(PointCloud(ec), PointCloud(uc));
        return full * full - sz * sz - se * se;
    };

    SuperadditivityTrial out;
    out.statistic = stat_of(z, e, u);

    Vec reps(bootstraps);
    for (int bi = 0; bi < bootstraps; ++bi) {
        Mat zb(n, d), eb(n, d), ub(n, d);
        for (int i = 0; i < n; ++i) {
            zb.row(i) = z.row(static_cast<int>(rng.next_u64() % n));
            eb.row(i) = e.row(static_cast<int>(rng.next_u64() % n));
            ub.row(i) = u.row(static_cast<int>(rng.next_u64() % n));
        }
        reps[bi] = stat_of(zb, eb, ub);
    }
    const double mean = reps.mean();
    out.bootstrap_se = std::sqrt((reps.array() - mean).square().sum() /
                                 std::max(bootstraps - 1, 1));
    out.pass = out.statistic >= -3.0 * out.bootstrap_se;
    return out;
}

struct RateSweep {
    std::vector<int> n_grid;  // strictly increasing sample sizes
    int reps = 0;
    Mat errors;               // one row per grid point, one column per rep

    void validate() const {
        require<InvalidConfig>(n_grid.size() >= 4,
                               "rate sweep: need at least 4 grid points");
        for (std::size_t i = 0; i + 1 < n_grid.size(); ++i)
            require<InvalidConfig>(n_grid[i] < n_grid[i + 1],
                                   "rate sweep: grid must be strictly increasing");
        require<InvalidConfig>(n_grid.front() >= 1, "rate sweep: grid must be positive");
        require<InvalidConfig>(reps >= 1, "rate sweep: reps must be >= 1");
        require<DimensionError>(
            errors.rows() == static_cast<Eigen::Index>(n_grid.size()) &&
                errors.cols() == reps,
            "rate sweep: errors shape mismatch");
        check_finite(errors, "rate sweep errors");
    }
};

struct SlopeFit {
    double slope = 0.0;
    double r2 = 0.0;
};

/// Least squares of log median error on log n. The slope estimates the
/// convergence exponent; r2 reports how log-linear the trend is.
inline SlopeFit estimate_rate_slope(const RateSweep& sweep) {
    sweep.validate();
    const int g = static_cast<int>(sweep.n_grid.size());
    Vec lx(g), ly(g);
    for (int i = 0; i < g; ++i) {
        Vec row = sweep.errors.row(i).transpose();
        std::sort(row.data(), row.data() + row.size());
        const int r = static_cast<int>(row.size());
        const double med =
            r % 2 == 1 ? row[r / 2] : 0.5 * (row[r / 2 - 1] + row[r / 2]);
        require<DomainError>(med > 0.0, "rate sweep: nonpositive median error");
        lx[i] = std::log(static_cast<double>(sweep.n_grid[i]));
        ly[i] = std::log(med);
    }
    const double mx = lx.mean(), my = ly.mean();
    const Vec cx = lx.array() - mx, cy = ly.array() - my;
    const double sxx = cx.squaredNorm();
    const double sxy = cx.dot(cy);
    const double syy = cy.squaredNorm();

    SlopeFit fit;
    fit.slope = sxy / sxx;
    if (syy < 1e-30) {
        fit.r2 = 1.0;  // constant response is fit perfectly by a flat line
    } else {
        const double ss_res = syy - sxy * sxy / sxx;
        fit.r2 = 1.0 - ss_res / syy;
    }
    return fit;
}

} // namespace mcqr
