#pragma once

#include <cmath>

#include "mcqr/common.hpp"
#include "mcqr/linalg.hpp"
#include "mcqr/rng.hpp"

namespace mcqr {

inline double std_normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

/// Shifted Pareto with density proportional to alpha * s^(alpha+1) / (x-k)^(alpha+1)
/// on [k+s, inf). Quantile: k + s * (1-u)^(-1/alpha).
struct ParetoMarginal {
    double loc;
    double alpha;
    double scale;

    void validate() const {
        require<InvalidConfig>(alpha > 0.0, "pareto: alpha must be positive");
        require<InvalidConfig>(scale > 0.0, "pareto: scale must be positive");
    }

    double quantile(double u) const {
        // clamp away from 1 so the heavy tail stays finite in floating point
        u = std::min(u, 1.0 - 1e-16);
        u = std::max(u, 0.0);
        return loc + scale * std::pow(1.0 - u, -1.0 / alpha);
    }

    double support_min() const { return loc + scale; }

    double mean() const {
        require<DomainError>(alpha > 1.0, "pareto: mean undefined for alpha <= 1");
        return loc + scale * alpha / (alpha - 1.0);
    }
};

enum class NoiseKind {
    gaussian_iso,
    multivariate_t,
    pareto_copula,
    banana,
    contaminated_pareto,
    contaminated_gaussian,
};

struct NoiseModel {
    NoiseKind kind = NoiseKind::gaussian_iso;
    double nu = 2.0;               // multivariate_t degrees of freedom
    double epsilon = 0.1;          // contamination fraction
    double copula_base = 0.9;      // AR(1) correlation of the Gaussian copula
    double banana_jitter = 0.3;
    ParetoMarginal pareto{-2.0, 2.0, 1.0};          // pareto_copula marginals
    ParetoMarginal pareto_clean{-10.0 / 9.0, 10.0, 1.0};  // contaminated_pareto bulk
    ParetoMarginal pareto_contam{10.0, 2.0, 10.0};        // contaminated_pareto outliers

    void validate(Eigen::Index d) const {
        require<InvalidConfig>(d >= 1, "noise: d must be >= 1");
        switch (kind) {
            case NoiseKind::gaussian_iso:
                break;
            case NoiseKind::multivariate_t:
                require<InvalidConfig>(nu > 0.0, "noise: t dof must be positive");
                break;
            case NoiseKind::pareto_copula:
                pareto.validate();
                require<InvalidConfig>(std::abs(copula_base) < 1.0,
                                       "noise: |copula base| must be < 1");
                break;
            case NoiseKind::banana:
                require<InvalidConfig>(d >= 2, "noise: banana needs d >= 2");
                require<InvalidConfig>(banana_jitter >= 0.0, "noise: negative jitter");
                break;
            case NoiseKind::contaminated_pareto:
                pareto_clean.validate();
                pareto_contam.validate();
                require<InvalidConfig>(std::abs(copula_base) < 1.0,
                                       "noise: |copula base| must be < 1");
                require<InvalidConfig>(epsilon >= 0.0 && epsilon <= 1.0,
                                       "noise: epsilon outside [0,1]");
                break;
            case NoiseKind::contaminated_gaussian:
                require<InvalidConfig>(epsilon >= 0.0 && epsilon <= 1.0,
                                       "noise: epsilon outside [0,1]");
                break;
        }
    }
};

enum class CovariateKind { gaussian_toeplitz };

struct CovariateModel {
    CovariateKind kind = CovariateKind::gaussian_toeplitz;
    double base = 2.0;  // Sigma_ij = base^(-|i-j|)

    void validate() const {
        require<InvalidConfig>(base > 1.0, "covariates: decay base must be > 1");
    }
};

enum class ReferenceKind {
    standard_gaussian,
    uniform_cube,
    spherical_uniform,
    uniform_interval,
};

struct ReferenceModel {
    ReferenceKind kind = ReferenceKind::standard_gaussian;

    void validate(Eigen::Index d) const {
        require<InvalidConfig>(d >= 1, "reference: d must be >= 1");
        if (kind == ReferenceKind::uniform_interval)
            require<InvalidConfig>(d == 1, "reference: uniform_interval is 1-d only");
    }
};

inline Mat toeplitz_sigma(Eigen::Index p, double base = 2.0) {
    require<InvalidConfig>(p >= 1, "toeplitz_sigma: p must be >= 1");
    require<InvalidConfig>(base > 1.0, "toeplitz_sigma: base must be > 1");
    Mat sigma(p, p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            sigma(i, j) = std::pow(base, -static_cast<double>(std::abs(i - j)));
    return sigma;
}

inline Mat sample_covariates(Eigen::Index n, const CovariateModel& model,
                             Eigen::Index p, RngStream& rng) {
    require<EmptyInput>(n >= 1, "sample_covariates: n must be >= 1");
    require<InvalidConfig>(p >= 1, "sample_covariates: p must be >= 1");
    model.validate();
    const Mat chol = cholesky(toeplitz_sigma(p, model.base));
    Mat x(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        x.row(i) = (chol * rng.normals(p)).transpose();
    return x;
}

namespace detail {

/// Uniform draw from the unit ball in R^k: normalized Gaussian direction
/// scaled by U^(1/k).
inline Vec uniform_ball(Eigen::Index k, RngStream& rng) {
    Vec z = rng.normals(k);
    double nrm = z.norm();
    while (nrm == 0.0) {
        z = rng.normals(k);
        nrm = z.norm();
    }
    const double r = std::pow(rng.uniform(), 1.0 / static_cast<double>(k));
    return (r / nrm) * z;
}

} // namespace detail

inline Mat sample_noise(Eigen::Index n, const NoiseModel& model, Eigen::Index d,
                        RngStream& rng) {
    require<EmptyInput>(n >= 1, "sample_noise: n must be >= 1");
    model.validate(d);
    Mat e(n, d);
    switch (model.kind) {
        case NoiseKind::gaussian_iso: {
            for (Eigen::Index i = 0; i < n; ++i)
                e.row(i) = rng.normals(d).transpose();
            break;
        }
        case NoiseKind::multivariate_t: {
            for (Eigen::Index i = 0; i < n; ++i) {
                const Vec z = rng.normals(d);
                const double s = std::sqrt(rng.chi_square(model.nu) / model.nu);
                e.row(i) = (z / s).transpose();
            }
            break;
        }
        case NoiseKind::pareto_copula: {
            const Mat chol = cholesky(toeplitz_sigma(d, 1.0 / model.copula_base));
            for (Eigen::Index i = 0; i < n; ++i) {
                const Vec z = chol * rng.normals(d);
                for (Eigen::Index j = 0; j < d; ++j)
                    e(i, j) = model.pareto.quantile(std_normal_cdf(z[j]));
            }
            break;
        }
        case NoiseKind::banana: {
            // (B_{d-1}, ||B_{d-1}||^2 - E||B_{d-1}||^2) plus a small full-dim
            // ball jitter; the subtraction keeps every coordinate mean zero
            const double center =
                static_cast<double>(d - 1) / static_cast<double>(d + 1);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Vec b1 = detail::uniform_ball(d - 1, rng);
                const Vec b2 = detail::uniform_ball(d, rng);
                e.row(i).head(d - 1) = b1.transpose();
                e(i, d - 1) = b1.squaredNorm() - center;
                e.row(i) += model.banana_jitter * b2.transpose();
            }
            break;
        }
        case NoiseKind::contaminated_pareto: {
            const Mat chol = cholesky(toeplitz_sigma(d, 1.0 / model.copula_base));
            for (Eigen::Index i = 0; i < n; ++i) {
                const bool bad = rng.bernoulli(model.epsilon);
                const ParetoMarginal& marg =
                    bad ? model.pareto_contam : model.pareto_clean;
                const Vec z = chol * rng.normals(d);
                for (Eigen::Index j = 0; j < d; ++j)
                    e(i, j) = marg.quantile(std_normal_cdf(z[j]));
            }
            break;
        }
        case NoiseKind::contaminated_gaussian: {
            for (Eigen::Index i = 0; i < n; ++i) {
                const bool bad = rng.bernoulli(model.epsilon);
                e.row(i) = rng.normals(d).transpose();
                if (bad) e.row(i).array() += 100.0;
            }
            break;
        }
    }
    return e;
}

inline Mat sample_reference(Eigen::Index m, const ReferenceModel& model,
                            Eigen::Index d, RngStream& rng) {
    require<EmptyInput>(m >= 1, "sample_reference: m must be >= 1");
    model.validate(d);
    Mat u(m, d);
    switch (model.kind) {
        case ReferenceKind::standard_gaussian: {
            for (Eigen::Index i = 0; i < m; ++i)
                u.row(i) = rng.normals(d).transpose();
            break;
        }
        case ReferenceKind::uniform_cube: {
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j < d; ++j) u(i, j) = rng.uniform();
            break;
        }
        case ReferenceKind::spherical_uniform: {
            // uniform radius times uniform direction; this is not the
            // volume-uniform ball, the radius is U[0,1] by construction
            for (Eigen::Index i = 0; i < m; ++i) {
                Vec z = rng.normals(d);
                double nrm = z.norm();
                while (nrm == 0.0) {
                    z = rng.normals(d);
                    nrm = z.norm();
                }
                u.row(i) = (rng.uniform() / nrm) * z.transpose();
            }
            break;
        }
        case ReferenceKind::uniform_interval: {
            for (Eigen::Index i = 0; i < m; ++i) u(i, 0) = rng.uniform(-1.0, 1.0);
            break;
        }
    }
    return u;
}

struct RegressionDataset {
    Mat x;       // n x p covariates
    Mat y;       // n x d responses
    Mat b_star;  // d x p generating coefficients
    Mat sigma;   // p x p true covariate covariance
    NoiseModel noise;
    CovariateModel covariates;
};

inline RegressionDataset make_dataset(Eigen::Index n, const Mat& b_star,
                                      const CovariateModel& cov_model,
                                      const NoiseModel& noise_model,
                                      RngStream& rng) {
    const Eigen::Index d = b_star.rows();
    const Eigen::Index p = b_star.cols();
    require<InvalidConfig>(d >= 1 && p >= 1, "make_dataset: b_star is empty");
    check_finite(b_star, "make_dataset b_star");
    RegressionDataset ds;
    ds.b_star = b_star;
    ds.covariates = cov_model;
    ds.noise = noise_model;
    ds.sigma = toeplitz_sigma(p, cov_model.base);
    ds.x = sample_covariates(n, cov_model, p, rng);
    ds.y = ds.x * b_star.transpose() + sample_noise(n, noise_model, d, rng);
    return ds;
}

} // namespace mcqr
