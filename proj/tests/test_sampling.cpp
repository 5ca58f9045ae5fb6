#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mcqr/sampling.hpp"

using namespace mcqr;

namespace {

double column_median(const Mat& m, Eigen::Index c) {
    std::vector<double> v(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = m(i, c);
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

} // namespace

TEST_CASE("toeplitz covariance") {
    const Mat s = toeplitz_sigma(4, 2.0);
    REQUIRE(s(0, 0) == 1.0);
    REQUIRE(s(0, 1) == 0.5);
    REQUIRE(s(0, 3) == 0.125);
    REQUIRE(s(2, 1) == 0.5);
    REQUIRE((s - s.transpose()).norm() == 0.0);

    // stays positive definite at the largest dimension the harness uses
    REQUIRE_NOTHROW(cholesky(toeplitz_sigma(64, 2.0)));
    REQUIRE_THROWS_AS(toeplitz_sigma(3, 1.0), InvalidConfig);
    REQUIRE_THROWS_AS(toeplitz_sigma(0, 2.0), InvalidConfig);
}

TEST_CASE("covariates match their covariance") {
    RngStream rng(2024, 10);
    const int n = 100000, p = 7;
    const Mat x = sample_covariates(n, CovariateModel{}, p, rng);
    const Mat centered = x.rowwise() - x.colwise().mean();
    const Mat shat = centered.transpose() * centered / static_cast<double>(n);
    const Mat sigma = toeplitz_sigma(p, 2.0);
    REQUIRE((shat - sigma).cwiseAbs().maxCoeff() < 0.05);
    REQUIRE(x.colwise().mean().cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("sampling is deterministic in seed and stream") {
    CovariateModel cov;
    NoiseModel noise;
    noise.kind = NoiseKind::multivariate_t;
    RngStream r1(7, 3), r2(7, 3), r3(8, 3);
    const Mat a = sample_covariates(50, cov, 4, r1);
    const Mat b = sample_covariates(50, cov, 4, r2);
    const Mat c = sample_covariates(50, cov, 4, r3);
    REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a - c).cwiseAbs().maxCoeff() > 0.0);

    RngStream n1(7, 4), n2(7, 4);
    REQUIRE((sample_noise(40, noise, 3, n1) - sample_noise(40, noise, 3, n2))
                .cwiseAbs()
                .maxCoeff() == 0.0);
}

TEST_CASE("pareto marginal quantile and moments") {
    const ParetoMarginal pm{-2.0, 2.0, 1.0};
    REQUIRE(pm.support_min() == -1.0);
    REQUIRE(pm.mean() == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(pm.quantile(0.0) == Catch::Approx(-1.0));
    REQUIRE(pm.quantile(0.5) == Catch::Approx(-2.0 + std::sqrt(2.0)));

    const ParetoMarginal heavy{10.0, 2.0, 10.0};
    REQUIRE(heavy.support_min() == 20.0);
    REQUIRE(heavy.mean() == Catch::Approx(30.0));

    REQUIRE_THROWS_AS((ParetoMarginal{0.0, 0.5, 1.0}.mean()), DomainError);
}

TEST_CASE("pareto copula noise") {
    RngStream rng(2024, 11);
    NoiseModel noise;
    noise.kind = NoiseKind::pareto_copula;
    const int n = 100000, d = 3;
    const Mat e = sample_noise(n, noise, d, rng);

    REQUIRE(e.minCoeff() >= -1.0);
    for (int c = 0; c < d; ++c)
        REQUIRE(column_median(e, c) ==
                Catch::Approx(-2.0 + std::sqrt(2.0)).margin(0.02));

    // adjacent coordinates keep the copula dependence; compare against the
    // Spearman value (6/pi) asin(rho/2) for rho = 0.9
    Vec u1(n), u2(n);
    for (int i = 0; i < n; ++i) {
        u1[i] = std::pow(e(i, 0) + 2.0, -2.0);  // inverse quantile, monotone
        u2[i] = std::pow(e(i, 1) + 2.0, -2.0);
    }
    const auto corr = [&](const Vec& x, const Vec& y) {
        const double mx = x.mean(), my = y.mean();
        const double sx = std::sqrt((x.array() - mx).square().mean());
        const double sy = std::sqrt((y.array() - my).square().mean());
        return ((x.array() - mx) * (y.array() - my)).mean() / (sx * sy);
    };
    const double expected = 6.0 / M_PI * std::asin(0.45);
    REQUIRE(corr(u1, u2) == Catch::Approx(expected).margin(0.02));
}

TEST_CASE("student t noise medians") {
    RngStream rng(2024, 12);
    NoiseModel noise;
    noise.kind = NoiseKind::multivariate_t;
    noise.nu = 2.0;
    const Mat e = sample_noise(100000, noise, 3, rng);
    for (int c = 0; c < 3; ++c)
        REQUIRE(std::abs(column_median(e, c)) < 0.05);
    // heavier than gaussian: some draws far outside +-6
    REQUIRE(e.cwiseAbs().maxCoeff() > 6.0);
    noise.nu = -1.0;
    REQUIRE_THROWS_AS(sample_noise(10, noise, 3, rng), InvalidConfig);
}

TEST_CASE("banana noise is centered and bounded") {
    RngStream rng(2024, 13);
    NoiseModel noise;
    noise.kind = NoiseKind::banana;

    const int n = 100000;
    const Mat e2 = sample_noise(n, noise, 2, rng);
    REQUIRE(std::abs(e2.col(1).mean()) < 0.02);
    REQUIRE(std::abs(e2.col(0).mean()) < 0.02);
    REQUIRE(e2.col(0).cwiseAbs().maxCoeff() <= 1.3 + 1e-12);
    REQUIRE(e2.col(1).maxCoeff() <= 1.0 - 1.0 / 3.0 + 0.3 + 1e-12);
    REQUIRE(e2.col(1).minCoeff() >= -1.0 / 3.0 - 0.3 - 1e-12);

    const Mat e4 = sample_noise(n, noise, 4, rng);
    for (int c = 0; c < 4; ++c) REQUIRE(std::abs(e4.col(c).mean()) < 0.02);

    REQUIRE_THROWS_AS(sample_noise(10, noise, 1, rng), InvalidConfig);
}

TEST_CASE("contaminated gaussian mixture fraction") {
    RngStream rng(2024, 14);
    NoiseModel noise;
    noise.kind = NoiseKind::contaminated_gaussian;
    noise.epsilon = 0.3;
    const int n = 50000, d = 2;
    const Mat e = sample_noise(n, noise, d, rng);
    int bad = 0;
    for (int i = 0; i < n; ++i) bad += e(i, 0) > 50.0;
    const double frac = bad / static_cast<double>(n);
    const double band = 3.0 * std::sqrt(0.3 * 0.7 / n);
    REQUIRE(std::abs(frac - 0.3) <= band);

    noise.epsilon = 0.0;
    REQUIRE(sample_noise(2000, noise, d, rng).cwiseAbs().maxCoeff() < 50.0);
    noise.epsilon = 1.0;
    REQUIRE(sample_noise(2000, noise, d, rng).minCoeff() > 50.0);
    noise.epsilon = 1.5;
    REQUIRE_THROWS_AS(sample_noise(10, noise, d, rng), InvalidConfig);
}

TEST_CASE("contaminated pareto mixture") {
    RngStream rng(2024, 15);
    NoiseModel noise;
    noise.kind = NoiseKind::contaminated_pareto;
    noise.epsilon = 0.2;
    const int n = 50000, d = 2;
    const Mat e = sample_noise(n, noise, d, rng);
    REQUIRE(e.minCoeff() >= -1.0 / 9.0 - 1e-12);
    int bad = 0;
    for (int i = 0; i < n; ++i) bad += e(i, 0) >= 19.9;
    const double frac = bad / static_cast<double>(n);
    REQUIRE(std::abs(frac - 0.2) <= 3.0 * std::sqrt(0.2 * 0.8 / n));
    // contaminated rows sit on the outlier support in every coordinate
    for (int i = 0; i < n; ++i)
        if (e(i, 0) >= 19.9) REQUIRE(e.row(i).minCoeff() >= 20.0 - 1e-9);
}

TEST_CASE("reference distributions") {
    RngStream rng(2024, 16);
    const int m = 100000;

    SECTION("standard gaussian") {
        const Mat u = sample_reference(m, ReferenceModel{}, 3, rng);
        REQUIRE(u.colwise().mean().cwiseAbs().maxCoeff() < 0.02);
        REQUIRE(std::abs(u.array().square().mean() - 1.0) < 0.02);
    }
    SECTION("uniform cube lives on [0,1]^d") {
        const Mat u = sample_reference(
            m, ReferenceModel{ReferenceKind::uniform_cube}, 2, rng);
        REQUIRE(u.minCoeff() >= 0.0);
        REQUIRE(u.maxCoeff() < 1.0);
        REQUIRE(std::abs(u.col(0).mean() - 0.5) < 0.01);
        // one dimensional cube is plain U[0,1]
        const Mat u1 = sample_reference(
            m, ReferenceModel{ReferenceKind::uniform_cube}, 1, rng);
        REQUIRE(std::abs(u1.mean() - 0.5) < 0.01);
    }
    SECTION("spherical uniform has uniform radius") {
        const Mat u = sample_reference(
            m, ReferenceModel{ReferenceKind::spherical_uniform}, 3, rng);
        const Vec norms = u.rowwise().norm();
        REQUIRE(norms.maxCoeff() <= 1.0);
        REQUIRE(std::abs(norms.mean() - 0.5) < 0.01);
        REQUIRE(std::abs(norms.array().square().mean() - 1.0 / 3.0) < 0.01);
        REQUIRE(u.colwise().mean().cwiseAbs().maxCoeff() < 0.01);
    }
    SECTION("uniform interval is U[-1,1] and one dimensional only") {
        const Mat u = sample_reference(
            m, ReferenceModel{ReferenceKind::uniform_interval}, 1, rng);
        REQUIRE(u.minCoeff() >= -1.0);
        REQUIRE(u.maxCoeff() <= 1.0);
        REQUIRE(std::abs(u.mean()) < 0.01);
        REQUIRE_THROWS_AS(
            sample_reference(10, ReferenceModel{ReferenceKind::uniform_interval},
                             2, rng),
            InvalidConfig);
    }
}

TEST_CASE("make_dataset wiring") {
    RngStream rng(2024, 17);
    Mat b_star(2, 3);
    b_star << 1.0, -2.0, 0.5, 0.0, 3.0, 1.0;
    const auto ds = make_dataset(500, b_star, CovariateModel{}, NoiseModel{}, rng);
    REQUIRE(ds.x.rows() == 500);
    REQUIRE(ds.x.cols() == 3);
    REQUIRE(ds.y.rows() == 500);
    REQUIRE(ds.y.cols() == 2);
    REQUIRE((ds.sigma - toeplitz_sigma(3, 2.0)).norm() == 0.0);

    // residuals against the true coefficients recover the noise scale
    const Mat resid = ds.y - ds.x * b_star.transpose();
    REQUIRE(std::abs(resid.array().square().mean() - 1.0) < 0.1);

    RngStream rng2(2024, 17);
    const auto ds2 = make_dataset(500, b_star, CovariateModel{}, NoiseModel{}, rng2);
    REQUIRE((ds.x - ds2.x).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((ds.y - ds2.y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampler input validation") {
    RngStream rng(1, 1);
    REQUIRE_THROWS_AS(sample_covariates(0, CovariateModel{}, 3, rng), EmptyInput);
    REQUIRE_THROWS_AS(sample_noise(0, NoiseModel{}, 3, rng), EmptyInput);
    REQUIRE_THROWS_AS(sample_reference(0, ReferenceModel{}, 3, rng), EmptyInput);
    REQUIRE_THROWS_AS(sample_covariates(10, CovariateModel{}, 0, rng),
                      InvalidConfig);
}
