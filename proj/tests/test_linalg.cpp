#include <catch2/catch_amalgamated.hpp>

#include "mcqr/linalg.hpp"
#include "mcqr/rng.hpp"
#include "oracles.hpp"

using namespace mcqr;

TEST_CASE("spd wrapper validates input") {
    Mat ok(2, 2);
    ok << 2.0, 1.0, 1.0, 2.0;
    REQUIRE_NOTHROW(SpdMatrix(ok));

    Mat rect(2, 3);
    rect.setZero();
    REQUIRE_THROWS_AS(SpdMatrix(rect), InvalidMatrix);

    Mat asym(2, 2);
    asym << 1.0, 0.5, 0.2, 1.0;
    REQUIRE_THROWS_AS(SpdMatrix(asym), InvalidMatrix);

    Mat nonfinite(2, 2);
    nonfinite << 1.0, 0.0, 0.0, std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(SpdMatrix(nonfinite), InvalidMatrix);
}

TEST_CASE("psd_sqrt on identity and diagonal") {
    const Mat id = Mat::Identity(3, 3);
    REQUIRE((psd_sqrt(id) - id).cwiseAbs().maxCoeff() < 1e-12);

    Mat d = Mat::Zero(3, 3);
    d.diagonal() << 4.0, 9.0, 0.25;
    Mat expected = Mat::Zero(3, 3);
    expected.diagonal() << 2.0, 3.0, 0.5;
    REQUIRE((psd_sqrt(d) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("psd_sqrt closed form 2x2") {
    Mat m(2, 2);
    m << 2.0, 1.0, 1.0, 2.0;
    // eigenvalues 1 and 3; sqrt has entries (sqrt(3)+-1)/2
    const double hi = (std::sqrt(3.0) + 1.0) / 2.0;
    const double lo = (std::sqrt(3.0) - 1.0) / 2.0;
    Mat expected(2, 2);
    expected << hi, lo, lo, hi;
    REQUIRE((psd_sqrt(m) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("psd_sqrt squares back on random spd") {
    RngStream rng(991, 1);
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + static_cast<int>(rng.next_u64() % 6);
        const Mat m = oracle::random_spd(d, rng, 1e-3, 10.0);
        const Mat s = psd_sqrt(m);
        REQUIRE((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        REQUIRE((s * s - m).norm() <= 1e-8 * std::max(1.0, m.norm()));
    }
}

TEST_CASE("psd_sqrt handles rank deficiency and rejects indefinite input") {
    Vec v(3);
    v << 1.0, 2.0, -1.0;
    const Mat rank1 = v * v.transpose();
    const Mat s = psd_sqrt(rank1);
    REQUIRE((s * s - rank1).norm() < 1e-10);

    Mat indef = Mat::Identity(2, 2);
    indef(1, 1) = -0.5;
    REQUIRE_THROWS_AS(psd_sqrt(indef), NotPositiveDefinite);
}

TEST_CASE("cholesky reconstructs and rejects singular") {
    RngStream rng(991, 2);
    for (int trial = 0; trial < 25; ++trial) {
        const int d = 1 + static_cast<int>(rng.next_u64() % 5);
        const Mat m = oracle::random_spd(d, rng, 0.05, 4.0);
        const Mat l = cholesky(m);
        REQUIRE((l * l.transpose() - m).norm() <= 1e-10 * std::max(1.0, m.norm()));
        // lower triangular with positive diagonal
        for (int i = 0; i < d; ++i) {
            REQUIRE(l(i, i) > 0.0);
            for (int j = i + 1; j < d; ++j) REQUIRE(l(i, j) == 0.0);
        }
    }

    Vec v(2);
    v << 1.0, 1.0;
    REQUIRE_THROWS_AS(cholesky(Mat(v * v.transpose())), NotPositiveDefinite);

    Mat nearly = Mat::Identity(2, 2);
    nearly(1, 1) = 1e-13;
    REQUIRE_THROWS_AS(cholesky(nearly), NotPositiveDefinite);
    nearly(1, 1) = 1e-9;
    REQUIRE_NOTHROW(cholesky(nearly));
}

TEST_CASE("mahalanobis matrix norm") {
    SECTION("identity covariance gives frobenius norm") {
        RngStream rng(991, 3);
        const Mat a = oracle::random_cloud(3, 4, rng);
        REQUIRE(mahalanobis_matrix_norm(a, Mat(Mat::Identity(4, 4))) ==
                Catch::Approx(a.norm()).epsilon(1e-12));
    }
    SECTION("diagonal covariance weights columns") {
        Mat a(1, 2);
        a << 1.0, 0.0;
        Mat sigma = Mat::Zero(2, 2);
        sigma.diagonal() << 4.0, 1.0;
        REQUIRE(mahalanobis_matrix_norm(a, sigma) == Catch::Approx(2.0).epsilon(1e-12));
    }
    SECTION("agrees with trace formula on random input") {
        RngStream rng(991, 4);
        for (int t = 0; t < 20; ++t) {
            const Mat a = oracle::random_cloud(3, 3, rng);
            const Mat sigma = oracle::random_spd(3, rng);
            const double direct =
                std::sqrt((a * sigma * a.transpose()).trace());
            REQUIRE(mahalanobis_matrix_norm(a, sigma) ==
                    Catch::Approx(direct).epsilon(1e-10));
        }
    }
    SECTION("dimension mismatch throws") {
        REQUIRE_THROWS_AS(
            mahalanobis_matrix_norm(Mat(Mat::Zero(2, 3)), Mat(Mat::Identity(2, 2))),
            DimensionError);
    }
}
