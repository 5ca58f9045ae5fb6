#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "mcqr/common.hpp"

namespace mcqr {

/// Symmetric positive semidefinite matrix. Construction checks symmetry to
/// 1e-12 relative to the largest entry and then works with the symmetrized
/// average, so downstream eigendecompositions see an exactly symmetric input.
class SpdMatrix {
  public:
    explicit SpdMatrix(const Mat& m) {
        require<InvalidMatrix>(m.rows() == m.cols(), "SpdMatrix: not square");
        require<InvalidMatrix>(m.size() > 0, "SpdMatrix: empty");
        check_finite(m, "SpdMatrix");
        const double scale = m.cwiseAbs().maxCoeff();
        const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
        require<InvalidMatrix>(asym <= 1e-12 * std::max(scale, 1.0),
                               "SpdMatrix: not symmetric");
        mat_ = 0.5 * (m + m.transpose());
    }

    const Mat& mat() const { return mat_; }
    Eigen::Index dim() const { return mat_.rows(); }

  private:
    Mat mat_;
};

/// Symmetric square root via eigendecomposition. Eigenvalues down to
/// -1e-10 * lambda_max are treated as roundoff and clamped to zero; anything
/// more negative is a genuine indefiniteness and is rejected.
inline Mat psd_sqrt(const SpdMatrix& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m.mat());
    require<NotPositiveDefinite>(es.info() == Eigen::Success,
                                 "psd_sqrt: eigendecomposition failed");
    Vec lam = es.eigenvalues();
    const double lmax = std::max(lam.maxCoeff(), 0.0);
    require<NotPositiveDefinite>(lam.minCoeff() >= -1e-10 * std::max(lmax, 1e-300),
                                 "psd_sqrt: matrix is not positive semidefinite");
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        lam[i] = std::sqrt(std::max(lam[i], 0.0));
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

inline Mat psd_sqrt(const Mat& m) { return psd_sqrt(SpdMatrix(m)); }

/// Lower Cholesky factor L with L L^T = m. Requires strict positive
/// definiteness: lambda_min > 1e-12 * lambda_max.
inline Mat cholesky(const SpdMatrix& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m.mat());
    require<NotPositiveDefinite>(es.info() == Eigen::Success,
                                 "cholesky: eigendecomposition failed");
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    require<NotPositiveDefinite>(lmax > 0.0 && lmin > 1e-12 * lmax,
                                 "cholesky: matrix is numerically singular");
    Eigen::LLT<Mat> llt(m.mat());
    require<NotPositiveDefinite>(llt.info() == Eigen::Success,
                                 "cholesky: factorization failed");
    return llt.matrixL();
}

inline Mat cholesky(const Mat& m) { return cholesky(SpdMatrix(m)); }

/// tr^{1/2}(A Sigma A^T), i.e. the Frobenius norm of A Sigma^{1/2}. Computed
/// with the Cholesky factor, which gives the same value as the symmetric root.
inline double mahalanobis_matrix_norm(const Mat& a, const SpdMatrix& sigma) {
    require<DimensionError>(a.cols() == sigma.dim(),
                            "mahalanobis_matrix_norm: dimension mismatch");
    check_finite(a, "mahalanobis_matrix_norm");
    return (a * cholesky(sigma)).norm();
}

inline double mahalanobis_matrix_norm(const Mat& a, const Mat& sigma) {
    return mahalanobis_matrix_norm(a, SpdMatrix(sigma));
}

} // namespace mcqr
