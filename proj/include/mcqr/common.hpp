#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mcqr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct McqrError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidMatrix : McqrError { using McqrError::McqrError; };
struct NotPositiveDefinite : McqrError { using McqrError::McqrError; };
struct DimensionError : McqrError { using McqrError::McqrError; };
struct InvalidConfig : McqrError { using McqrError::McqrError; };
struct DomainError : McqrError { using McqrError::McqrError; };
struct EmptyInput : McqrError { using McqrError::McqrError; };
struct DegenerateInput : McqrError { using McqrError::McqrError; };
struct RankDeficient : McqrError { using McqrError::McqrError; };
struct SolverStalled : McqrError { using McqrError::McqrError; };
struct Infeasible : McqrError { using McqrError::McqrError; };
struct DualRecoveryFailed : McqrError { using McqrError::McqrError; };
struct NonConvergence : McqrError { using McqrError::McqrError; };
struct IoError : McqrError { using McqrError::McqrError; };

template <class Err>
inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Err(msg);
}

inline void check_finite(const Mat& m, const std::string& what) {
    if (!m.allFinite()) throw InvalidMatrix(what + ": non-finite entries");
}

} // namespace mcqr
