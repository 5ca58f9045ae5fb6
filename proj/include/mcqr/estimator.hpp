#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "mcqr/common.hpp"
#include "mcqr/ot.hpp"
#include "mcqr/rng.hpp"
#include "mcqr/sampling.hpp"
#include "mcqr/simplex.hpp"

namespace mcqr {

enum class McqrSolver { exact, subgradient };

struct McqrConfig {
    ReferenceModel reference;
    int m = 0;  // reference sample size, 0 means match the data size
    McqrSolver solver = McqrSolver::exact;
    int max_iters = 5000;
    double step_scale = 1.0;
    double tol_grad = 1e-6;   // subgradient stop on the coupling moment
    double tol_gap = 1e-7;    // exact stop on the relative duality gap
    bool center_covariates = true;

    void validate() const {
        require<InvalidConfig>(m >= 0, "mcqr: negative reference size");
        require<InvalidConfig>(max_iters >= 1, "mcqr: max_iters must be >= 1");
        require<InvalidConfig>(step_scale > 0.0, "mcqr: step_scale must be > 0");
        require<InvalidConfig>(tol_grad > 0.0 && tol_gap > 0.0,
                               "mcqr: tolerances must be > 0");
    }
};

struct McqrFit {
    Mat b_hat;                  // d x p, applies to centered covariates
    double objective = 0.0;     // transport loss at b_hat
    double gap = 0.0;           // exact solver: loss minus master bound
    double grad_residual = 0.0; // max abs entry of U' pi X at the solution
    long iterations = 0;
    McqrSolver solver_used = McqrSolver::exact;
    bool converged = false;
};

/// Loss of a coefficient matrix: the Wasserstein inner product between the
/// residual cloud y - x b' and the reference cloud u. Covariates are used
/// exactly as passed; center them beforehand to match what the fitters see.
inline double mcqr_loss(const Mat& x, const Mat& y, const Mat& b, const Mat& u) {
    require<DimensionError>(x.rows() == y.rows(), "mcqr_loss: row mismatch");
    require<DimensionError>(b.rows() == y.cols() && b.cols() == x.cols(),
                            "mcqr_loss: coefficient shape mismatch");
    require<DimensionError>(u.cols() == y.cols(),
                            "mcqr_loss: reference dimension mismatch");
    const Mat resid = y - x * b.transpose();
    return wasserstein_product(PointCloud(u), PointCloud(resid));
}

namespace est_detail {

inline void validate_data(const Mat& x, const Mat& y, const Mat& u) {
    require<EmptyInput>(x.rows() > 0 && u.rows() > 0, "mcqr: empty input");
    require<DimensionError>(x.rows() == y.rows(), "mcqr: row mismatch");
    require<DimensionError>(u.cols() == y.cols(),
                            "mcqr: reference dimension mismatch");
    require<InvalidConfig>(x.cols() >= 1 && y.cols() >= 1,
                           "mcqr: need at least one covariate and one output");
    check_finite(x, "mcqr covariates");
    check_finite(y, "mcqr outputs");
    check_finite(u, "mcqr reference");
}

inline Mat prepare_covariates(const Mat& x, bool center) {
    Mat xc = x;
    if (center) xc.rowwise() -= x.colwise().mean();
    for (Eigen::Index j = 0; j < xc.cols(); ++j)
        require<DegenerateInput>(xc.col(j).cwiseAbs().maxCoeff() > 1e-12,
                                 "mcqr: covariate column has no variation");
    return xc;
}

/// Shared workhorse: one transport solve against the residuals of bt, with
/// the linear statistics a = Tr(U' pi Y) and g = U' pi X accumulated from the
/// sparse optimal coupling. The loss at bt equals a - <bt, g>.
class TransportOracle {
  public:
    TransportOracle(const Mat& xc, const Mat& y, const Mat& u)
        : xc_(xc), y_(y), u_(u) {}

    void eval(const Mat& bt, double& a, Mat& g, long& pivots) {
        eval_cloud(y_ - xc_ * bt.transpose(), a, g, pivots);
    }

    /// Transport against an arbitrary cloud (Farkas pricing direction). The
    /// statistics are always accumulated against the original y and x.
    void eval_cloud(const Mat& w, double& a, Mat& g, long& pivots) {
        const auto res = engine_.solve(u_, w);
        pivots = res.pivots;
        a = 0.0;
        g = Mat::Zero(y_.cols(), xc_.cols());
        engine_.for_each_basic([&](int i, int j, double mass) {
            a += mass * u_.row(i).dot(y_.row(j));
            g.noalias() += mass * u_.row(i).transpose() * xc_.row(j);
        });
    }

  private:
    const Mat &xc_, &y_, &u_;
    ot_detail::TransportEngine engine_;
};

/// Column generation over coupling vertices. The master keeps one variable
/// per generated coupling, constrained to a convex combination whose moment
/// matrix U' pi X vanishes; its equality multipliers are the current
/// coefficient estimate, and the pricing problem is a plain transport solve
/// against that estimate's residuals. The master value lower-bounds the loss
/// of every feasible coupling mixture while the freshly priced loss
/// upper-bounds the optimum, so their gap certifies optimality.
class ColumnGeneration {
  public:
    ColumnGeneration(const Mat& xc, const Mat& y, const Mat& u,
                     const McqrConfig& cfg)
        : xc_(xc), y_(y), u_(u), cfg_(cfg), oracle_(xc, y, u),
          d_(static_cast<int>(y.cols())), p_(static_cast<int>(xc.cols())) {}

    McqrFit run() {
        McqrFit fit;
        fit.solver_used = McqrSolver::exact;

        // seed: the independent coupling (moment ubar xbar', zero for centered
        // covariates) and the transport coupling at b = 0
        {
            const Vec ubar = u_.colwise().mean();
            const Vec ybar = y_.colwise().mean();
            const Vec xbar = xc_.colwise().mean();
            avals_.push_back(ubar.dot(ybar));
            gvals_.push_back(ubar * xbar.transpose());
        }
        double a0;
        Mat g0;
        long pivots = 0;
        oracle_.eval(Mat::Zero(d_, p_), a0, g0, pivots);
        avals_.push_back(a0);
        gvals_.push_back(g0);

        double best_loss = std::numeric_limits<double>::infinity();
        Mat best_b = Mat::Zero(d_, p_);

        for (long it = 1; it <= cfg_.max_iters; ++it) {
            fit.iterations = it;
            const LpSolution master = solve_master();

            if (master.status == LpStatus::infeasible) {
                // Farkas pricing: hunt a coupling whose moment matrix pushes
                // the certificate below zero; none existing means the moment
                // constraint is unattainable for this reference
                const Mat dir = unvec(master.y.head(d_ * p_));
                double a;
                Mat g;
                oracle_.eval_cloud(xc_ * dir.transpose(), a, g, pivots);
                const double score =
                    vdot(dir, g) + master.y[d_ * p_];
                if (score <= 1e-9)
                    throw Infeasible(
                        "mcqr: no coupling satisfies the moment constraint; "
                        "center the covariates or the reference");
                avals_.push_back(a);
                gvals_.push_back(g);
                continue;
            }

            const double z = -master.objective;  // master is solved as a min
            const Mat bt = -unvec(master.y.head(d_ * p_));

            double a;
            Mat g;
            oracle_.eval(bt, a, g, pivots);
            const double loss = a - vdot(bt, g);
            if (loss < best_loss) {
                best_loss = loss;
                best_b = bt;
            }

            const double gap = loss - z;
            if (gap <= cfg_.tol_gap * (1.0 + std::abs(z))) {
                fit.b_hat = bt;
                fit.objective = loss;
                fit.gap = gap;
                fit.grad_residual = mixture_moment(master.x);
                fit.converged = true;
                return fit;
            }
            avals_.push_back(a);
            gvals_.push_back(g);
        }

        fit.b_hat = best_b;
        fit.objective = best_loss;
        fit.gap = std::numeric_limits<double>::quiet_NaN();
        fit.grad_residual = std::numeric_limits<double>::quiet_NaN();
        fit.converged = false;
        return fit;
    }

  private:
    Mat unvec(const Vec& v) const {
        return Eigen::Map<const Mat>(v.data(), d_, p_);
    }

    static double vdot(const Mat& a, const Mat& b) {
        return (a.array() * b.array()).sum();
    }

    LpSolution solve_master() const {
        const int rows = d_ * p_ + 1;
        const int cols = static_cast<int>(avals_.size());
        LpProblem lp;
        lp.a = Mat(rows, cols);
        lp.c = Vec(cols);
        for (int v = 0; v < cols; ++v) {
            lp.a.col(v).head(d_ * p_) =
                Eigen::Map<const Vec>(gvals_[v].data(), d_ * p_);
            lp.a(rows - 1, v) = 1.0;
            lp.c[v] = -avals_[v];
        }
        lp.rhs = Vec::Zero(rows);
        lp.rhs[rows - 1] = 1.0;
        lp.lo = Vec::Zero(cols);
        lp.up = Vec::Constant(cols, std::numeric_limits<double>::infinity());
        return solve_lp(lp);
    }

    double mixture_moment(const Vec& mu) const {
        Mat g = Mat::Zero(d_, p_);
        for (std::size_t v = 0; v < gvals_.size(); ++v)
            if (mu[static_cast<Eigen::Index>(v)] != 0.0)
                g += mu[static_cast<Eigen::Index>(v)] * gvals_[v];
        return g.cwiseAbs().maxCoeff();
    }

    const Mat &xc_, &y_, &u_;
    const McqrConfig& cfg_;
    TransportOracle oracle_;
    int d_, p_;
    std::vector<double> avals_;
    std::vector<Mat> gvals_;
};

}  // namespace est_detail

/// Exact fit by column generation over transport couplings.
inline McqrFit fit_mcqr_lp(const Mat& x, const Mat& y, const Mat& u,
                           const McqrConfig& cfg = {}) {
    cfg.validate();
    est_detail::validate_data(x, y, u);
    const Mat xc = est_detail::prepare_covariates(x, cfg.center_covariates);
    return est_detail::ColumnGeneration(xc, y, u, cfg).run();
}

/// Subgradient descent on the transport loss. Each step solves a transport
/// problem at the current iterate, reads off the coupling moment U' pi X as
/// the negative subgradient, and takes a diminishing step; the best iterate
/// by loss is returned.
inline McqrFit fit_mcqr_subgradient(const Mat& x, const Mat& y, const Mat& u,
                                    const McqrConfig& cfg = {}) {
    cfg.validate();
    est_detail::validate_data(x, y, u);
    const Mat xc = est_detail::prepare_covariates(x, cfg.center_covariates);
    const int d = static_cast<int>(y.cols());
    const int p = static_cast<int>(xc.cols());

    McqrFit fit;
    fit.solver_used = McqrSolver::subgradient;

    Mat bt = Mat::Zero(d, p);
    if (x.rows() > p) {
        // least squares warm start
        bt = xc.colPivHouseholderQr().solve(y).transpose();
    }

    est_detail::TransportOracle oracle(xc, y, u);
    double best_loss = std::numeric_limits<double>::infinity();
    Mat best_b = bt, best_g = Mat::Zero(d, p);
    double step_norm = 0.0;
    long pivots = 0;

    for (long t = 1; t <= cfg.max_iters; ++t) {
        fit.iterations = t;
        double a;
        Mat g;
        oracle.eval(bt, a, g, pivots);
        const double cur = a - (bt.array() * g.array()).sum();
        if (cur < best_loss) {
            best_loss = cur;
            best_b = bt;
            best_g = g;
        }
        const double gmax = g.cwiseAbs().maxCoeff();
        if (gmax <= cfg.tol_grad) {
            best_loss = cur;
            best_b = bt;
            best_g = g;
            fit.converged = true;
            break;
        }
        if (t == 1) {
            step_norm = g.norm();
            if (step_norm < 1e-300) step_norm = 1.0;
        }
        bt += (cfg.step_scale / (std::sqrt(static_cast<double>(t)) * step_norm)) * g;
    }

    fit.b_hat = best_b;
    fit.objective = best_loss;
    fit.grad_residual = best_g.cwiseAbs().maxCoeff();
    fit.gap = std::numeric_limits<double>::quiet_NaN();
    return fit;
}

/// Direct dense formulation over every coupling entry, for cross-checks on
/// small instances: variables pi_ij >= 0 with marginal and moment rows.
inline McqrFit fit_mcqr_dense(const Mat& x, const Mat& y, const Mat& u,
                              const McqrConfig& cfg = {}) {
    cfg.validate();
    est_detail::validate_data(x, y, u);
    const Mat xc = est_detail::prepare_covariates(x, cfg.center_covariates);
    const int n = static_cast<int>(y.rows());
    const int m = static_cast<int>(u.rows());
    const int d = static_cast<int>(y.cols());
    const int p = static_cast<int>(xc.cols());
    require<InvalidConfig>(static_cast<long>(m) * n <= 10000,
                           "mcqr dense: instance too large");

    const int rows = m + n + d * p;
    LpProblem lp;
    lp.a = Mat::Zero(rows, m * n);
    lp.c = Vec(m * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const int v = i * n + j;
            lp.a(i, v) = 1.0;
            lp.a(m + j, v) = 1.0;
            const Mat mom = u.row(i).transpose() * xc.row(j);  // d x p
            lp.a.col(v).segment(m + n, d * p) =
                Eigen::Map<const Vec>(mom.data(), d * p);
            lp.c[v] = -u.row(i).dot(y.row(j));
        }
    lp.rhs = Vec::Zero(rows);
    lp.rhs.head(m).setConstant(1.0 / m);
    lp.rhs.segment(m, n).setConstant(1.0 / n);
    lp.lo = Vec::Zero(m * n);
    lp.up = Vec::Constant(m * n, std::numeric_limits<double>::infinity());

    const auto sol = solve_lp(lp);
    if (sol.status == LpStatus::infeasible)
        throw Infeasible("mcqr dense: no coupling satisfies the constraints");
    require<SolverStalled>(sol.status == LpStatus::optimal,
                           "mcqr dense: unexpected solver status");

    McqrFit fit;
    fit.solver_used = McqrSolver::exact;
    fit.b_hat = -Eigen::Map<const Mat>(sol.y.data() + m + n, d, p);
    fit.objective = -sol.objective;
    fit.iterations = sol.iterations;
    fit.converged = true;
    Mat moment = Mat::Zero(d, p);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            moment += sol.x[i * n + j] * u.row(i).transpose() * xc.row(j);
    fit.grad_residual = moment.cwiseAbs().maxCoeff();
    return fit;
}

/// Fits with an explicit reference sample, dispatching on cfg.solver.
inline McqrFit fit_mcqr(const Mat& x, const Mat& y, const Mat& u,
                        const McqrConfig& cfg = {}) {
    return cfg.solver == McqrSolver::exact ? fit_mcqr_lp(x, y, u, cfg)
                                           : fit_mcqr_subgradient(x, y, u, cfg);
}

/// Fits after drawing the reference sample from cfg.reference.
inline McqrFit fit_mcqr(const Mat& x, const Mat& y, const McqrConfig& cfg,
                        RngStream& rng) {
    const int m = cfg.m > 0 ? cfg.m : static_cast<int>(x.rows());
    const Mat u = sample_reference(m, cfg.reference,
                                   static_cast<int>(y.cols()), rng);
    return fit_mcqr(x, y, u, cfg);
}

} // namespace mcqr
