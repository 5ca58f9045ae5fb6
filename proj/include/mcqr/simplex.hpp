#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "mcqr/common.hpp"

namespace mcqr {

/// min c'x  subject to  a x = rhs,  lo <= x <= up  (+-inf bounds allowed).
struct LpProblem {
    Mat a;    // r x n
    Vec rhs;  // r
    Vec c;    // n
    Vec lo;   // n
    Vec up;   // n

    void validate() const {
        const auto r = a.rows(), n = a.cols();
        require<EmptyInput>(n > 0, "lp: no variables");
        require<DimensionError>(rhs.size() == r, "lp: rhs size mismatch");
        require<DimensionError>(
            c.size() == n && lo.size() == n && up.size() == n,
            "lp: cost or bound size mismatch");
        check_finite(a, "lp constraint matrix");
        check_finite(rhs, "lp rhs");
        check_finite(c, "lp cost");
        for (Eigen::Index j = 0; j < n; ++j) {
            require<InvalidConfig>(!(lo[j] != lo[j]) && !(up[j] != up[j]),
                                   "lp: NaN bound");
            require<InvalidConfig>(lo[j] <= up[j], "lp: empty bound interval");
            require<InvalidConfig>(
                lo[j] < std::numeric_limits<double>::infinity() &&
                    up[j] > -std::numeric_limits<double>::infinity(),
                "lp: bound fixes variable at infinity");
        }
    }
};

enum class LpStatus { optimal, infeasible, unbounded };

/// For optimal problems y holds the equality multipliers: reduced costs
/// c - a'y are >= 0 at lower bounds and <= 0 at upper bounds. When the
/// problem is infeasible y holds the phase-one multipliers instead (a
/// certificate pricing vector) and objective is the residual infeasibility.
struct LpSolution {
    LpStatus status = LpStatus::optimal;
    Vec x;
    Vec y;
    double objective = 0.0;
    long iterations = 0;
};

namespace lp_detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Bounded-variable revised simplex with a dense explicit basis inverse.
/// Artificial columns give the phase-one start; redundant rows simply keep
/// their artificial basic at zero through phase two.
class SimplexSolver {
  public:
    explicit SimplexSolver(const LpProblem& p)
        : a_(p.a),
          r_(static_cast<int>(p.a.rows())),
          n_(static_cast<int>(p.a.cols())),
          total_(n_ + r_) {
        p.validate();
        rhs_ = p.rhs;
        real_cost_ = p.c;
        lo_ = Vec(total_);
        up_ = Vec(total_);
        lo_.head(n_) = p.lo;
        up_.head(n_) = p.up;
        lo_.tail(r_).setZero();
        up_.tail(r_).setConstant(kInf);
    }

    LpSolution run() {
        setup_phase1();
        LpSolution sol;
        sol.iterations = iterate(true);

        const double infeas = phase1_objective();
        const double rscale = r_ > 0 ? rhs_.cwiseAbs().maxCoeff() : 0.0;
        if (infeas > kFeasTol * (1.0 + rscale)) {
            sol.status = LpStatus::infeasible;
            sol.objective = infeas;
            sol.x = xval_.head(n_);
            sol.y = duals();
            return sol;
        }

        purge_artificials();
        cost_.setZero();
        cost_.head(n_) = real_cost_;
        up_.tail(r_).setZero();  // artificials are pinned at zero from here on
        for (int j = n_; j < total_; ++j)
            if (state_[j] != St::basic) {
                state_[j] = St::at_lo;
                xval_[j] = 0.0;
            }

        const bool bounded = iterate(false) >= 0;
        sol.iterations += std::abs(last_iters_);
        if (!bounded) {
            sol.status = LpStatus::unbounded;
            sol.x = xval_.head(n_);
            sol.y = duals();
            return sol;
        }
        sol.status = LpStatus::optimal;
        sol.x = xval_.head(n_);
        sol.y = duals();
        sol.objective = real_cost_.dot(sol.x);
        return sol;
    }

  private:
    enum class St : unsigned char { basic, at_lo, at_up, free_zero };

    static constexpr double kRcTol = 1e-9;
    static constexpr double kPivTol = 1e-10;
    static constexpr double kFeasTol = 1e-9;
    static constexpr int kRefactorEvery = 100;

    bool is_artificial(int j) const { return j >= n_; }

    // column j of the working matrix (structural or signed artificial)
    Vec column(int j) const {
        if (!is_artificial(j)) return a_.col(j);
        Vec e = Vec::Zero(r_);
        e[j - n_] = art_sign_[j - n_];
        return e;
    }

    Vec ftran(int j) const {
        if (!is_artificial(j))
            return binv_ * a_.col(j);
        return art_sign_[j - n_] * binv_.col(j - n_);
    }

    void setup_phase1() {
        state_.assign(total_, St::at_lo);
        xval_ = Vec::Zero(total_);
        for (int j = 0; j < n_; ++j) {
            if (lo_[j] > -kInf) {
                state_[j] = St::at_lo;
                xval_[j] = lo_[j];
            } else if (up_[j] < kInf) {
                state_[j] = St::at_up;
                xval_[j] = up_[j];
            } else {
                state_[j] = St::free_zero;
                xval_[j] = 0.0;
            }
        }

        Vec resid = rhs_;
        for (int j = 0; j < n_; ++j)
            if (xval_[j] != 0.0) resid -= a_.col(j) * xval_[j];

        art_sign_.assign(r_, 1.0);
        basis_.resize(r_);
        binv_ = Mat::Identity(r_, r_);
        for (int i = 0; i < r_; ++i) {
            art_sign_[i] = resid[i] >= 0.0 ? 1.0 : -1.0;
            binv_(i, i) = art_sign_[i];  // B = diag(sign), so B^-1 likewise
            basis_[i] = n_ + i;
            state_[n_ + i] = St::basic;
            xval_[n_ + i] = std::abs(resid[i]);
        }

        cost_ = Vec::Zero(total_);
        cost_.tail(r_).setOnes();
    }

    double phase1_objective() const {
        double s = 0.0;
        for (int j = n_; j < total_; ++j) s += xval_[j];
        return s;
    }

    Vec duals() const {
        Vec cb(r_);
        for (int i = 0; i < r_; ++i) cb[i] = cost_[basis_[i]];
        return binv_.transpose() * cb;
    }

    /// Swaps zero-valued artificials out of the basis where a structural
    /// column can replace them; rows with no candidate are redundant and keep
    /// the artificial pinned in the basis.
    void purge_artificials() {
        for (int p = 0; p < r_; ++p) {
            if (!is_artificial(basis_[p])) continue;
            const Vec alpha = (binv_.row(p) * a_).transpose();
            int enter = -1;
            double best = 1e-7;
            for (int j = 0; j < n_; ++j)
                if (state_[j] != St::basic && std::abs(alpha[j]) > best) {
                    best = std::abs(alpha[j]);
                    enter = j;
                }
            if (enter < 0) continue;
            const Vec w = ftran(enter);
            const int leave = basis_[p];
            apply_pivot(enter, p, w);
            state_[leave] = St::at_lo;
            xval_[leave] = 0.0;
            state_[enter] = St::basic;
            // the swap is degenerate: entering keeps its current value
        }
    }

    void refactor() {
        Mat b(r_, r_);
        for (int i = 0; i < r_; ++i) b.col(i) = column(basis_[i]);
        Eigen::PartialPivLU<Mat> lu(b);
        binv_ = lu.inverse();
        recompute_basic_values();
        since_refactor_ = 0;
    }

    void recompute_basic_values() {
        Vec resid = rhs_;
        for (int j = 0; j < total_; ++j)
            if (state_[j] != St::basic && xval_[j] != 0.0)
                resid -= column(j) * xval_[j];
        const Vec xb = binv_ * resid;
        for (int i = 0; i < r_; ++i) xval_[basis_[i]] = xb[i];
    }

    void apply_pivot(int enter, int p, const Vec& w) {
        binv_.row(p) /= w[p];
        for (int i = 0; i < r_; ++i)
            if (i != p && w[i] != 0.0) binv_.row(i) -= w[i] * binv_.row(p);
        basis_[p] = enter;
        ++since_refactor_;
    }

    struct Entering {
        int j = -1;
        double d = 0.0;
        int dir = 0;
    };

    bool pick_entering(bool bland, Entering& out) const {
        Vec cb(r_);
        for (int i = 0; i < r_; ++i) cb[i] = cost_[basis_[i]];
        const Vec y = binv_.transpose() * cb;
        Vec d = cost_.head(n_) - (y.transpose() * a_).transpose();

        out = {};
        double best = kRcTol;
        for (int j = 0; j < total_; ++j) {
            if (state_[j] == St::basic) continue;
            if (is_artificial(j)) continue;  // once out, artificials stay out
            if (up_[j] - lo_[j] <= 0.0) continue;  // fixed, cannot move
            const double dj =
                j < n_ ? d[j] : cost_[j] - art_sign_[j - n_] * y[j - n_];
            double score = 0.0;
            int dir = 0;
            if (state_[j] == St::at_lo && dj < -kRcTol) {
                score = -dj;
                dir = 1;
            } else if (state_[j] == St::at_up && dj > kRcTol) {
                score = dj;
                dir = -1;
            } else if (state_[j] == St::free_zero && std::abs(dj) > kRcTol) {
                score = std::abs(dj);
                dir = dj < 0.0 ? 1 : -1;
            } else {
                continue;
            }
            if (bland) {
                out = {j, dj, dir};
                return true;
            }
            if (score > best) {
                best = score;
                out = {j, dj, dir};
            }
        }
        return out.j >= 0;
    }

    /// Returns iterations on success (>= 0); -1 flags unbounded in phase two.
    /// The count is also stored in last_iters_ (negative when unbounded).
    long iterate(bool phase1) {
        long iters = 0;
        long degen_run = 0;
        bool bland = false;
        const long cap = 50'000 + 200L * (r_ + n_);

        for (;;) {
            Entering e;
            if (!pick_entering(bland, e)) {
                if (since_refactor_ > 0) {
                    refactor();  // confirm optimality with a clean inverse
                    if (pick_entering(bland, e)) goto have_entering;
                }
                last_iters_ = iters;
                return iters;
            }
        have_entering:
            const Vec w = ftran(e.j);

            // ratio test: entering moves by t*dir, basics move by -t*dir*w
            double t = up_[e.j] - lo_[e.j];  // bound flip span (may be inf)
            int leave_pos = -1;
            bool leave_at_up = false;
            for (int i = 0; i < r_; ++i) {
                const double wi = e.dir * w[i];
                const int bj = basis_[i];
                double limit = kInf;
                bool hits_up = false;
                if (wi > kPivTol && lo_[bj] > -kInf)
                    limit = (xval_[bj] - lo_[bj]) / wi;
                else if (wi < -kPivTol && up_[bj] < kInf) {
                    limit = (up_[bj] - xval_[bj]) / -wi;
                    hits_up = true;
                } else {
                    continue;
                }
                const bool better =
                    limit < t - 1e-12 ||
                    (limit < t + 1e-12 && leave_pos >= 0 &&
                     (bland ? basis_[i] < basis_[leave_pos]
                            : std::abs(w[i]) > std::abs(w[leave_pos])));
                if (better) {
                    t = std::max(limit, 0.0);
                    leave_pos = i;
                    leave_at_up = hits_up;
                }
            }

            if (t >= kInf) {
                if (phase1)
                    throw SolverStalled("lp: phase one ray");  // cannot happen
                last_iters_ = -(iters + 1);
                return -1;
            }

            // move the entering variable and update basic values
            const double step = e.dir * t;
            xval_[e.j] += step;
            if (t > 0.0)
                for (int i = 0; i < r_; ++i) xval_[basis_[i]] -= step * w[i];

            if (leave_pos < 0) {
                // bound flip, basis unchanged
                state_[e.j] = state_[e.j] == St::at_lo ? St::at_up : St::at_lo;
            } else {
                const int leave = basis_[leave_pos];
                state_[leave] = leave_at_up ? St::at_up : St::at_lo;
                xval_[leave] = leave_at_up ? up_[leave] : lo_[leave];
                apply_pivot(e.j, leave_pos, w);
                state_[e.j] = St::basic;
            }

            ++iters;
            if (since_refactor_ >= kRefactorEvery) refactor();
            if (t <= 1e-12) {
                if (++degen_run > 50 + r_ + n_) bland = true;
            } else {
                degen_run = 0;
                bland = false;
            }
            if (iters > cap) throw SolverStalled("lp: iteration limit");
        }
    }

    const Mat& a_;
    int r_, n_, total_;
    Vec rhs_, real_cost_;
    Vec lo_, up_;
    Vec cost_;
    std::vector<double> art_sign_;
    std::vector<St> state_;
    std::vector<int> basis_;
    Vec xval_;
    Mat binv_;
    int since_refactor_ = 0;
    long last_iters_ = 0;
};

}  // namespace lp_detail

inline LpSolution solve_lp(const LpProblem& p) {
    lp_detail::SimplexSolver solver(p);
    return solver.run();
}

} // namespace mcqr
