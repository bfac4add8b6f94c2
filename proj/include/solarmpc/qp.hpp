#pragma once

// Dense convex QP
//
//   minimize    1/2 x'Qx + c'x
//   subject to  A_ineq x <= b_ineq,   A_eq x = b_eq
//
// solved with a primal active-set method. A feasible starting point comes from
// a phase-1 problem (minimize the largest violation t, posed as a regularized
// QP and refined by proximal rounds); its optimum doubles as the infeasibility
// certificate when t stays positive.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "solarmpc/errors.hpp"

namespace solarmpc {

template <typename Scalar = double>
struct QpProblem {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Matrix Q;
    Vector c;
    Matrix A_ineq;
    Vector b_ineq;
    Matrix A_eq;
    Vector b_eq;

    QpProblem() = default;

    /// Validates shapes and symmetrizes Q. Empty constraint blocks may be passed as 0-row matrices.
    QpProblem(Matrix Q_, Vector c_, Matrix A_ineq_, Vector b_ineq_, Matrix A_eq_, Vector b_eq_)
        : Q(std::move(Q_)), c(std::move(c_)), A_ineq(std::move(A_ineq_)), b_ineq(std::move(b_ineq_)),
          A_eq(std::move(A_eq_)), b_eq(std::move(b_eq_))
    {
        const Eigen::Index n = c.size();
        if (A_ineq.size() == 0)
            A_ineq.resize(b_ineq.size(), n);
        if (A_eq.size() == 0)
            A_eq.resize(b_eq.size(), n);
        if (Q.rows() != n || Q.cols() != n)
            throw ShapeError("QpProblem: Q must be n x n with n = size(c)");
        if (A_ineq.cols() != n || A_ineq.rows() != b_ineq.size())
            throw ShapeError("QpProblem: A_ineq must be m_i x n with m_i = size(b_ineq)");
        if (A_eq.cols() != n || A_eq.rows() != b_eq.size())
            throw ShapeError("QpProblem: A_eq must be m_e x n with m_e = size(b_eq)");
        Q = ((Q + Q.transpose()) / Scalar(2)).eval();
    }

    Eigen::Index num_vars() const { return c.size(); }
    Eigen::Index num_ineq() const { return b_ineq.size(); }
    Eigen::Index num_eq() const { return b_eq.size(); }

    Scalar objective(const Vector& x) const { return Scalar(0.5) * x.dot(Q * x) + c.dot(x); }

    Scalar min_eigenvalue() const
    {
        if (num_vars() == 0)
            return Scalar(0);
        Eigen::SelfAdjointEigenSolver<Matrix> es(Q, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

    /// Throws ProblemDefinitionError when Q has an eigenvalue below -tol * max(1, ||Q||).
    void check_psd(Scalar tol = Scalar(1e-9)) const
    {
        const Scalar scale = std::max(Scalar(1), Q.cwiseAbs().maxCoeff());
        if (num_vars() > 0 && min_eigenvalue() < -tol * scale)
            throw ProblemDefinitionError("QpProblem: Q is not positive semidefinite");
    }
};

enum class QpStatus { optimal, infeasible, max_iter };

inline const char* to_string(QpStatus s)
{
    switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
    }
    return "unknown";
}

template <typename Scalar = double>
struct QpSolution {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Vector x;
    Vector lambda_ineq;
    Vector nu_eq;
    QpStatus status = QpStatus::max_iter;
    Scalar kkt_residual = std::numeric_limits<Scalar>::infinity();
    int iterations = 0;
    /// Smallest achievable max-violation found by phase 1 (> 0 certifies infeasibility).
    Scalar phase1_violation = 0;
    bool jitter_applied = false;
    std::vector<Eigen::Index> active_set;   // inequality indices in the final working set
    std::vector<Scalar> objective_trace;    // phase-2 objective after every iteration

    bool optimal() const { return status == QpStatus::optimal; }
};

/// Rescales Q and c by 1/max(1, max|Q|, max|c|) so the absolute KKT tolerance acts relative
/// to the problem's own magnitude. Returns the factor applied; the minimizer is unchanged.
template <typename Scalar>
Scalar normalize_cost(QpProblem<Scalar>& p)
{
    Scalar m = Scalar(1);
    if (p.Q.size())
        m = std::max(m, p.Q.cwiseAbs().maxCoeff());
    if (p.c.size())
        m = std::max(m, p.c.cwiseAbs().maxCoeff());
    p.Q /= m;
    p.c /= m;
    return Scalar(1) / m;
}

template <typename Scalar = double>
struct KktReport {
    Scalar stationarity = 0;
    Scalar primal_ineq = 0;
    Scalar primal_eq = 0;
    Scalar complementarity = 0;
    Scalar dual = 0;
    bool stationarity_ok = false;
    bool primal_ok = false;
    bool complementarity_ok = false;
    bool dual_ok = false;

    bool all() const { return stationarity_ok && primal_ok && complementarity_ok && dual_ok; }
    Scalar max_residual() const
    {
        return std::max({stationarity, primal_ineq, primal_eq, complementarity, dual});
    }
};

/// Recomputes the four KKT residual groups from scratch.
template <typename Scalar>
KktReport<Scalar> verify_kkt(const QpProblem<Scalar>& p, const QpSolution<Scalar>& s, Scalar tol)
{
    using Vector = typename QpProblem<Scalar>::Vector;
    KktReport<Scalar> r;
    const Vector lam = s.lambda_ineq.size() == p.num_ineq() ? s.lambda_ineq : Vector::Zero(p.num_ineq());
    const Vector nu = s.nu_eq.size() == p.num_eq() ? s.nu_eq : Vector::Zero(p.num_eq());
    const Vector grad = p.Q * s.x + p.c + p.A_ineq.transpose() * lam + p.A_eq.transpose() * nu;
    r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : Scalar(0);
    if (p.num_ineq() > 0) {
        const Vector slack = p.A_ineq * s.x - p.b_ineq;
        r.primal_ineq = std::max(Scalar(0), slack.maxCoeff());
        r.complementarity = lam.cwiseProduct(slack).cwiseAbs().maxCoeff();
        r.dual = std::max(Scalar(0), -lam.minCoeff());
    }
    if (p.num_eq() > 0)
        r.primal_eq = (p.A_eq * s.x - p.b_eq).cwiseAbs().maxCoeff();
    r.stationarity_ok = r.stationarity <= tol;
    r.primal_ok = r.primal_ineq <= tol && r.primal_eq <= tol;
    r.complementarity_ok = r.complementarity <= tol;
    r.dual_ok = r.dual <= tol;
    return r;
}

template <typename Scalar = double>
struct QpSettings {
    Scalar tol = Scalar(1e-8);
    int max_iter = 200;
    bool check_psd = true;
    Scalar jitter = Scalar(1e-10);
};

/// Primal active-set solver. Owns workspace; one instance per thread.
template <typename Scalar = double>
class ActiveSetSolver {
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Index = Eigen::Index;

    ActiveSetSolver() = default;
    explicit ActiveSetSolver(QpSettings<Scalar> settings) : settings_(settings) {}

    const QpSettings<Scalar>& settings() const { return settings_; }
    QpSettings<Scalar>& settings() { return settings_; }

    /// `warm_active` is a guess of the optimal active inequality set; it only affects the starting point.
    QpSolution<Scalar> solve(const QpProblem<Scalar>& p, std::span<const Index> warm_active = {})
    {
        return solve_impl(p, warm_active, nullptr);
    }

    /// As above, with a primal guess tried (after projection onto the equalities) when the
    /// active-set guess does not give a feasible start.
    QpSolution<Scalar> solve(const QpProblem<Scalar>& p, std::span<const Index> warm_active, const Vector& warm_x)
    {
        if (warm_x.size() != p.num_vars())
            throw ShapeError("ActiveSetSolver::solve: primal guess has the wrong size");
        return solve_impl(p, warm_active, &warm_x);
    }

private:
    QpSolution<Scalar> solve_impl(const QpProblem<Scalar>& p, std::span<const Index> warm_active,
                                  const Vector* warm_x)
    {
        if (settings_.check_psd)
            p.check_psd();
        QpSolution<Scalar> sol;
        const Index n = p.num_vars();
        sol.lambda_ineq = Vector::Zero(p.num_ineq());
        sol.nu_eq = Vector::Zero(p.num_eq());

        // Independent equality rows; dependent-but-consistent rows are skipped.
        std::vector<Index> eq_rows;
        Vector x0;
        if (!equality_start(p, eq_rows, x0, sol))
            return sol;

        std::vector<Index> working;
        Vector x;
        bool started = false;
        if (!warm_active.empty())
            started = try_warm_start(p, eq_rows, warm_active, x, working, sol);
        if (!started && warm_x) {
            x0 = project_onto_equalities(p, eq_rows, *warm_x);
            if (p.num_ineq() == 0 || (p.A_ineq * x0 - p.b_ineq).maxCoeff() <= feas_tol(p)) {
                x = x0;
                working = initial_working_set(p, eq_rows, x);
                started = true;
            }
        }
        if (!started) {
            if (!phase1(p, eq_rows, x0, x, sol))
                return sol;
            working = initial_working_set(p, eq_rows, x);
        }
        (void)n;
        phase2(p, p.Q, p.c, eq_rows, x, working, sol);
        return sol;
    }

    static Scalar inf_norm(const Vector& v) { return v.size() ? v.cwiseAbs().maxCoeff() : Scalar(0); }

    Scalar feas_tol(const QpProblem<Scalar>& p) const
    {
        (void)p;
        return settings_.tol;
    }

    /// Minimum-norm solution of the equality block; detects inconsistency.
    bool equality_start(const QpProblem<Scalar>& p, std::vector<Index>& eq_rows, Vector& x0, QpSolution<Scalar>& sol)
    {
        const Index n = p.num_vars();
        eq_rows.clear();
        x0 = Vector::Zero(n);
        if (p.num_eq() == 0)
            return true;
        // Greedy independent subset (deterministic order).
        Matrix basis(0, n);
        for (Index i = 0; i < p.num_eq(); ++i) {
            Matrix trial(basis.rows() + 1, n);
            trial << basis, p.A_eq.row(i);
            Eigen::FullPivLU<Matrix> lu(trial);
            lu.setThreshold(Scalar(1e-12));
            if (lu.rank() == trial.rows()) {
                basis = trial;
                eq_rows.push_back(i);
            }
        }
        if (basis.rows() > 0) {
            Matrix Ae(eq_rows.size(), n);
            Vector be(eq_rows.size());
            for (std::size_t k = 0; k < eq_rows.size(); ++k) {
                Ae.row(k) = p.A_eq.row(eq_rows[k]);
                be(k) = p.b_eq(eq_rows[k]);
            }
            x0 = Ae.completeOrthogonalDecomposition().solve(be);
        }
        const Scalar eq_res = inf_norm(p.A_eq * x0 - p.b_eq);
        if (eq_res > feas_tol(p) * std::max(Scalar(1), inf_norm(p.b_eq))) {
            sol.status = QpStatus::infeasible;
            sol.phase1_violation = eq_res;
            sol.x = x0;
            return false;
        }
        return true;
    }

    Vector project_onto_equalities(const QpProblem<Scalar>& p, const std::vector<Index>& eq_rows, const Vector& x)
    {
        if (eq_rows.empty())
            return x;
        Matrix Ae(eq_rows.size(), p.num_vars());
        Vector r(eq_rows.size());
        for (std::size_t k = 0; k < eq_rows.size(); ++k) {
            Ae.row(k) = p.A_eq.row(eq_rows[k]);
            r(k) = p.b_eq(eq_rows[k]) - p.A_eq.row(eq_rows[k]).dot(x);
        }
        return x + Ae.completeOrthogonalDecomposition().solve(r);
    }

    std::vector<Index> initial_working_set(const QpProblem<Scalar>& p, const std::vector<Index>& eq_rows,
                                           const Vector& x)
    {
        std::vector<Index> w;
        const Vector slack = p.b_ineq - p.A_ineq * x;
        Matrix rows = stacked(p, eq_rows, w);
        for (Index i = 0; i < p.num_ineq(); ++i) {
            if (slack(i) > feas_tol(p) * Scalar(1e-3))
                continue;
            Matrix trial(rows.rows() + 1, p.num_vars());
            trial << rows, p.A_ineq.row(i);
            Eigen::FullPivLU<Matrix> lu(trial);
            lu.setThreshold(Scalar(1e-10));
            if (lu.rank() == trial.rows()) {
                rows = trial;
                w.push_back(i);
            }
        }
        return w;
    }

    static Matrix stacked(const QpProblem<Scalar>& p, const std::vector<Index>& eq_rows, const std::vector<Index>& w)
    {
        Matrix M(eq_rows.size() + w.size(), p.num_vars());
        Index r = 0;
        for (Index i : eq_rows)
            M.row(r++) = p.A_eq.row(i);
        for (Index i : w)
            M.row(r++) = p.A_ineq.row(i);
        return M;
    }

    /// Solves [H A'; A 0][step; mult] = [-g; rhs]. Applies jitter to H if the KKT matrix is singular.
    bool solve_eqp(const Matrix& H, const Vector& g, const Matrix& Aw, const Vector& rhs, Vector& step, Vector& mult,
                   QpSolution<Scalar>& sol)
    {
        const Index n = H.rows();
        const Index m = Aw.rows();
        Matrix K = Matrix::Zero(n + m, n + m);
        K.topLeftCorner(n, n) = H;
        K.topRightCorner(n, m) = Aw.transpose();
        K.bottomLeftCorner(m, n) = Aw;
        Vector r(n + m);
        r << -g, rhs;
        for (int attempt = 0; attempt < 2; ++attempt) {
            Eigen::FullPivLU<Matrix> lu(K);
            if (lu.isInvertible()) {
                Vector z = lu.solve(r);
                // One step of iterative refinement.
                z += lu.solve(r - K * z);
                step = z.head(n);
                mult = z.tail(m);
                return true;
            }
            K.topLeftCorner(n, n) += settings_.jitter * Matrix::Identity(n, n);
            sol.jitter_applied = true;
        }
        return false;
    }

    bool try_warm_start(const QpProblem<Scalar>& p, const std::vector<Index>& eq_rows,
                        std::span<const Index> warm, Vector& x, std::vector<Index>& working, QpSolution<Scalar>& sol)
    {
        std::vector<Index> w;
        Matrix rows = stacked(p, eq_rows, w);
        for (Index i : warm) {
            if (i < 0 || i >= p.num_ineq())
                continue;
            Matrix trial(rows.rows() + 1, p.num_vars());
            trial << rows, p.A_ineq.row(i);
            Eigen::FullPivLU<Matrix> lu(trial);
            lu.setThreshold(Scalar(1e-10));
            if (lu.rank() == trial.rows()) {
                rows = trial;
                w.push_back(i);
            }
        }
        Vector rhs(rows.rows());
        Index r = 0;
        for (Index i : eq_rows)
            rhs(r++) = p.b_eq(i);
        for (Index i : w)
            rhs(r++) = p.b_ineq(i);
        Vector step, mult;
        const Vector zero = Vector::Zero(p.num_vars());
        if (!solve_eqp(p.Q, p.c, rows, rhs, step, mult, sol))
            return false;
        if (!step.allFinite())
            return false;
        if (p.num_ineq() > 0 && (p.A_ineq * step - p.b_ineq).maxCoeff() > feas_tol(p))
            return false;
        x = step;
        working = std::move(w);
        return true;
    }

    /// Phase 1: minimize t s.t. A_ineq x - t <= b_ineq, t >= 0, A_eq x = b_eq.
    bool phase1(const QpProblem<Scalar>& p, const std::vector<Index>& eq_rows, const Vector& x0, Vector& x,
                QpSolution<Scalar>& sol)
    {
        const Index n = p.num_vars();
        const Index mi = p.num_ineq();
        x = x0;
        if (mi == 0)
            return true;
        Scalar viol = (p.A_ineq * x - p.b_ineq).maxCoeff();
        if (viol <= Scalar(0))
            return true;

        // Augmented problem in (x, t).
        QpProblem<Scalar> aug;
        aug.A_ineq = Matrix::Zero(mi + 1, n + 1);
        aug.A_ineq.topLeftCorner(mi, n) = p.A_ineq;
        aug.A_ineq.topRightCorner(mi, 1).setConstant(Scalar(-1));
        aug.A_ineq(mi, n) = Scalar(-1);
        aug.b_ineq = Vector::Zero(mi + 1);
        aug.b_ineq.head(mi) = p.b_ineq;
        aug.A_eq = Matrix::Zero(eq_rows.size(), n + 1);
        aug.b_eq = Vector::Zero(eq_rows.size());
        for (std::size_t k = 0; k < eq_rows.size(); ++k) {
            aug.A_eq.row(k).head(n) = p.A_eq.row(eq_rows[k]);
            aug.b_eq(k) = p.b_eq(eq_rows[k]);
        }
        std::vector<Index> aug_eq(eq_rows.size());
        for (std::size_t k = 0; k < eq_rows.size(); ++k)
            aug_eq[k] = static_cast<Index>(k);

        const Scalar scale = std::max({Scalar(1), inf_norm(x0), inf_norm(p.b_ineq)});
        const Scalar eps = Scalar(1e-9) / scale;
        Vector y(n + 1);
        y << x, viol + Scalar(1);
        Scalar best = viol;
        for (int round = 0; round < 30; ++round) {
            // Proximal term eps/2 ||y - y_c||^2 around the current iterate.
            aug.Q = eps * Matrix::Identity(n + 1, n + 1);
            aug.c = -eps * y;
            aug.c(n) += Scalar(1);
            std::vector<Index> w = initial_working_set(aug, aug_eq, y);
            QpSolution<Scalar> inner;
            inner.lambda_ineq = Vector::Zero(mi + 1);
            inner.nu_eq = Vector::Zero(aug.num_eq());
            Vector yy = y;
            phase2(aug, aug.Q, aug.c, aug_eq, yy, w, inner);
            sol.iterations += inner.iterations;
            sol.jitter_applied = sol.jitter_applied || inner.jitter_applied;
            y = yy;
            const Scalar t = std::max(Scalar(0), (p.A_ineq * y.head(n) - p.b_ineq).maxCoeff());
            const bool stalled = best - t <= Scalar(1e-12) * scale;
            best = std::min(best, t);
            if (t <= Scalar(0) || (t <= feas_tol(p) * Scalar(1e-2)))
                break;
            if (stalled && round > 0)
                break;
            if (sol.iterations > settings_.max_iter)
                break;
        }
        x = y.head(n);
        sol.phase1_violation = best;
        if (best > feas_tol(p)) {
            sol.status = sol.iterations > settings_.max_iter ? QpStatus::max_iter : QpStatus::infeasible;
            sol.x = x;
            return false;
        }
        return true;
    }

    /// Primal active-set iterations from a (numerically) feasible x and independent working set.
    void phase2(const QpProblem<Scalar>& p, const Matrix& H, const Vector& c, const std::vector<Index>& eq_rows,
                Vector& x, std::vector<Index>& working, QpSolution<Scalar>& sol)
    {
        const Index n = p.num_vars();
        const Index mi = p.num_ineq();
        const Scalar tol = settings_.tol;
        int degenerate_steps = 0;
        bool done = false;
        // After an unblocked full step x minimizes over the working set; any further
        // step is rounding noise from an ill-conditioned KKT system.
        bool at_ws_minimizer = false;

        for (; sol.iterations < settings_.max_iter; ++sol.iterations) {
            const Matrix Aw = stacked(p, eq_rows, working);
            const Vector g = H * x + c;
            Vector step, mult;
            if (!solve_eqp(H, g, Aw, Vector::Zero(Aw.rows()), step, mult, sol))
                break;

            const Scalar step_norm = inf_norm(step);
            // With a tiny Hessian (LPs posed as QPs) rounding in the projected gradient is
            // amplified into a visible step, so a vanishing reduced gradient also counts.
            const Scalar reduced = inf_norm(Vector(g + Aw.transpose() * mult));
            const Scalar g_scale = std::max(inf_norm(g), inf_norm(Vector(Aw.transpose() * mult)));
            if (at_ws_minimizer || step_norm <= Scalar(1e-13) * std::max(Scalar(1), inf_norm(x))
                || reduced <= Scalar(64) * std::numeric_limits<Scalar>::epsilon() * g_scale) {
                // Stationary on the working set: check inequality multipliers.
                // Most negative multiplier normally; Bland's smallest-index rule after a
                // zero-length step so degenerate vertices cannot cycle.
                const bool bland = degenerate_steps > 0;
                Index drop = -1;
                Scalar most_negative = -tol * Scalar(1e-2);
                for (std::size_t k = 0; k < working.size(); ++k) {
                    const Scalar lam = mult(eq_rows.size() + k);
                    if (!(lam < (bland ? -tol * Scalar(1e-2) : most_negative)))
                        continue;
                    if (bland && drop >= 0 && working[k] > working[drop])
                        continue;
                    most_negative = lam;
                    drop = static_cast<Index>(k);
                }
                if (drop < 0) {
                    done = true;
                    record_multipliers(p, eq_rows, working, mult, sol);
                    sol.objective_trace.push_back(p.objective(x));
                    break;
                }
                working.erase(working.begin() + drop);
                at_ws_minimizer = false;
                sol.objective_trace.push_back(p.objective(x));
                continue;
            }

            // Ratio test over inequalities outside the working set.
            Scalar alpha = Scalar(1);
            Index blocking = -1;
            for (Index i = 0; i < mi; ++i) {
                if (std::find(working.begin(), working.end(), i) != working.end())
                    continue;
                const Scalar ap = p.A_ineq.row(i).dot(step);
                if (ap <= Scalar(1e-14) * std::max(Scalar(1), p.A_ineq.row(i).cwiseAbs().maxCoeff() * step_norm))
                    continue;
                Scalar slack = std::max(Scalar(0), p.b_ineq(i) - p.A_ineq.row(i).dot(x));
                if (slack <= Scalar(1e-14) * std::max(Scalar(1), std::abs(p.b_ineq(i))))
                    slack = Scalar(0);
                const Scalar a = slack / ap;
                if (a < alpha) {
                    alpha = a;
                    blocking = i;
                }
            }
            x += alpha * step;
            at_ws_minimizer = blocking < 0;
            degenerate_steps = alpha <= Scalar(0) ? degenerate_steps + 1 : 0;
            if (blocking >= 0)
                working.push_back(blocking);
            sol.objective_trace.push_back(p.objective(x));
        }

        sol.x = x;
        sol.active_set = working;
        std::sort(sol.active_set.begin(), sol.active_set.end());
        sol.kkt_residual = verify_kkt(p, sol, tol).max_residual();
        if (done && sol.kkt_residual <= tol)
            sol.status = QpStatus::optimal;
        else if (done)
            sol.status = polish(p, eq_rows, working, sol) ? QpStatus::optimal : QpStatus::max_iter;
        else
            sol.status = QpStatus::max_iter;
        (void)n;
    }

    void record_multipliers(const QpProblem<Scalar>& p, const std::vector<Index>& eq_rows,
                            const std::vector<Index>& working, const Vector& mult, QpSolution<Scalar>& sol)
    {
        sol.lambda_ineq = Vector::Zero(p.num_ineq());
        sol.nu_eq = Vector::Zero(p.num_eq());
        for (std::size_t k = 0; k < eq_rows.size(); ++k)
            sol.nu_eq(eq_rows[k]) = mult(k);
        for (std::size_t k = 0; k < working.size(); ++k)
            sol.lambda_ineq(working[k]) = mult(eq_rows.size() + k);
    }

    /// Re-solves the final working-set system exactly (no jitter) to remove accumulated drift.
    bool polish(const QpProblem<Scalar>& p, const std::vector<Index>& eq_rows, const std::vector<Index>& working,
                QpSolution<Scalar>& sol)
    {
        const Matrix Aw = stacked(p, eq_rows, working);
        Vector rhs(Aw.rows());
        Index r = 0;
        for (Index i : eq_rows)
            rhs(r++) = p.b_eq(i);
        for (Index i : working)
            rhs(r++) = p.b_ineq(i);
        Vector xs, mult;
        QpSolution<Scalar> scratch;
        if (!solve_eqp(p.Q, p.c, Aw, rhs, xs, mult, scratch))
            return false;
        QpSolution<Scalar> cand = sol;
        cand.x = xs;
        record_multipliers(p, eq_rows, working, mult, cand);
        const Scalar res = verify_kkt(p, cand, settings_.tol).max_residual();
        if (res < sol.kkt_residual) {
            sol.x = cand.x;
            sol.lambda_ineq = cand.lambda_ineq;
            sol.nu_eq = cand.nu_eq;
            sol.kkt_residual = res;
        }
        return sol.kkt_residual <= settings_.tol;
    }

    QpSettings<Scalar> settings_;
};

/// Convenience wrapper with explicit tolerance and iteration cap.
template <typename Scalar>
QpSolution<Scalar> solve(const QpProblem<Scalar>& p, Scalar tol = Scalar(1e-8), int max_iter = 200)
{
    QpSettings<Scalar> s;
    s.tol = tol;
    s.max_iter = max_iter;
    ActiveSetSolver<Scalar> solver(s);
    return solver.solve(p);
}

} // namespace solarmpc
