#include "solarmpc/mhe.hpp"

#include <string>

namespace solarmpc {

namespace {

/// Column j is vertex j's one-step prediction from (x_i, u_i).
Eigen::Matrix<double, 2, 4> prediction_columns(const PolytopeVertices<double>& verts, const Eigen::Vector2d& x, double u)
{
    Eigen::Matrix<double, 2, 4> M;
    for (int j = 0; j < 4; ++j)
        M.col(j) = verts[j].A * x + verts[j].B * u;
    return M;
}

bool positive_definite(const Eigen::MatrixXd& M)
{
    if (!M.isApprox(M.transpose(), 1e-12))
        return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > 0;
}

bool positive_semidefinite(const Eigen::MatrixXd& M)
{
    if (!M.isApprox(M.transpose(), 1e-12))
        return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -1e-12;
}

} // namespace

void BackwardWindow::validate(int N) const
{
    if (static_cast<int>(u_hist.size()) != N || static_cast<int>(w_hist.size()) != N
        || static_cast<int>(x_hist.size()) != N + 1)
        throw PreconditionError("BackwardWindow: expected " + std::to_string(N + 1) + " states and "
                                + std::to_string(N) + " inputs/disturbances, got " + std::to_string(x_hist.size())
                                + "/" + std::to_string(u_hist.size()) + "/" + std::to_string(w_hist.size()));
    for (const auto& x : x_hist)
        if (!x.allFinite())
            throw DomainError("BackwardWindow: non-finite state");
    for (double u : u_hist)
        if (!std::isfinite(u))
            throw DomainError("BackwardWindow: non-finite input");
    for (const auto& w : w_hist)
        if (!w.allFinite())
            throw DomainError("BackwardWindow: non-finite disturbance");
    if (!mu_prev.on_simplex(1e-9))
        throw DomainError("BackwardWindow: previous membership is off the simplex");
}

void MheConfig::validate() const
{
    if (N < 1)
        throw PreconditionError("MheConfig: N must be >= 1");
    // Q_nu = 0 is allowed (pure model matching); Q_e must be definite.
    if (!positive_definite(Q_e))
        throw PreconditionError("MheConfig: Q_e must be symmetric positive definite");
    if (!positive_semidefinite(Q_nu))
        throw PreconditionError("MheConfig: Q_nu must be symmetric positive semidefinite");
}

QpProblem<double> build_mhe_qp(const BackwardWindow& win, const MheConfig& cfg, const PolytopeVertices<double>& verts,
                               const Eigen::Matrix2d& B_w, double* constant)
{
    cfg.validate();
    win.validate(cfg.N);

    Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
    Eigen::Vector4d c = Eigen::Vector4d::Zero();
    double k0 = 0;
    for (int i = 0; i < cfg.N; ++i) {
        const auto M = prediction_columns(verts, win.x_hist[i], win.u_hist[i]);
        const Eigen::Vector2d r = win.x_hist[i + 1] - B_w * win.w_hist[i];
        // ||r - M mu||^2_Qe = mu' M'QeM mu - 2 r'QeM mu + r'Qe r
        Q += 2 * M.transpose() * cfg.Q_e * M;
        c -= 2 * M.transpose() * cfg.Q_e * r;
        k0 += r.dot(cfg.Q_e * r);
    }
    const Eigen::Vector4d& mp = win.mu_prev.mu;
    Q += 2 * cfg.Q_nu;
    c -= 2 * cfg.Q_nu * mp;
    k0 += mp.dot(cfg.Q_nu * mp);
    if (constant)
        *constant = k0;

    Eigen::MatrixXd A_ineq(8, 4);
    A_ineq << Eigen::Matrix4d::Identity(), -Eigen::Matrix4d::Identity();
    Eigen::VectorXd b_ineq(8);
    b_ineq << Eigen::Vector4d::Ones(), Eigen::Vector4d::Zero();
    return QpProblem<double>(Q, c, A_ineq, b_ineq, Eigen::RowVector4d::Ones(), Eigen::VectorXd::Ones(1));
}

double mhe_residual(const BackwardWindow& win, const MheConfig& cfg, const PolytopeVertices<double>& verts,
                    const Eigen::Matrix2d& B_w, const MembershipWeights<double>& mu)
{
    win.validate(cfg.N);
    double sum = 0;
    for (int i = 0; i < cfg.N; ++i) {
        const Eigen::Vector2d e =
            win.x_hist[i + 1] - B_w * win.w_hist[i] - prediction_columns(verts, win.x_hist[i], win.u_hist[i]) * mu.mu;
        sum += e.dot(cfg.Q_e * e);
    }
    return sum;
}

double mhe_cost(const BackwardWindow& win, const MheConfig& cfg, const PolytopeVertices<double>& verts,
                const Eigen::Matrix2d& B_w, const MembershipWeights<double>& mu)
{
    const Eigen::Vector4d d = mu.mu - win.mu_prev.mu;
    return mhe_residual(win, cfg, verts, B_w, mu) + d.dot(cfg.Q_nu * d);
}

MheEstimate estimate_mu(const BackwardWindow& win, const MheConfig& cfg, const PolytopeVertices<double>& verts,
                        const Eigen::Matrix2d& B_w, ActiveSetSolver<double>& solver)
{
    QpProblem<double> qp = build_mhe_qp(win, cfg, verts, B_w);
    normalize_cost(qp);
    const QpSolution<double> sol = solver.solve(qp);
    if (!sol.optimal())
        throw Error(std::string("estimate_mu: backward QP returned ") + to_string(sol.status)
                    + " on a nonempty simplex");
    MheEstimate out;
    // Project away solver dust so downstream simplex checks are exact.
    Eigen::Vector4d mu = sol.x.cwiseMax(0.0).cwiseMin(1.0);
    mu /= mu.sum();
    out.mu.mu = mu;
    out.residual = mhe_residual(win, cfg, verts, B_w, out.mu);
    out.qp_iterations = sol.iterations;
    out.from_qp = true;
    return out;
}

MembershipEstimator::MembershipEstimator(MheConfig cfg, PolytopeVertices<double> verts, Eigen::Matrix2d B_w)
    : cfg_(std::move(cfg)), verts_(verts), B_w_(B_w)
{
    cfg_.validate();
}

void MembershipEstimator::reset(const Eigen::Vector2d& x0, const MembershipWeights<double>& prior)
{
    if (!prior.on_simplex(1e-9))
        throw PreconditionError("MembershipEstimator::reset: prior is off the simplex");
    x_.assign(1, x0);
    u_.clear();
    w_.clear();
    mu_ = prior;
    warm_.clear();
}

void MembershipEstimator::add_transition(double u, const Eigen::Vector2d& w, const Eigen::Vector2d& x)
{
    if (x_.empty())
        throw PreconditionError("MembershipEstimator: reset() must be called before add_transition()");
    x_.push_back(x);
    u_.push_back(u);
    w_.push_back(w);
    while (static_cast<int>(u_.size()) > cfg_.N) {
        x_.pop_front();
        u_.pop_front();
        w_.pop_front();
    }
}

MheEstimate MembershipEstimator::estimate()
{
    if (bootstrapping()) {
        MheEstimate e;
        e.mu = mu_;
        return e;
    }
    BackwardWindow win{{x_.begin(), x_.end()}, {u_.begin(), u_.end()}, {w_.begin(), w_.end()}, mu_};
    QpProblem<double> qp = build_mhe_qp(win, cfg_, verts_, B_w_);
    normalize_cost(qp);
    const QpSolution<double> sol = solver_.solve(qp, warm_, Eigen::VectorXd(mu_.mu));
    if (!sol.optimal())
        throw Error(std::string("MembershipEstimator: backward QP returned ") + to_string(sol.status));
    warm_ = sol.active_set;
    Eigen::Vector4d mu = sol.x.cwiseMax(0.0).cwiseMin(1.0);
    mu /= mu.sum();
    mu_.mu = mu;
    MheEstimate e;
    e.mu = mu_;
    e.residual = mhe_residual(win, cfg_, verts_, B_w_, mu_);
    e.qp_iterations = sol.iterations;
    e.from_qp = true;
    return e;
}

} // namespace solarmpc
