#include "solarmpc/tracking.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "solarmpc/linalg.hpp"

namespace solarmpc {

namespace {

constexpr double kInputScale = 1.0 / 1024;  // power of two: bounds scale exactly
// Accepted Lyapunov residual; an order below what callers certify against.
constexpr double kResidualAccept = 1e-9;

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

double max_eig(const Eigen::Matrix2d& M)
{
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es((M + M.transpose()) / 2, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

Eigen::Matrix2d closed_loop(const VertexModel<double>& v, const Eigen::RowVector2d& k) { return v.A + v.B * k; }

double worst_residual(const PolytopeVertices<double>& verts, const Eigen::Matrix2d& P, const Eigen::RowVector2d& k,
                      const Eigen::Matrix2d& Q, double R)
{
    double w = -std::numeric_limits<double>::infinity();
    for (const auto& v : verts)
        w = std::max(w, lyapunov_residual(v, P, k, Q, R));
    return w;
}

// Symmetric 2x2 <-> 3-vector with sqrt(2) on the off-diagonal so the Euclidean norm is Frobenius.
Eigen::Vector3d svec(const Eigen::Matrix2d& M)
{
    return {M(0, 0), std::sqrt(2.0) * (M(0, 1) + M(1, 0)) / 2, M(1, 1)};
}

Eigen::Matrix2d smat(const Eigen::Vector3d& v)
{
    Eigen::Matrix2d M;
    M << v(0), v(1) / std::sqrt(2.0), v(1) / std::sqrt(2.0), v(2);
    return M;
}

Eigen::Matrix2d psd_floor(const Eigen::Matrix2d& M, double floor)
{
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es((M + M.transpose()) / 2);
    const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(floor);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Alternating projections between {P - A_j'PA_j - W = S_j} and {P >= eps I, S_j >= delta I}.
std::optional<Eigen::Matrix2d> alternating_projections(const std::vector<Eigen::Matrix2d>& Acl,
                                                       const Eigen::Matrix2d& W, const Eigen::Matrix2d& P0,
                                                       const Eigen::Matrix2d& Q, double R,
                                                       const PolytopeVertices<double>& verts,
                                                       const Eigen::RowVector2d& k)
{
    const int m = static_cast<int>(Acl.size());
    const int ny = 3 * (m + 1);
    Mat C = Mat::Zero(3 * m, ny);
    Vec d(3 * m);
    for (int j = 0; j < m; ++j) {
        for (int b = 0; b < 3; ++b) {
            Eigen::Vector3d e = Eigen::Vector3d::Zero();
            e(b) = 1;
            const Eigen::Matrix2d E = smat(e);
            C.block(3 * j, b, 3, 1) = svec(E - Acl[j].transpose() * E * Acl[j]);
        }
        C.block(3 * j, 3 * (j + 1), 3, 3) = -Eigen::Matrix3d::Identity();
        d.segment(3 * j, 3) = svec(W);
    }
    const Eigen::CompleteOrthogonalDecomposition<Mat> cod(C);
    const double scale = std::max(1.0, W.norm());
    const double eps = 1e-9 * scale, delta = 1e-6 * scale;

    Vec y(ny);
    y.head(3) = svec(P0);
    for (int j = 0; j < m; ++j)
        y.segment(3 * (j + 1), 3) = svec(P0 - Acl[j].transpose() * P0 * Acl[j] - W);

    for (int it = 0; it < 20000; ++it) {
        y -= cod.solve(Vec(C * y - d));
        y.head(3) = svec(psd_floor(smat(y.head(3)), eps));
        for (int j = 0; j < m; ++j)
            y.segment(3 * (j + 1), 3) = svec(psd_floor(smat(y.segment(3 * (j + 1), 3)), delta));
        if (it % 25 == 0) {
            const Eigen::Matrix2d P = smat(y.head(3));
            if (worst_residual(verts, P, k, Q, R) <= kResidualAccept)
                return P;
        }
    }
    return std::nullopt;
}

} // namespace

void TrackingConfig::validate() const
{
    if (N < 1)
        throw PreconditionError("TrackingConfig: N must be >= 1");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Q, Eigen::EigenvaluesOnly);
    if (!Q.isApprox(Q.transpose()) || es.eigenvalues().minCoeff() <= 0)
        throw PreconditionError("TrackingConfig: Q must be symmetric positive definite");
    if (!(R > 0))
        throw PreconditionError("TrackingConfig: R must be positive");
    if (!(u_min < u_max) || (x_min.array() >= x_max.array()).any())
        throw PreconditionError("TrackingConfig: empty constraint box");
}

double lyapunov_residual(const VertexModel<double>& v, const Eigen::Matrix2d& P, const Eigen::RowVector2d& kappa,
                         const Eigen::Matrix2d& Q, double R)
{
    const Eigen::Matrix2d Acl = closed_loop(v, kappa);
    return max_eig(Acl.transpose() * P * Acl - P + Q + R * kappa.transpose() * kappa);
}

TerminalIngredients synthesize_terminal(const PolytopeVertices<double>& verts, const Eigen::Matrix2d& Q, double R)
{
    Eigen::Matrix2d Abar = Eigen::Matrix2d::Zero();
    Eigen::Vector2d Bbar = Eigen::Vector2d::Zero();
    for (const auto& v : verts) {
        Abar += v.A / 4;
        Bbar += v.B / 4;
    }
    const auto lqr = dlqr<double>(Abar, Bbar, Q, Mat::Constant(1, 1, R));
    TerminalIngredients out;
    out.vertices = verts;
    out.kappa = lqr.K.row(0);

    std::vector<Eigen::Matrix2d> Acl;
    int worst = 0;
    double worst_rho = 0;
    for (int j = 0; j < 4; ++j) {
        Acl.push_back(closed_loop(verts[j], out.kappa));
        const double r = spectral_radius(Acl.back());
        if (!(r < 1))
            throw SynthesisError("synthesize_terminal: the averaged LQR gain leaves vertex " + std::to_string(j + 1)
                                 + " with spectral radius " + std::to_string(r) + "; retune Q/R or the vertex set");
        if (r > worst_rho) {
            worst_rho = r;
            worst = j;
        }
    }
    const Eigen::Matrix2d W = Q + R * out.kappa.transpose() * out.kappa;

    // (a) a single-vertex Lyapunov solution that already certifies every vertex
    std::vector<Eigen::Matrix2d> candidates;
    for (int j = 0; j < 4; ++j)
        candidates.push_back(dlyap<double>(Acl[j], W));
    candidates.push_back(dlyap<double>(Abar + Bbar * out.kappa, W));
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (worst_residual(verts, candidates[c], out.kappa, Q, R) <= kResidualAccept) {
            out.P = candidates[c];
            out.P_method = c < 4 ? "lyapunov-vertex-" + std::to_string(c + 1) : "lyapunov-average";
            return out;
        }
    }

    // (b) alternating projections on the four inequalities
    if (auto P = alternating_projections(Acl, W, candidates.back(), Q, R, verts, out.kappa)) {
        out.P = *P;
        out.P_method = "alternating-projections";
        return out;
    }

    // (c) scale the worst vertex's Lyapunov solution
    const Eigen::Matrix2d P0 = candidates[worst];
    for (double s = 1.0; s <= 1e6; s *= 1.05) {
        if (worst_residual(verts, s * P0, out.kappa, Q, R) <= kResidualAccept) {
            out.P = s * P0;
            out.P_method = "scaled-lyapunov";
            return out;
        }
    }
    throw SynthesisError("synthesize_terminal: no common P found (projection and scaling up to 1e6 failed)");
}

void attach_terminal_set(TerminalIngredients& term, const HPolytope<double>& X, const Eigen::Vector2d& x_s,
                         int iter_cap)
{
    std::vector<Mat> Acl;
    for (const auto& v : term.vertices)
        Acl.emplace_back(closed_loop(v, term.kappa));
    const auto res = max_invariant_set<double>(Acl, X.translate(-Vec(x_s)), iter_cap);
    term.X_f = res.set;
    term.X_f_converged = res.converged;
}

TargetPair steady_pair_for(double x2_ref, const Eigen::Vector2d& w_s, const LpvModel<double>& model)
{
    const auto& p = model.params();
    if (!std::isfinite(x2_ref) || x2_ref < 0 || x2_ref > p.Tf_max || !w_s.allFinite())
        throw InfeasibleTargetError("steady_pair_for: reference outside the state constraints");
    const double pi = EIGEN_PI;
    const double I = w_s(0), Te = w_s(1);
    const double dep = p.d_e * pi;
    const double rho1_scale = p.d_i * pi * p.hbar_i / -std::expm1(-1.0);

    // Plate balance in x1 alone: g(x1) = d_e pi nu I - d_e pi h0 (x1 - Te) - rho1(x1)(x1 - x2) = 0.
    auto g = [&](double x1) {
        return dep * p.nu * I - dep * p.h0 * (x1 - Te) - p.d_i * pi * fluid_heat_transfer(x1, p) * (x1 - x2_ref);
    };
    auto dg = [&](double x1) {
        const double rho1 = p.d_i * pi * fluid_heat_transfer(x1, p);
        const double drho1 = rho1_scale * std::exp(-x1 / p.Tp_max) / p.Tp_max;
        return -dep * p.h0 - rho1 - drho1 * (x1 - x2_ref);
    };
    double x1 = std::max(x2_ref, Te);
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        const double r = g(x1);
        if (std::abs(r) <= 1e-12 * std::max(1.0, dep * p.nu * std::abs(I))) {
            converged = true;
            break;
        }
        const double step = -r / dg(x1);
        double t = 1;
        // Backtrack until |g| decreases.
        while (t > 1e-8 && std::abs(g(x1 + t * step)) >= std::abs(r))
            t /= 2;
        x1 += t * step;
    }
    if (!converged || !std::isfinite(x1))
        throw InfeasibleTargetError("steady_pair_for: Newton iteration did not converge in 100 iterations");

    TargetPair out;
    out.x_s = Eigen::Vector2d(x1, x2_ref);
    out.w_s = w_s;
    const SchedulingPoint<double> rho = model.scheduling_map(out.x_s);
    const double exchange = rho.rho1 * (x1 - x2_ref) / p.fluid_capacitance();
    if (rho.rho2 > 0)
        out.u_s = exchange / rho.rho2;
    else if (std::abs(exchange) <= 1e-12)
        out.u_s = 0;
    else
        throw InfeasibleTargetError("steady_pair_for: zero fluid temperature cannot balance a nonzero exchange");

    const auto m = model.eval_matrices(rho);
    const Eigen::Vector2d res = m.step(out.x_s, out.u_s, w_s) - out.x_s;
    if (res.cwiseAbs().maxCoeff() > 1e-9)
        throw InfeasibleTargetError("steady_pair_for: residual above 1e-9 after convergence");
    return out;
}

std::vector<Eigen::Vector2d> TrackingQp::predicted_states(const Eigen::VectorXd& z) const
{
    std::vector<Eigen::Vector2d> xs;
    for (std::size_t k = 0; k < S.size(); ++k)
        xs.push_back(S[k] * z + s[k]);
    return xs;
}

TrackingQp build_tracking_qp(const Eigen::Vector2d& x0, const LpvMatrices<double>& model, const TargetPair& target,
                             std::span<const Eigen::Vector2d> w_preview, const TrackingConfig& cfg,
                             const TerminalIngredients& term, bool use_terminal_set)
{
    cfg.validate();
    const int N = cfg.N;
    if (static_cast<int>(w_preview.size()) != N)
        throw PreconditionError("build_tracking_qp: preview length must equal N");
    if (!x0.allFinite())
        throw DomainError("build_tracking_qp: non-finite initial state");

    TrackingQp out;
    out.N = N;
    const Eigen::Index nz = N + 3;
    const Eigen::Index ixa = N, iua = N + 2;

    out.S.assign(N + 1, Mat::Zero(2, nz));
    out.s.assign(N + 1, Eigen::Vector2d::Zero());
    out.s[0] = x0;
    for (int k = 0; k < N; ++k) {
        out.S[k + 1] = model.A * out.S[k];
        out.S[k + 1].col(k) += model.B;
        out.s[k + 1] = model.A * out.s[k] + model.B_w * w_preview[k];
    }

    Mat E_xa = Mat::Zero(2, nz);
    E_xa(0, ixa) = 1;
    E_xa(1, ixa + 1) = 1;
    Mat H = Mat::Zero(nz, nz);
    Vec c = Vec::Zero(nz);
    double k0 = 0;
    // ||G z + g||^2_W contributes z'G'WGz + 2 g'WG z + g'Wg; the QP carries 1/2 z'Hz.
    auto add = [&](const Mat& G, const Eigen::Vector2d& g, const Eigen::Matrix2d& W) {
        const Mat WG = W * G;
        H.noalias() += 2 * G.transpose() * WG;
        c.noalias() += 2 * WG.transpose() * g;
        k0 += g.dot(W * g);
    };
    for (int k = 1; k < N; ++k)
        add(out.S[k] - E_xa, out.s[k], cfg.Q);
    add(out.S[N] - E_xa, out.s[N], term.P);
    const double R2 = 2 * cfg.R;
    for (int k = 0; k < N; ++k) {
        H(k, k) += R2;
        if (cfg.literal_input_penalty) {
            c(k) -= R2 * target.u_s;
            k0 += cfg.R * target.u_s * target.u_s;
        } else {
            H(iua, iua) += R2;
            H(k, iua) -= R2;
            H(iua, k) -= R2;
        }
    }
    // Offset block: T_x = P on the state, R on the artificial input.
    H.block<2, 2>(ixa, ixa) += 2 * term.P;
    c.segment<2>(ixa) -= 2 * term.P * target.x_s;
    k0 += target.x_s.dot(term.P * target.x_s);
    H(iua, iua) += R2;
    c(iua) -= R2 * target.u_s;
    k0 += cfg.R * target.u_s * target.u_s;

    // (A - I) x_a + B u_a = -B_w w_s
    Mat A_eq = (model.A - Eigen::Matrix2d::Identity()) * E_xa;
    A_eq.col(iua) += model.B;
    const Vec b_eq = -model.B_w * target.w_s;

    const bool terminal = use_terminal_set && term.X_f.rows() > 0;
    const Eigen::Index n_state_rows = 4 * N;
    const Eigen::Index n_box_rows = 2 * N + 2 + 4;
    const Eigen::Index n_term = terminal ? term.X_f.rows() : 0;
    Mat A_in = Mat::Zero(n_state_rows + n_box_rows + n_term, nz);
    Vec b_in = Vec::Zero(A_in.rows());
    Eigen::Index r = 0;
    for (int k = 1; k <= N; ++k) {
        A_in.middleRows(r, 2) = out.S[k];
        b_in.segment(r, 2) = cfg.x_max - out.s[k];
        r += 2;
        A_in.middleRows(r, 2) = -out.S[k];
        b_in.segment(r, 2) = out.s[k] - cfg.x_min;
        r += 2;
    }
    auto bound = [&](Eigen::Index col, double lo, double hi) {
        A_in(r, col) = 1;
        b_in(r++) = hi;
        A_in(r, col) = -1;
        b_in(r++) = -lo;
    };
    for (int k = 0; k < N; ++k)
        bound(k, cfg.u_min, cfg.u_max);
    bound(iua, cfg.u_min, cfg.u_max);
    bound(ixa, cfg.x_min(0), cfg.x_max(0));
    bound(ixa + 1, cfg.x_min(1), cfg.x_max(1));
    if (terminal) {
        out.terminal_row_begin = r;
        A_in.middleRows(r, n_term) = term.X_f.H * (out.S[N] - E_xa);
        b_in.segment(r, n_term) = term.X_f.h - term.X_f.H * out.s[N];
        r += n_term;
    }

    // Inputs are O(1e-4) m^3/s against temperatures O(100) C; rescale so the
    // absolute solver tolerances mean the same thing for every variable.
    out.var_scale = Vec::Ones(nz);
    for (int k = 0; k < N; ++k)
        out.var_scale(k) = kInputScale;
    out.var_scale(iua) = kInputScale;
    const auto D = out.var_scale.asDiagonal();
    out.qp = QpProblem<double>(D * H * D, D * c, A_in * D, b_in, A_eq * D, b_eq);
    out.cost_scale = normalize_cost(out.qp);
    out.constant = k0;
    return out;
}

TrackingController::TrackingController(const LpvModel<double>& model, TrackingConfig cfg, MheConfig mhe,
                                       TerminalIngredients term, TrackingOptions opts)
    : model_(&model), cfg_(std::move(cfg)), term_(std::move(term)), opts_(std::move(opts)),
      mhe_(std::move(mhe), model.vertices(), model.B_w())
{
    cfg_.validate();
    if (cfg_.mode == TrackingMode::LTIMPC) {
        opts_.pinned_mu = MembershipWeights<double>::uniform();
        opts_.use_terminal_set = false;
    }
}

TrackingController TrackingController::lti(const LpvModel<double>& model, TrackingConfig cfg, TerminalIngredients term)
{
    cfg.mode = TrackingMode::LTIMPC;
    return TrackingController(model, std::move(cfg), MheConfig{}, std::move(term));
}

std::string TrackingController::name() const { return cfg_.mode == TrackingMode::LTIMPC ? "LTIMPC" : "AMPC"; }

void TrackingController::reset(const Eigen::Vector2d& x0, double u_prev)
{
    mhe_.reset(x0, mhe_.config().measured_prior ? model_->membership_from_rho(model_->scheduling_map(x0))
                                                 : MembershipWeights<double>::uniform());
    warm_.clear();
    z_.resize(0);
    zq_prev_.resize(0);
    u_prev_ = u_prev;
    have_prev_ = false;
}

ControlDiagnostics TrackingController::step(const Eigen::Vector2d& x, std::span<const Eigen::Vector2d> preview,
                                            double x2_ref)
{
    using Clock = std::chrono::steady_clock;
    if (static_cast<int>(preview.size()) != cfg_.N)
        throw PreconditionError("TrackingController::step: preview length must equal N");
    ControlDiagnostics d;
    const auto t0 = Clock::now();

    MembershipWeights<double> mu;
    if (opts_.pinned_mu) {
        mu = *opts_.pinned_mu;
    } else {
        if (have_prev_)
            mhe_.add_transition(u_prev_, w_prev_, x);
        const MheEstimate est = mhe_.estimate();
        mu = est.mu;
        d.qp_iterations += est.qp_iterations;
    }
    d.mu = mu.mu;
    const LpvMatrices<double> m = blend_vertices(mu, model_->vertices(), model_->B_w());

    try {
        target_ = steady_pair_for(x2_ref, preview.back(), *model_);
    } catch (const InfeasibleTargetError&) {
        // Keep the last admissible target; the artificial pair absorbs the mismatch.
    }

    const TrackingQp tq = build_tracking_qp(x, m, target_, preview, cfg_, term_, opts_.use_terminal_set);
    QpSolution<double> sol;
    if (zq_prev_.size() == tq.qp.num_vars()) {
        // Shifted previous plan as a primal guess.
        Eigen::VectorXd guess = zq_prev_;
        for (int k = 0; k + 1 < cfg_.N; ++k)
            guess(k) = zq_prev_(k + 1);
        sol = solver_.solve(tq.qp, warm_, guess);
    } else {
        sol = solver_.solve(tq.qp, warm_);
    }
    d.qp_iterations += sol.iterations;
    d.solve_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

    if (sol.optimal()) {
        warm_ = sol.active_set;
        zq_prev_ = sol.x;
        z_ = tq.physical(sol.x);
        d.u = z_(tq.idx_u(0));
        d.cost = tq.cost(sol.x);
        // Rows 4N and 4N+1 bound u(0); an active bound is applied exactly.
        const Eigen::Index upper = 4 * cfg_.N;
        if (std::binary_search(sol.active_set.begin(), sol.active_set.end(), upper))
            d.u = cfg_.u_max;
        else if (std::binary_search(sol.active_set.begin(), sol.active_set.end(), upper + 1))
            d.u = cfg_.u_min;
        d.u = std::clamp(d.u, cfg_.u_min, cfg_.u_max);
    } else {
        d.feasible = false;
        d.u = u_prev_;
        warm_.clear();
        zq_prev_.resize(0);
    }
    u_prev_ = d.u;
    w_prev_ = preview.front();
    have_prev_ = true;
    return d;
}

} // namespace solarmpc
