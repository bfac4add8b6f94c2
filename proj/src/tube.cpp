#include "solarmpc/tube.hpp"

#include <algorithm>
#include <chrono>

#include "solarmpc/linalg.hpp"

namespace solarmpc {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr double kInputScale = 1.0 / 1024;

double grid_point(double lo, double hi, int i, int n) { return n == 1 ? lo : lo + (hi - lo) * i / (n - 1); }

} // namespace

void TubeConfig::validate() const
{
    if (N < 1)
        throw PreconditionError("TubeConfig: N must be >= 1");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Q, Eigen::EigenvaluesOnly);
    if (!Q.isApprox(Q.transpose()) || es.eigenvalues().minCoeff() <= 0)
        throw PreconditionError("TubeConfig: Q must be symmetric positive definite");
    if (!(R > 0))
        throw PreconditionError("TubeConfig: R must be positive");
    if (!(eps > 0))
        throw PreconditionError("TubeConfig: eps must be positive");
    if (region.grid < 5)
        throw PreconditionError("TubeConfig: uncertainty grid needs at least 5 points per axis");
    if (!(u_min < u_max) || (x_min.array() >= x_max.array()).any())
        throw PreconditionError("TubeConfig: empty constraint box");
}

HPolytope<double> bound_uncertainty(const LpvModel<double>& model, const SchedulingPoint<double>& rho_bar,
                                    const UncertaintyRegion& region, const SchedulingFn& scheduling)
{
    if (region.grid < 5)
        throw PreconditionError("bound_uncertainty: grid needs at least 5 points per axis");
    const LpvMatrices<double> m0 = model.eval_matrices(rho_bar);
    const int n = region.grid;
    // The origin is always included: xi vanishes wherever rho(x) = rho_bar or on x1 = x2 with u = 0.
    Eigen::Vector2d lo = Eigen::Vector2d::Zero(), hi = Eigen::Vector2d::Zero();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const Eigen::Vector2d x(grid_point(region.x_lo(0), region.x_hi(0), i, n),
                                    grid_point(region.x_lo(1), region.x_hi(1), j, n));
            const SchedulingPoint<double> rho = scheduling ? scheduling(x) : model.scheduling_map(x);
            const LpvMatrices<double> m = model.eval_matrices(rho);
            const Eigen::Vector2d dx = (m.A - m0.A) * x;
            const Eigen::Vector2d dB = m.B - m0.B;
            for (int k = 0; k < n; ++k) {
                const Eigen::Vector2d xi = dx + dB * grid_point(region.u_lo, region.u_hi, k, n);
                lo = lo.cwiseMin(xi);
                hi = hi.cwiseMax(xi);
            }
        }
    }
    const Eigen::Vector2d c = (lo + hi) / 2;
    const Eigen::Vector2d half = (hi - lo) / 2 * (1 + region.inflation);
    return HPolytope<double>::box(Vec(c - half), Vec(c + half));
}

TubeDesign design_tube(const LpvModel<double>& model, const TubeConfig& cfg)
{
    cfg.validate();
    TubeDesign d;
    d.rho_bar = cfg.rho_bar ? *cfg.rho_bar : model.bounds().centroid();
    const LpvMatrices<double> m = model.eval_matrices(d.rho_bar);
    d.A0 = m.A;
    d.B0 = m.B;
    d.B_w = m.B_w;
    d.eps = cfg.eps;
    const auto lqr = dlqr<double>(d.A0, Mat(d.B0), cfg.Q, Mat::Constant(1, 1, cfg.R));
    d.K_t = lqr.K.row(0);

    d.E = bound_uncertainty(model, d.rho_bar, cfg.region, cfg.scheduling);
    const auto mrpi = mrpi_outer_approx<double>(d.A0 + d.B0 * d.K_t, d.E, cfg.eps, cfg.mrpi_directions);
    d.X_i = mrpi.set;
    d.mrpi_s = mrpi.s;
    d.mrpi_alpha = mrpi.alpha;

    d.X = HPolytope<double>::box(Vec(cfg.x_min), Vec(cfg.x_max));
    d.U = HPolytope<double>::box(Vec::Constant(1, cfg.u_min), Vec::Constant(1, cfg.u_max));
    d.Z = minkowski_diff(d.X, d.X_i);
    d.V = minkowski_diff(d.U, d.X_i, Mat(d.K_t));
    if (is_empty(d.Z))
        throw SynthesisError("design_tube: tightened state set Z is empty; shrink the uncertainty region or "
                             "revise Q/R");
    if (is_empty(d.V))
        throw SynthesisError("design_tube: tightened input set V is empty; the ancillary gain uses more than "
                             "the whole input range over X_i, revise Q/R or the uncertainty region");
    return d;
}

NominalTarget nominal_target(const TubeDesign& d, double x2_ref, const Eigen::Vector2d& w_s)
{
    // Variables (z1, z2, v / kInputScale); minimize (z2 - ref)^2 on the nominal steady set.
    const Eigen::DiagonalMatrix<double, 3> D(1.0, 1.0, kInputScale);
    Mat Q = Mat::Zero(3, 3);
    Q(1, 1) = 2;
    Vec c = Vec::Zero(3);
    c(1) = -2 * x2_ref;
    Mat A_eq(2, 3);
    A_eq << d.A0 - Eigen::Matrix2d::Identity(), d.B0;
    const Vec b_eq = -d.B_w * w_s;
    Mat A_in = Mat::Zero(d.Z.rows() + d.V.rows(), 3);
    Vec b_in(A_in.rows());
    A_in.topLeftCorner(d.Z.rows(), 2) = d.Z.H;
    b_in.head(d.Z.rows()) = d.Z.h;
    A_in.bottomRightCorner(d.V.rows(), 1) = d.V.H;
    b_in.tail(d.V.rows()) = d.V.h;
    QpProblem<double> qp(D * Q * D, D * c, A_in * D, b_in, A_eq * D, b_eq);
    normalize_cost(qp);
    const auto sol = solve(qp);
    if (!sol.optimal())
        throw InfeasibleTargetError(std::string("nominal_target: no nominal steady state inside Z x V (")
                                    + to_string(sol.status) + ")");
    NominalTarget t;
    t.z_s = sol.x.head<2>();
    t.v_s = kInputScale * sol.x(2);
    t.w_s = w_s;
    t.x2_ref = x2_ref;
    t.exact = std::abs(t.z_s(1) - x2_ref) <= 1e-9;
    return t;
}

HPolytope<double> nominal_terminal_set(const TubeDesign& d, const NominalTarget& t, int iter_cap)
{
    const HPolytope<double> Zdev = d.Z.translate(Vec(-t.z_s));
    const HPolytope<double> Vdev(d.V.H * d.K_t, d.V.h - d.V.H * t.v_s);
    const std::vector<Mat> loop{Mat(d.A0 + d.B0 * d.K_t)};
    return max_invariant_set<double>(loop, intersect(Zdev, Vdev), iter_cap).set;
}

NominalQp build_nominal_qp(const TubeDesign& d, const Eigen::Vector2d& z0, const NominalTarget& t,
                           const HPolytope<double>& Z_f, std::span<const Eigen::Vector2d> w_preview, int N,
                           const Eigen::Matrix2d& Q, double R)
{
    if (static_cast<int>(w_preview.size()) != N)
        throw PreconditionError("build_nominal_qp: preview length must equal N");
    NominalQp out;
    out.var_scale = kInputScale;
    out.S.assign(N + 1, Mat::Zero(2, N));
    out.s.assign(N + 1, Eigen::Vector2d::Zero());
    out.s[0] = z0;
    for (int k = 0; k < N; ++k) {
        out.S[k + 1] = d.A0 * out.S[k];
        out.S[k + 1].col(k) += d.B0;
        out.s[k + 1] = d.A0 * out.s[k] + d.B_w * w_preview[k];
    }
    Mat H = Mat::Zero(N, N);
    Vec c = Vec::Zero(N);
    double k0 = N * R * t.v_s * t.v_s;
    for (int k = 1; k <= N; ++k) {
        const Eigen::Vector2d g = out.s[k] - t.z_s;
        H += 2 * out.S[k].transpose() * Q * out.S[k];
        c += 2 * out.S[k].transpose() * Q * g;
        k0 += g.dot(Q * g);
    }
    H.diagonal().array() += 2 * R;
    c.array() -= 2 * R * t.v_s;

    const Eigen::Index zr = d.Z.rows(), vr = d.V.rows(), fr = Z_f.rows();
    Mat A_in = Mat::Zero(N * (zr + vr) + fr, N);
    Vec b_in(A_in.rows());
    Eigen::Index r = 0;
    for (int k = 1; k <= N; ++k) {
        A_in.middleRows(r, zr) = d.Z.H * out.S[k];
        b_in.segment(r, zr) = d.Z.h - d.Z.H * out.s[k];
        r += zr;
    }
    for (int k = 0; k < N; ++k) {
        A_in.block(r, k, vr, 1) = d.V.H;
        b_in.segment(r, vr) = d.V.h;
        r += vr;
    }
    if (fr > 0) {
        A_in.middleRows(r, fr) = Z_f.H * out.S[N];
        b_in.segment(r, fr) = Z_f.h - Z_f.H * (out.s[N] - t.z_s);
    }
    const Mat Dm = Mat::Identity(N, N) * kInputScale;
    out.qp = QpProblem<double>(Dm * H * Dm, Dm * c, A_in * Dm, b_in, Mat::Zero(0, N), Vec::Zero(0));
    out.cost_scale = normalize_cost(out.qp);
    out.constant = k0;
    return out;
}

TubeController::TubeController(const LpvModel<double>& model, TubeConfig cfg)
    : TubeController(design_tube(model, cfg), cfg)
{
}

TubeController::TubeController(TubeDesign design, TubeConfig cfg) : design_(std::move(design)), cfg_(std::move(cfg))
{
    cfg_.validate();
}

void TubeController::reset(const Eigen::Vector2d& x0, double u_prev)
{
    z_ = x0;
    z_valid_ = true;
    u_prev_ = u_prev;
    warm_.clear();
    vq_prev_.resize(0);
    have_target_ = false;
}

ControlDiagnostics TubeController::step(const Eigen::Vector2d& x, std::span<const Eigen::Vector2d> preview,
                                        double x2_ref)
{
    using Clock = std::chrono::steady_clock;
    if (static_cast<int>(preview.size()) != cfg_.N)
        throw PreconditionError("TubeController::step: preview length must equal N");
    ControlDiagnostics d;
    const auto t0 = Clock::now();

    const Eigen::Vector2d& w_s = preview.back();
    if (!have_target_ || target_.x2_ref != x2_ref || target_.w_s != w_s) {
        try {
            target_ = nominal_target(design_, x2_ref, w_s);
            Z_f_ = nominal_terminal_set(design_, target_);
            have_target_ = true;
            warm_.clear();
        } catch (const InfeasibleTargetError&) {
            if (!have_target_)
                throw;
        }
    }

    if (!z_valid_) {
        z_ = x;
        z_valid_ = true;
        d.reinitialized = true;
    }
    d.containment = design_.X_i.scale(1 + design_.eps).contains(Vec(x - z_), 1e-9);
    if (!d.containment) {
        z_ = x;
        d.reinitialized = true;
    }
    d.z = z_;

    const NominalQp nq = build_nominal_qp(design_, z_, target_, Z_f_, preview, cfg_.N, cfg_.Q, cfg_.R);
    QpSolution<double> sol;
    if (vq_prev_.size() == cfg_.N) {
        Eigen::VectorXd guess = vq_prev_;
        for (int k = 0; k + 1 < cfg_.N; ++k)
            guess(k) = vq_prev_(k + 1);
        sol = solver_.solve(nq.qp, warm_, guess);
    } else {
        sol = solver_.solve(nq.qp, warm_);
    }
    d.qp_iterations = sol.iterations;
    if (sol.optimal()) {
        warm_ = sol.active_set;
        vq_prev_ = sol.x;
        const double v0 = nq.var_scale * sol.x(0);
        d.v = v0;
        d.cost = nq.qp.objective(sol.x) / nq.cost_scale + nq.constant;
        const double u = v0 + design_.K_t.dot(x - z_);
        d.u = std::clamp(u, cfg_.u_min, cfg_.u_max);
        d.clamped = d.u != u;
        z_ = design_.A0 * z_ + design_.B0 * v0 + design_.B_w * preview.front();
    } else {
        d.feasible = false;
        d.u = u_prev_;
        z_valid_ = false;
        warm_.clear();
        vq_prev_.resize(0);
    }
    d.solve_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    u_prev_ = d.u;
    return d;
}

} // namespace solarmpc
