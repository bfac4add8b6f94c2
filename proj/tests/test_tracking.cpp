#include <doctest.h>

#include <random>

#include "solarmpc/linalg.hpp"
#include "solarmpc/plant.hpp"
#include "solarmpc/tracking.hpp"

using namespace solarmpc;

namespace {

const LpvModel<double>& model()
{
    static const LpvModel<double> m(PlantParams<double>{}, 3.0);
    return m;
}

const PolytopeVertices<double>& sub_box()
{
    static const PolytopeVertices<double> v =
        vertices_for_state_box(model(), Eigen::Vector2d(60, 50), Eigen::Vector2d(200, 150));
    return v;
}

HPolytope<double> state_box() { return HPolytope<double>::box(Eigen::Vector2d(0, 0), Eigen::Vector2d(600, 300)); }

const Eigen::Vector2d kNominalW(700, 25);

TerminalIngredients terminal_at(const Eigen::Vector2d& x_s)
{
    const TrackingConfig cfg;
    TerminalIngredients t = synthesize_terminal(sub_box(), cfg.Q, cfg.R);
    attach_terminal_set(t, state_box(), x_s);
    return t;
}

std::vector<Eigen::Vector2d> flat_preview(int N, const Eigen::Vector2d& w) { return std::vector<Eigen::Vector2d>(N, w); }

/// Cost written out directly from the prediction recursion.
double direct_cost(const Eigen::Vector2d& x0, const LpvMatrices<double>& m, const TargetPair& tgt,
                   const std::vector<Eigen::Vector2d>& wp, const TrackingConfig& cfg, const Eigen::Matrix2d& P,
                   const Eigen::VectorXd& z)
{
    const int N = cfg.N;
    const Eigen::Vector2d xa = z.segment<2>(N);
    const double ua = z(N + 2);
    double J = (xa - tgt.x_s).dot(P * (xa - tgt.x_s)) + cfg.R * (ua - tgt.u_s) * (ua - tgt.u_s);
    Eigen::Vector2d x = x0;
    for (int k = 0; k < N; ++k) {
        const double du = z(k) - (cfg.literal_input_penalty ? tgt.u_s : ua);
        J += cfg.R * du * du;
        x = m.step(x, z(k), wp[k]);
        const Eigen::Matrix2d& W = k + 1 == N ? P : cfg.Q;
        J += (x - xa).dot(W * (x - xa));
    }
    return J;
}

} // namespace

TEST_CASE("terminal synthesis on the operating sub-box")
{
    const TrackingConfig cfg;
    const TerminalIngredients t = synthesize_terminal(sub_box(), cfg.Q, cfg.R);
    for (int j = 0; j < 4; ++j) {
        CAPTURE(j);
        CHECK(lyapunov_residual(sub_box()[j], t.P, t.kappa, cfg.Q, cfg.R) <= 1e-8);
        CHECK(spectral_radius(Eigen::Matrix2d(sub_box()[j].A + sub_box()[j].B * t.kappa)) < 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(t.P);
    CHECK(es.eigenvalues().minCoeff() > 0);
    CHECK_FALSE(t.P_method.empty());
}

TEST_CASE("identical vertices collapse to the Lyapunov equation")
{
    const TrackingConfig cfg;
    const auto rho = model().scheduling_map(Eigen::Vector2d(110, 97));
    const auto m = model().eval_matrices(rho);
    PolytopeVertices<double> same;
    same.fill({m.A, m.B});
    const TerminalIngredients t = synthesize_terminal(same, cfg.Q, cfg.R);
    const Eigen::Matrix2d Acl = m.A + m.B * t.kappa;
    const Eigen::MatrixXd W = cfg.Q + cfg.R * t.kappa.transpose() * t.kappa;
    const Eigen::MatrixXd P = dlyap<double>(Acl, W);
    CHECK((t.P - P).norm() <= 1e-10 * P.norm());

    // The averaged pair is the single pair, so kappa is its LQR gain.
    const auto lqr = dlqr<double>(m.A, Eigen::MatrixXd(m.B), cfg.Q, Eigen::MatrixXd::Constant(1, 1, cfg.R));
    CHECK((t.kappa - lqr.K.row(0)).norm() <= 1e-12 * lqr.K.norm());
}

TEST_CASE("synthesis failure")
{
    PolytopeVertices<double> v;
    Eigen::Matrix2d A;
    A << 1.5, 0, 0, 0.5;
    v[0] = {A, Eigen::Vector2d(1, 0)};
    v[1] = {A, Eigen::Vector2d(-1, 0)};
    v[2] = v[0];
    v[3] = v[1];
    CHECK_THROWS_AS(synthesize_terminal(v, Eigen::Matrix2d::Identity(), 1.0), SynthesisError);

    // A common LQR gain of the average that destabilizes one vertex.
    v[0] = {A, Eigen::Vector2d(1, 0)};
    v[1] = v[2] = {A, Eigen::Vector2d(1, 0)};
    v[3] = {A, Eigen::Vector2d(-0.2, 0)};
    CHECK_THROWS_AS(synthesize_terminal(v, Eigen::Matrix2d::Identity(), 1.0), SynthesisError);
}

TEST_CASE("terminal set is invariant under every vertex closed loop")
{
    const TargetPair tgt = steady_pair_for(97, kNominalW, model());
    const TerminalIngredients t = terminal_at(tgt.x_s);
    REQUIRE(t.X_f_converged);
    REQUIRE_FALSE(is_empty(t.X_f));
    CHECK(includes(state_box().translate(-Eigen::VectorXd(tgt.x_s)), t.X_f, 1e-9));

    std::mt19937_64 rng(11);
    Eigen::Vector2d lo, hi;
    for (int i = 0; i < 2; ++i) {
        Eigen::VectorXd d = Eigen::VectorXd::Zero(2);
        d(i) = 1;
        hi(i) = support(t.X_f, d);
        lo(i) = -support(t.X_f, Eigen::VectorXd(-d));
    }
    std::uniform_real_distribution<double> u01(0, 1);
    int drawn = 0, violations = 0;
    while (drawn < 10000) {
        const Eigen::Vector2d e(lo(0) + (hi(0) - lo(0)) * u01(rng), lo(1) + (hi(1) - lo(1)) * u01(rng));
        if (!t.X_f.contains(Eigen::VectorXd(e), 0))
            continue;
        ++drawn;
        for (const auto& v : t.vertices)
            violations += !t.X_f.contains(Eigen::VectorXd((v.A + v.B * t.kappa) * e), 1e-9);
    }
    CHECK(violations == 0);
}

TEST_CASE("steady pair")
{
    SUBCASE("zero drive")
    {
        const TargetPair t = steady_pair_for(0, Eigen::Vector2d::Zero(), model());
        CHECK(t.x_s.norm() <= 1e-12);
        CHECK(t.u_s == 0);
    }
    SUBCASE("fixed point of the Euler step")
    {
        for (double ref : {60.0, 80.0, 97.0, 120.0, 150.0}) {
            for (double I : {400.0, 700.0, 900.0}) {
                CAPTURE(ref);
                CAPTURE(I);
                const Eigen::Vector2d w(I, 25);
                const TargetPair t = steady_pair_for(ref, w, model());
                CHECK(t.x_s(1) == ref);
                const auto s = euler_discrete_model(PlantState<double>::from_vector(t.x_s),
                                                    Exogenous<double>{I, 25, t.u_s}, model().params(), 3.0);
                CHECK((s.vector() - t.x_s).cwiseAbs().maxCoeff() <= 1e-8);
            }
        }
    }
    SUBCASE("nominal operating point")
    {
        const TargetPair t = steady_pair_for(97, kNominalW, model());
        WARN(std::abs(t.x_s(0) - 109.93) <= 2.0);
        CHECK(t.u_s > 0);
        CHECK(t.u_s < 0.35);
    }
    SUBCASE("reference outside the state box")
    {
        CHECK_THROWS_AS(steady_pair_for(301, kNominalW, model()), InfeasibleTargetError);
        CHECK_THROWS_AS(steady_pair_for(-1, kNominalW, model()), InfeasibleTargetError);
    }
}

TEST_CASE("tracking QP at the target")
{
    const TrackingConfig cfg;
    const TargetPair tgt = steady_pair_for(97, kNominalW, model());
    const TerminalIngredients term = terminal_at(tgt.x_s);
    const auto mu = model().membership_from_rho(model().scheduling_map(tgt.x_s));
    const auto m = blend_vertices(mu, model().vertices(), model().B_w());
    const auto wp = flat_preview(cfg.N, kNominalW);
    const TrackingQp tq = build_tracking_qp(tgt.x_s, m, tgt, wp, cfg, term, true);
    const auto sol = solve(tq.qp);
    REQUIRE(sol.optimal());
    const Eigen::VectorXd z = tq.physical(sol.x);
    CHECK(std::abs(z(0) - tgt.u_s) <= 1e-8);
    CHECK(std::abs(tq.cost(sol.x)) <= 1e-8);
}

TEST_CASE("cost assembly matches the prediction recursion")
{
    std::mt19937_64 rng(12);
    const TargetPair tgt = steady_pair_for(97, kNominalW, model());
    const TerminalIngredients term = terminal_at(tgt.x_s);
    std::uniform_real_distribution<double> ux(-20, 20), uu(0, 1e-3), ui(300, 900);
    for (bool literal : {false, true}) {
        TrackingConfig cfg;
        cfg.literal_input_penalty = literal;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<Eigen::Vector2d> wp;
            for (int k = 0; k < cfg.N; ++k)
                wp.emplace_back(ui(rng), 25);
            const Eigen::Vector2d x0 = tgt.x_s + Eigen::Vector2d(ux(rng), ux(rng));
            const auto m = model().eval_matrices(model().scheduling_map(x0));
            const TrackingQp tq = build_tracking_qp(x0, m, tgt, wp, cfg, term, true);
            Eigen::VectorXd z(cfg.N + 3);
            for (int k = 0; k < cfg.N; ++k)
                z(k) = uu(rng);
            z.segment<2>(cfg.N) = tgt.x_s + Eigen::Vector2d(ux(rng), ux(rng));
            z(cfg.N + 2) = uu(rng);
            const Eigen::VectorXd zq = z.cwiseQuotient(tq.var_scale);
            const double direct = direct_cost(x0, m, tgt, wp, cfg, term.P, z);
            CHECK(tq.cost(zq) == doctest::Approx(direct).epsilon(1e-9));

            // Predicted states agree with the recursion.
            const auto xs = tq.predicted_states(z);
            Eigen::Vector2d x = x0;
            for (int k = 0; k < cfg.N; ++k) {
                x = m.step(x, z(k), wp[k]);
                CHECK((xs[k + 1] - x).norm() <= 1e-10 * x.norm());
            }

            // Terminal rows are H_f (x(N) - x_a) <= h_f.
            REQUIRE(tq.terminal_row_begin >= 0);
            const Eigen::VectorXd lhs =
                tq.qp.A_ineq.middleRows(tq.terminal_row_begin, term.X_f.rows()) * zq
                - tq.qp.b_ineq.segment(tq.terminal_row_begin, term.X_f.rows());
            const Eigen::VectorXd direct_rows =
                term.X_f.H * Eigen::VectorXd(x - z.segment<2>(cfg.N)) - term.X_f.h;
            CHECK((lhs - direct_rows).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, direct_rows.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("one-step problem against its KKT system")
{
    // N = 1, no terminal set, interior: the minimizer solves the equality-constrained KKT system
    // of the cost's Hessian, which is recovered here by exact second differences (the cost is quadratic).
    TrackingConfig cfg;
    cfg.N = 1;
    const TargetPair tgt = steady_pair_for(97, kNominalW, model());
    const TerminalIngredients term = terminal_at(tgt.x_s);
    const Eigen::Vector2d x0 = tgt.x_s + Eigen::Vector2d(0.5, 0.2);
    const auto m = model().eval_matrices(model().scheduling_map(x0));
    const auto wp = flat_preview(1, kNominalW);

    auto J = [&](const Eigen::Vector4d& z) {
        return direct_cost(x0, m, tgt, wp, cfg, term.P, Eigen::VectorXd(z));
    };
    const Eigen::Vector4d h(1e-4, 1, 1, 1e-4);
    const Eigen::Vector4d z0(tgt.u_s, tgt.x_s(0), tgt.x_s(1), tgt.u_s);
    Eigen::Matrix4d H;
    Eigen::Vector4d g;
    for (int i = 0; i < 4; ++i) {
        const Eigen::Vector4d ei = Eigen::Vector4d::Unit(i) * h(i);
        g(i) = (J(z0 + ei) - J(z0 - ei)) / (2 * h(i));
        for (int j = 0; j < 4; ++j) {
            const Eigen::Vector4d ej = Eigen::Vector4d::Unit(j) * h(j);
            H(i, j) = (J(z0 + ei + ej) - J(z0 + ei - ej) - J(z0 - ei + ej) + J(z0 - ei - ej)) / (4 * h(i) * h(j));
        }
    }
    // Steady-state rows: (A - I) x_a + B u_a = -B_w w_s.
    Eigen::Matrix<double, 2, 4> Aeq = Eigen::Matrix<double, 2, 4>::Zero();
    Aeq.block<2, 2>(0, 1) = m.A - Eigen::Matrix2d::Identity();
    Aeq.col(3) = m.B;
    const Eigen::Vector2d beq = -m.B_w * kNominalW;
    Eigen::Matrix<double, 6, 6> K = Eigen::Matrix<double, 6, 6>::Zero();
    K.topLeftCorner<4, 4>() = H;
    K.topRightCorner<4, 2>() = Aeq.transpose();
    K.bottomLeftCorner<2, 4>() = Aeq;
    Eigen::Matrix<double, 6, 1> rhs;
    rhs << H * z0 - g, beq;
    const Eigen::Matrix<double, 6, 1> kkt = K.fullPivLu().solve(rhs);
    const Eigen::Vector4d z_oracle = kkt.head<4>();

    const TrackingQp tq = build_tracking_qp(x0, m, tgt, wp, cfg, term, false);
    const auto sol = solve(tq.qp);
    REQUIRE(sol.optimal());
    CHECK(sol.active_set.empty());
    const Eigen::VectorXd z = tq.physical(sol.x);
    CHECK(std::abs(z(0) - z_oracle(0)) <= 1e-8);
    CHECK(std::abs(z(3) - z_oracle(3)) <= 1e-8);
    CHECK((z.segment<2>(1) - z_oracle.segment<2>(1)).cwiseAbs().maxCoeff() <= 1e-8 * tgt.x_s.norm());
}

TEST_CASE("controller at the target holds u_s")
{
    const TrackingConfig cfg;
    const TargetPair tgt = steady_pair_for(97, kNominalW, model());
    TrackingOptions opts;
    opts.pinned_mu = model().membership_from_rho(model().scheduling_map(tgt.x_s));
    TrackingController c(model(), cfg, MheConfig{}, terminal_at(tgt.x_s), opts);
    c.reset(tgt.x_s, tgt.u_s);
    const auto wp = flat_preview(cfg.N, kNominalW);
    const auto d = c.step(tgt.x_s, wp, 97);
    CHECK(d.feasible);
    CHECK(std::abs(d.u - tgt.u_s) <= 1e-6);
    CHECK(c.last_target().x_s(0) == doctest::Approx(tgt.x_s(0)).epsilon(1e-14));
}

TEST_CASE("saturating target drives the pump to its limit")
{
    // Start at the steady state the plant reaches with the pump at its limit; the
    // reference (1 C) would need more flow, so holding u = 0.35 is the best the loop can do.
    const TrackingConfig cfg;
    const Eigen::Vector2d w(20000, 25);
    REQUIRE(steady_pair_for(1, w, model()).u_s > 0.35);
    double lo = 1, hi = 300;
    for (int it = 0; it < 200; ++it) {
        const double mid = (lo + hi) / 2;
        (steady_pair_for(mid, w, model()).u_s > 0.35 ? lo : hi) = mid;
    }
    const TargetPair sat = steady_pair_for(hi, w, model());
    TrackingOptions opts;
    opts.pinned_mu = model().membership_from_rho(model().scheduling_map(sat.x_s));
    TrackingController c(model(), cfg, MheConfig{}, terminal_at(Eigen::Vector2d(110, 97)), opts);
    c.reset(sat.x_s, 0.35);
    const auto d = c.step(sat.x_s, flat_preview(cfg.N, w), 1);
    CHECK(d.feasible);
    CHECK(d.u == 0.35);
}

TEST_CASE("closed loop against the plant: inputs in U, predictions in X")
{
    const TrackingConfig cfg;
    const PlantParams<double> p;
    const TargetPair tgt = steady_pair_for(97, kNominalW, model());
    TrackingController c(model(), cfg, MheConfig{}, terminal_at(tgt.x_s));
    Eigen::Vector2d x(60, 50);
    c.reset(x, 0);
    const auto wp = flat_preview(cfg.N, kNominalW);
    for (int k = 0; k < 600; ++k) {
        const auto d = c.step(x, wp, 97);
        REQUIRE(d.feasible);
        CHECK(d.u >= 0);
        CHECK(d.u <= 0.35);
        CHECK(d.mu.sum() == doctest::Approx(1.0).epsilon(1e-12));
        x = integrate_step(PlantState<double>::from_vector(x), Exogenous<double>{700, 25, d.u}, p, 3.0, 10).vector();
    }
    CHECK(std::abs(x(1) - 97) <= 0.5);
}

TEST_CASE("receding-horizon cost decrease under a frozen model")
{
    const TrackingConfig cfg;
    const TargetPair tgt = steady_pair_for(97, kNominalW, model());
    const TerminalIngredients term = terminal_at(tgt.x_s);
    const auto mu = model().membership_from_rho(model().scheduling_map(tgt.x_s));
    const auto m = blend_vertices(mu, model().vertices(), model().B_w());
    const auto wp = flat_preview(cfg.N, kNominalW);
    Eigen::Vector2d x = tgt.x_s + Eigen::Vector2d(3, -2);
    std::optional<Eigen::VectorXd> prev;
    for (int k = 0; k < 30; ++k) {
        const TrackingQp tq = build_tracking_qp(x, m, tgt, wp, cfg, term, true);
        const auto sol = solve(tq.qp);
        REQUIRE(sol.optimal());
        const Eigen::VectorXd z = tq.physical(sol.x);
        const double V = tq.cost(sol.x);
        if (prev) {
            // Shifted candidate: tail of the previous plan plus the terminal law.
            const Eigen::VectorXd& zp = *prev;
            Eigen::VectorXd cand = zp;
            for (int j = 0; j + 1 < cfg.N; ++j)
                cand(j) = zp(j + 1);
            const auto xs = tq.predicted_states(cand);
            const Eigen::Vector2d xa = zp.segment<2>(cfg.N);
            cand(cfg.N - 1) = zp(cfg.N + 2) + term.kappa.dot(xs[cfg.N - 1] - xa);
            const Eigen::VectorXd cq = cand.cwiseQuotient(tq.var_scale);
            const bool feasible = (tq.qp.A_ineq * cq - tq.qp.b_ineq).maxCoeff() <= 1e-9
                                  && (tq.qp.A_eq * cq - tq.qp.b_eq).cwiseAbs().maxCoeff() <= 1e-9;
            REQUIRE(feasible);
            CHECK(V <= tq.cost(cq) + 1e-9 * std::max(1.0, V));
        }
        prev = z;
        x = m.step(x, z(0), wp[0]);
    }
}

TEST_CASE("pinned uniform membership without terminal set reproduces the LTI baseline")
{
    const TrackingConfig cfg;
    const PlantParams<double> p;
    const TerminalIngredients term = terminal_at(steady_pair_for(97, kNominalW, model()).x_s);
    TrackingOptions opts;
    opts.pinned_mu = MembershipWeights<double>::uniform();
    opts.use_terminal_set = false;
    TrackingController a(model(), cfg, MheConfig{}, term, opts);
    TrackingController b = TrackingController::lti(model(), cfg, term);
    CHECK(a.name() == "AMPC");
    CHECK(b.name() == "LTIMPC");
    Eigen::Vector2d xa(60, 50), xb = xa;
    a.reset(xa, 0);
    b.reset(xb, 0);
    for (int k = 0; k < 300; ++k) {
        const double I = k < 233 ? 700 : 550;
        std::vector<Eigen::Vector2d> wp;
        for (int j = 0; j < cfg.N; ++j)
            wp.emplace_back(k + j < 233 ? 700 : 550, 25);
        const auto da = a.step(xa, wp, 97);
        const auto db = b.step(xb, wp, 97);
        REQUIRE(da.u == db.u);
        xa = integrate_step(PlantState<double>::from_vector(xa), Exogenous<double>{I, 25, da.u}, p, 3.0, 10).vector();
        xb = integrate_step(PlantState<double>::from_vector(xb), Exogenous<double>{I, 25, db.u}, p, 3.0, 10).vector();
        REQUIRE(xa == xb);
    }
}

TEST_CASE("preview length is checked")
{
    const TrackingConfig cfg;
    TrackingController c = TrackingController::lti(model(), cfg, terminal_at(Eigen::Vector2d(110, 97)));
    c.reset({60, 50}, 0);
    CHECK_THROWS_AS(c.step({60, 50}, flat_preview(cfg.N - 1, kNominalW), 97), PreconditionError);
}
