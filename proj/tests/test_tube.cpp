#include <doctest.h>

#include <random>

#include "solarmpc/linalg.hpp"
#include "solarmpc/tube.hpp"
#include "oracles/nominal_mpc.hpp"
#include "oracles/vertex_enumeration.hpp"

using namespace solarmpc;

namespace {

const LpvModel<double>& model()
{
    static const LpvModel<double> m(PlantParams<double>{}, 3.0);
    return m;
}

TubeConfig operating_config()
{
    TubeConfig cfg;
    cfg.rho_bar = scheduling_midpoint_for_state_box(model(), Eigen::Vector2d(60, 50), Eigen::Vector2d(200, 150));
    return cfg;
}

const TubeDesign& design()
{
    static const TubeDesign d = design_tube(model(), operating_config());
    return d;
}

TubeConfig frozen_config()
{
    TubeConfig cfg = operating_config();
    const SchedulingPoint<double> r = *cfg.rho_bar;
    cfg.scheduling = [r](const Eigen::Vector2d&) { return r; };
    return cfg;
}

std::vector<Eigen::Vector2d> vertices_2d(const HPolytope<double>& P) { return oracle::vertices_2d(P.H, P.h); }

Eigen::Vector2d box_lo(const HPolytope<double>& P)
{
    return Eigen::Vector2d(-support(P, Eigen::VectorXd(Eigen::Vector2d(-1, 0))),
                           -support(P, Eigen::VectorXd(Eigen::Vector2d(0, -1))));
}

Eigen::Vector2d box_hi(const HPolytope<double>& P)
{
    return Eigen::Vector2d(support(P, Eigen::VectorXd(Eigen::Vector2d(1, 0))),
                           support(P, Eigen::VectorXd(Eigen::Vector2d(0, 1))));
}

/// Uniform draw from P by rejection in its bounding box.
Eigen::Vector2d draw_in(const HPolytope<double>& P, std::mt19937_64& rng)
{
    const Eigen::Vector2d lo = box_lo(P), hi = box_hi(P);
    std::uniform_real_distribution<double> a(lo(0), hi(0)), b(lo(1), hi(1));
    for (;;) {
        const Eigen::Vector2d e(a(rng), b(rng));
        if (P.contains(e, 0))
            return e;
    }
}

Eigen::Vector2d xi_at(const Eigen::Vector2d& x, double u, const TubeDesign& d)
{
    const auto m = model().eval_matrices(model().scheduling_map(x));
    return (m.A - d.A0) * x + (m.B - d.B0) * u;
}

} // namespace

TEST_CASE("config validation")
{
    TubeConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.R = 0;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    cfg = TubeConfig{};
    cfg.region.grid = 4;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    cfg = TubeConfig{};
    cfg.Q(0, 0) = -1;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
    cfg = TubeConfig{};
    cfg.u_max = cfg.u_min;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
}

TEST_CASE("nominal model and ancillary gain")
{
    const TubeDesign& d = design();
    const auto m = model().eval_matrices(*operating_config().rho_bar);
    CHECK(d.A0 == m.A);
    CHECK(d.B0 == m.B);
    const auto lqr = dlqr<double>(d.A0, Eigen::MatrixXd(d.B0), operating_config().Q,
                                  Eigen::MatrixXd::Constant(1, 1, operating_config().R));
    CHECK((d.K_t - lqr.K.row(0)).norm() == 0);
    CHECK(spectral_radius(Eigen::Matrix2d(d.A0 + d.B0 * d.K_t)) < 1);
}

TEST_CASE("frozen scheduling collapses the tube")
{
    const TubeDesign d = design_tube(model(), frozen_config());
    for (int i = 0; i < 2; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(2);
        e(i) = 1;
        CHECK(support(d.E, e) == 0);
        CHECK(support(d.E, Eigen::VectorXd(-e)) == 0);
        CHECK(std::abs(support(d.X_i, e)) <= 1e-12);
        CHECK(std::abs(support(d.X_i, Eigen::VectorXd(-e))) <= 1e-12);
    }
    CHECK(includes(d.Z, d.X, 1e-9));
    CHECK(includes(d.X, d.Z, 1e-9));
    CHECK(includes(d.V, d.U, 1e-12));
    CHECK(includes(d.U, d.V, 1e-12));
}

TEST_CASE("sampled uncertainty stays inside E")
{
    const TubeDesign& d = design();
    const UncertaintyRegion r = operating_config().region;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> x1(r.x_lo(0), r.x_hi(0)), x2(r.x_lo(1), r.x_hi(1)), u(r.u_lo, r.u_hi);
    int outside = 0;
    for (int i = 0; i < 10000; ++i)
        outside += !d.E.contains(Eigen::VectorXd(xi_at(Eigen::Vector2d(x1(rng), x2(rng)), u(rng), d)), 1e-12);
    CHECK(outside == 0);
    CHECK(d.E.contains(Eigen::VectorXd::Zero(2), 0));
}

TEST_CASE("refining the uncertainty grid stays within the inflation margin")
{
    TubeConfig fine = operating_config();
    fine.region.grid = 20;
    const HPolytope<double> E10 = design().E;
    const HPolytope<double> E20 = bound_uncertainty(model(), *fine.rho_bar, fine.region);
    const double infl = fine.region.inflation;
    const Eigen::Vector2d half10 = (box_hi(E10) - box_lo(E10)) / 2;
    for (int i = 0; i < 2; ++i) {
        CAPTURE(i);
        const double margin = infl / (1 + infl) * half10(i);
        CHECK(std::abs(box_hi(E20)(i) - box_hi(E10)(i)) <= margin);
        CHECK(std::abs(box_lo(E20)(i) - box_lo(E10)(i)) <= margin);
    }
}

TEST_CASE("error set is robustly invariant")
{
    const TubeDesign& d = design();
    const Eigen::Matrix2d Acl = d.A0 + d.B0 * d.K_t;
    std::mt19937_64 rng(12);
    int escaped = 0;
    for (int i = 0; i < 10000; ++i) {
        const Eigen::Vector2d e = draw_in(d.X_i, rng);
        const Eigen::Vector2d xi = draw_in(d.E, rng);
        escaped += !d.X_i.contains(Eigen::VectorXd(Acl * e + xi), 1e-9);
    }
    CHECK(escaped == 0);
    // Extreme points map inside as well.
    for (const auto& e : vertices_2d(d.X_i))
        for (const auto& xi : vertices_2d(d.E))
            CHECK(d.X_i.contains(Eigen::VectorXd(Acl * e + xi), 1e-9));
}

TEST_CASE("tightened input set by interval arithmetic")
{
    const TubeDesign& d = design();
    double kmax = -1e300, kmin = 1e300;
    const auto verts = vertices_2d(d.X_i);
    REQUIRE(verts.size() >= 3);
    for (const auto& e : verts) {
        kmax = std::max(kmax, d.K_t.dot(e));
        kmin = std::min(kmin, d.K_t.dot(e));
    }
    const TubeConfig cfg = operating_config();
    const double v_hi = cfg.u_max - kmax, v_lo = cfg.u_min - kmin;
    CHECK(support(d.V, Eigen::VectorXd::Constant(1, 1.0)) == doctest::Approx(v_hi).epsilon(1e-9));
    CHECK(-support(d.V, Eigen::VectorXd::Constant(1, -1.0)) == doctest::Approx(v_lo).epsilon(1e-9));
}

TEST_CASE("tightening is sound")
{
    const TubeDesign& d = design();
    std::mt19937_64 rng(13);
    const TubeConfig cfg = operating_config();
    std::uniform_real_distribution<double> z1(cfg.x_min(0), cfg.x_max(0)), z2(cfg.x_min(1), cfg.x_max(1));
    const double v_lo = -support(d.V, Eigen::VectorXd::Constant(1, -1.0));
    const double v_hi = support(d.V, Eigen::VectorXd::Constant(1, 1.0));
    std::uniform_real_distribution<double> vd(v_lo, v_hi);
    int bad = 0, drawn = 0;
    while (drawn < 10000) {
        const Eigen::Vector2d z(z1(rng), z2(rng));
        if (!d.Z.contains(Eigen::VectorXd(z), 0))
            continue;
        ++drawn;
        const Eigen::Vector2d e = draw_in(d.X_i, rng);
        const double u = vd(rng) + d.K_t.dot(e);
        bad += !d.X.contains(Eigen::VectorXd(z + e), 1e-9) || u < cfg.u_min - 1e-12 || u > cfg.u_max + 1e-12;
    }
    CHECK(bad == 0);
}

TEST_CASE("nominal target and terminal set")
{
    const TubeDesign& d = design();
    const Eigen::Vector2d w(700, 25);
    const NominalTarget t = nominal_target(d, 97, w);
    CHECK(t.exact);
    const Eigen::Vector2d r = (d.A0 - Eigen::Matrix2d::Identity()) * t.z_s + d.B0 * t.v_s + d.B_w * w;
    CHECK(r.cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(d.Z.contains(Eigen::VectorXd(t.z_s), 1e-9));
    CHECK(d.V.contains(Eigen::VectorXd::Constant(1, t.v_s), 1e-12));

    const HPolytope<double> Zf = nominal_terminal_set(d, t);
    CHECK(Zf.contains(Eigen::VectorXd::Zero(2), 1e-12));
    const Eigen::Matrix2d Acl = d.A0 + d.B0 * d.K_t;
    for (const auto& e : vertices_2d(Zf)) {
        CHECK(Zf.contains(Eigen::VectorXd(Acl * e), 1e-9));
        CHECK(d.Z.contains(Eigen::VectorXd(t.z_s + e), 1e-9));
        CHECK(d.V.contains(Eigen::VectorXd::Constant(1, t.v_s + d.K_t.dot(e)), 1e-9));
    }

    // A reference beyond reach projects onto the feasible steady set.
    const NominalTarget far = nominal_target(d, 150, w);
    CHECK_FALSE(far.exact);
    CHECK(far.z_s(1) < 150);
}

TEST_CASE("controller at the target applies the steady input")
{
    const TubeConfig cfg = operating_config();
    TubeController c(design(), cfg);
    const Eigen::Vector2d w(700, 25);
    const NominalTarget t = nominal_target(design(), 97, w);
    c.reset(t.z_s, t.v_s);
    const std::vector<Eigen::Vector2d> preview(cfg.N, w);
    for (int k = 0; k < 3; ++k) {
        const ControlDiagnostics d = c.step(t.z_s, preview, 97);
        REQUIRE(d.feasible);
        CHECK(d.u == doctest::Approx(t.v_s).epsilon(1e-9));
        CHECK(d.v == doctest::Approx(t.v_s).epsilon(1e-9));
        CHECK((c.nominal_state() - t.z_s).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(d.cost <= 1e-9);
    }
}

TEST_CASE("cost and predictions of the nominal QP")
{
    const TubeConfig cfg = operating_config();
    const TubeDesign& d = design();
    const Eigen::Vector2d w(700, 25);
    const NominalTarget t = nominal_target(d, 97, w);
    const HPolytope<double> Zf = nominal_terminal_set(d, t);
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> ud(0, 1e-3), wd(-50, 50);
    std::vector<Eigen::Vector2d> wp(cfg.N);
    for (auto& x : wp)
        x = w + Eigen::Vector2d(wd(rng), 0);
    const Eigen::Vector2d z0(105, 95);
    const NominalQp nq = build_nominal_qp(d, z0, t, Zf, wp, cfg.N, cfg.Q, cfg.R);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd v(cfg.N);
        for (int k = 0; k < cfg.N; ++k)
            v(k) = ud(rng);
        double J = 0;
        Eigen::Vector2d z = z0;
        for (int k = 0; k < cfg.N; ++k) {
            J += cfg.R * (v(k) - t.v_s) * (v(k) - t.v_s);
            z = d.A0 * z + d.B0 * v(k) + d.B_w * wp[k];
            J += (z - t.z_s).dot(cfg.Q * (z - t.z_s));
            CHECK((nq.S[k + 1] * v + nq.s[k + 1] - z).cwiseAbs().maxCoeff() <= 1e-9 * z.norm());
        }
        const Eigen::VectorXd vq = v / nq.var_scale;
        CHECK(nq.qp.objective(vq) / nq.cost_scale + nq.constant == doctest::Approx(J).epsilon(1e-8));
    }
}

TEST_CASE("frozen scheduling reproduces a nominal MPC built from states and inputs")
{
    const TubeConfig cfg = frozen_config();
    const TubeDesign d = design_tube(model(), cfg);
    const Eigen::Vector2d w(700, 25);
    TubeController c(d, cfg);

    oracle::LtiMpc m;
    m.A = d.A0;
    m.B = d.B0;
    m.B_w = d.B_w;
    m.K = d.K_t;
    m.Q = cfg.Q;
    m.R = cfg.R;
    m.N = cfg.N;
    m.x_min = cfg.x_min;
    m.x_max = cfg.x_max;
    m.u_min = cfg.u_min;
    m.u_max = cfg.u_max;
    // The reference is interior, so the target is the exact steady pair.
    const oracle::LtiTarget t = oracle::lti_steady(m, 97, w);
    const HPolytope<double> Zf = oracle::lti_terminal_set(m, t);

    std::vector<Eigen::Index> warm;
    ActiveSetSolver<double> solver;
    const std::vector<Eigen::Vector2d> preview(cfg.N, w);
    const double su = 1.0 / 1024;

    Eigen::Vector2d x = t.x_s + Eigen::Vector2d(1.5, 0.8);
    c.reset(x, 0);
    for (int k = 0; k < 40; ++k) {
        const auto s = solver.solve(oracle::lti_mpc_qp(m, t, Zf, x, w, su), warm);
        const ControlDiagnostics dg = c.step(x, preview, 97);
        CAPTURE(k);
        REQUIRE(dg.feasible);
        REQUIRE(s.optimal());
        warm = s.active_set;
        CHECK(std::abs(dg.u - su * s.x(2 * cfg.N)) <= 1e-9);
        x = d.A0 * x + d.B0 * dg.u + d.B_w * w;
    }
    CHECK(std::abs(x(1) - 97) < 0.5);
}
