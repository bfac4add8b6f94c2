#pragma once

// Robust tube MPC comparator: nominal LTI model frozen at rho_bar, the scheduling
// variation lumped into a bounded additive term xi in E, ancillary feedback
// u = v + K_t (x - z), and a nominal QP over the tightened sets Z and V.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "solarmpc/controller.hpp"
#include "solarmpc/lpv_model.hpp"
#include "solarmpc/polytope.hpp"
#include "solarmpc/qp.hpp"

namespace solarmpc {

using SchedulingFn = std::function<SchedulingPoint<double>(const Eigen::Vector2d&)>;

/// Region of (x, u) over which xi is sampled.
struct UncertaintyRegion {
    Eigen::Vector2d x_lo = Eigen::Vector2d(95, 85);
    Eigen::Vector2d x_hi = Eigen::Vector2d(125, 105);
    double u_lo = 0;
    double u_hi = 5e-4;
    int grid = 10;            // points per axis, >= 5
    double inflation = 0.05;  // relative growth of the bounding box half-widths
};

struct TubeConfig {
    int N = 10;
    Eigen::Matrix2d Q = Eigen::Vector2d(1, 10).asDiagonal();
    double R = 100;
    double eps = 0.05;
    int mrpi_directions = 64;
    UncertaintyRegion region;
    double u_min = 0;
    double u_max = 0.35;
    Eigen::Vector2d x_min = Eigen::Vector2d::Zero();
    Eigen::Vector2d x_max = Eigen::Vector2d(600, 300);
    /// Frozen scheduling point; the centroid of the model's polytope when empty.
    std::optional<SchedulingPoint<double>> rho_bar;
    /// Scheduling used when sampling xi; the model's own map when empty.
    SchedulingFn scheduling;

    void validate() const;
};

struct TubeDesign {
    SchedulingPoint<double> rho_bar;
    Eigen::Matrix2d A0 = Eigen::Matrix2d::Zero();
    Eigen::Vector2d B0 = Eigen::Vector2d::Zero();
    Eigen::Matrix2d B_w = Eigen::Matrix2d::Zero();
    Eigen::RowVector2d K_t = Eigen::RowVector2d::Zero();
    HPolytope<double> X, U;
    HPolytope<double> E, X_i, Z, V;
    int mrpi_s = 0;
    double mrpi_alpha = 0;
    double eps = 0.05;
};

/// Bounding box of xi = (A(rho) - A0) x + (B(rho) - B0) u over a grid of the region,
/// rho = scheduling(x), half-widths inflated by region.inflation.
HPolytope<double> bound_uncertainty(const LpvModel<double>& model, const SchedulingPoint<double>& rho_bar,
                                    const UncertaintyRegion& region, const SchedulingFn& scheduling = {});

TubeDesign design_tube(const LpvModel<double>& model, const TubeConfig& cfg);

/// Nominal steady pair closest (in z2) to the reference inside Z x V.
struct NominalTarget {
    Eigen::Vector2d z_s = Eigen::Vector2d::Zero();
    double v_s = 0;
    Eigen::Vector2d w_s = Eigen::Vector2d::Zero();
    double x2_ref = 0;
    bool exact = false;  // z_s(1) == x2_ref within 1e-9
};

NominalTarget nominal_target(const TubeDesign& d, double x2_ref, const Eigen::Vector2d& w_s);

/// Z_f: maximal set around the target invariant under the nominal loop v = v_s + K_t (z - z_s)
/// that keeps z in Z and v in V (deviation coordinates).
HPolytope<double> nominal_terminal_set(const TubeDesign& d, const NominalTarget& t, int iter_cap = 200);

struct NominalQp {
    QpProblem<double> qp;
    double var_scale = 1;                 // physical v = var_scale * qp variable
    double cost_scale = 1;                // physical cost = qp.objective / cost_scale + constant
    double constant = 0;
    std::vector<Eigen::MatrixXd> S;       // z(k) = S[k] v + s[k]
    std::vector<Eigen::Vector2d> s;
};

NominalQp build_nominal_qp(const TubeDesign& d, const Eigen::Vector2d& z0, const NominalTarget& t,
                           const HPolytope<double>& Z_f, std::span<const Eigen::Vector2d> w_preview, int N,
                           const Eigen::Matrix2d& Q, double R);

class TubeController : public Controller {
public:
    TubeController(const LpvModel<double>& model, TubeConfig cfg);
    TubeController(TubeDesign design, TubeConfig cfg);

    std::string name() const override { return "TMPC"; }
    void reset(const Eigen::Vector2d& x0, double u_prev) override;
    ControlDiagnostics step(const Eigen::Vector2d& x, std::span<const Eigen::Vector2d> preview,
                            double x2_ref) override;

    const TubeDesign& design() const { return design_; }
    const NominalTarget& last_target() const { return target_; }
    const Eigen::Vector2d& nominal_state() const { return z_; }

private:
    TubeDesign design_;
    TubeConfig cfg_;
    ActiveSetSolver<double> solver_{QpSettings<double>{.check_psd = false}};  // Hessian PSD by construction
    std::vector<Eigen::Index> warm_;
    Eigen::VectorXd vq_prev_;
    Eigen::Vector2d z_ = Eigen::Vector2d::Zero();
    bool z_valid_ = false;
    NominalTarget target_;
    HPolytope<double> Z_f_;
    bool have_target_ = false;
    double u_prev_ = 0;
};

} // namespace solarmpc
