#pragma once

// Forward QP: MPC for tracking with an artificial steady pair (x_a, u_a),
// terminal cost P and terminal set X_f, over the frozen blended vertex model.
// The LTI baseline is the same problem with mu pinned uniform and no X_f.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

#include "solarmpc/controller.hpp"
#include "solarmpc/lpv_model.hpp"
#include "solarmpc/mhe.hpp"
#include "solarmpc/polytope.hpp"
#include "solarmpc/qp.hpp"

namespace solarmpc {

enum class TrackingMode { AMPC, LTIMPC };

struct TrackingConfig {
    int N = 10;
    Eigen::Matrix2d Q = Eigen::Vector2d(1, 10).asDiagonal();
    double R = 100;
    TrackingMode mode = TrackingMode::AMPC;
    /// Penalize u(k) - u_s (the cost exactly as written) instead of u(k) - u_a.
    bool literal_input_penalty = false;
    double u_min = 0;
    double u_max = 0.35;
    Eigen::Vector2d x_min = Eigen::Vector2d::Zero();
    Eigen::Vector2d x_max = Eigen::Vector2d(600, 300);

    void validate() const;
};

struct TerminalIngredients {
    Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
    Eigen::RowVector2d kappa = Eigen::RowVector2d::Zero();  // u = u_s + kappa (x - x_s)
    HPolytope<double> X_f;                                  // deviation coordinates around the target
    bool X_f_converged = false;
    PolytopeVertices<double> vertices;                      // vertex models the certificate holds for
    std::string P_method;                                   // which search produced P
};

struct TargetPair {
    Eigen::Vector2d x_s = Eigen::Vector2d::Zero();
    double u_s = 0;
    Eigen::Vector2d w_s = Eigen::Vector2d::Zero();
};

/// max eigenvalue of (A+B k)'P(A+B k) - P + Q + k'R k.
double lyapunov_residual(const VertexModel<double>& v, const Eigen::Matrix2d& P, const Eigen::RowVector2d& kappa,
                         const Eigen::Matrix2d& Q, double R);

/// LQR gain on the vertex average, then a common P for all four vertex inequalities.
TerminalIngredients synthesize_terminal(const PolytopeVertices<double>& verts, const Eigen::Matrix2d& Q, double R);

/// Adds X_f: the maximal set inside X - x_s invariant under every vertex closed loop.
void attach_terminal_set(TerminalIngredients& term, const HPolytope<double>& X, const Eigen::Vector2d& x_s,
                         int iter_cap = 200);

/// Steady state of the nonlinear (equivalently Euler) model with fluid temperature x2_ref under w_s.
TargetPair steady_pair_for(double x2_ref, const Eigen::Vector2d& w_s, const LpvModel<double>& model);

/// The QP is posed in scaled variables: physical z = var_scale .* z_qp, and the
/// physical cost is qp.objective(z_qp) / cost_scale + constant.
struct TrackingQp {
    QpProblem<double> qp;
    Eigen::VectorXd var_scale;
    double cost_scale = 1;
    double constant = 0;
    std::vector<Eigen::MatrixXd> S;      // x(k) = S[k] z + s[k], k = 0..N, physical z
    std::vector<Eigen::Vector2d> s;
    Eigen::Index terminal_row_begin = -1;  // first X_f row in A_ineq, -1 when absent
    int N = 0;

    Eigen::Index idx_u(int k) const { return k; }
    Eigen::Index idx_xa() const { return N; }
    Eigen::Index idx_ua() const { return N + 2; }
    Eigen::VectorXd physical(const Eigen::VectorXd& z_qp) const { return var_scale.cwiseProduct(z_qp); }
    double cost(const Eigen::VectorXd& z_qp) const { return qp.objective(z_qp) / cost_scale + constant; }
    std::vector<Eigen::Vector2d> predicted_states(const Eigen::VectorXd& z) const;
};

/// Decision vector [u(0..N-1); x_a; u_a]; `term` with a nonempty X_f adds the terminal block.
TrackingQp build_tracking_qp(const Eigen::Vector2d& x0, const LpvMatrices<double>& model, const TargetPair& target,
                             std::span<const Eigen::Vector2d> w_preview, const TrackingConfig& cfg,
                             const TerminalIngredients& term, bool use_terminal_set);

struct TrackingOptions {
    std::optional<MembershipWeights<double>> pinned_mu;  // skips the backward QP
    bool use_terminal_set = true;
};

class TrackingController : public Controller {
public:
    TrackingController(const LpvModel<double>& model, TrackingConfig cfg, MheConfig mhe, TerminalIngredients term,
                       TrackingOptions opts = {});

    /// Baseline: uniform mu, no terminal set.
    static TrackingController lti(const LpvModel<double>& model, TrackingConfig cfg, TerminalIngredients term);

    std::string name() const override;
    void reset(const Eigen::Vector2d& x0, double u_prev) override;
    ControlDiagnostics step(const Eigen::Vector2d& x, std::span<const Eigen::Vector2d> preview,
                            double x2_ref) override;

    const TargetPair& last_target() const { return target_; }
    const Eigen::VectorXd& last_solution() const { return z_; }

private:
    const LpvModel<double>* model_;
    TrackingConfig cfg_;
    TerminalIngredients term_;
    TrackingOptions opts_;
    MembershipEstimator mhe_;
    ActiveSetSolver<double> solver_{QpSettings<double>{.check_psd = false}};  // Hessian PSD by construction
    std::vector<Eigen::Index> warm_;
    Eigen::VectorXd z_;
    Eigen::VectorXd zq_prev_;  // last solution in QP scaling
    TargetPair target_;
    double u_prev_ = 0;
    Eigen::Vector2d w_prev_ = Eigen::Vector2d::Zero();
    bool have_prev_ = false;
};

} // namespace solarmpc
