#pragma once

// Backward QP: the constant membership vector that best explains the last N
// measured transitions under the blended vertex model, with an increment
// penalty towards the previous estimate. The model-matching errors are affine
// in mu and are substituted out, leaving a 4-variable QP on the simplex.

#include <Eigen/Dense>

#include <deque>
#include <vector>

#include "solarmpc/lpv_model.hpp"
#include "solarmpc/qp.hpp"

namespace solarmpc {

struct BackwardWindow {
    std::vector<Eigen::Vector2d> x_hist;  // N+1 states, oldest first
    std::vector<double> u_hist;           // N inputs
    std::vector<Eigen::Vector2d> w_hist;  // N disturbance pairs (I, T_e)
    MembershipWeights<double> mu_prev;

    int transitions() const { return static_cast<int>(u_hist.size()); }
    void validate(int N) const;
};

struct MheConfig {
    int N = 10;
    Eigen::Matrix2d Q_e = Eigen::Matrix2d::Identity();
    Eigen::Matrix4d Q_nu = Eigen::Matrix4d::Identity();
    /// Controllers seed the bootstrap with the membership of the initial state instead of uniform.
    bool measured_prior = false;

    void validate() const;
};

/// The QP in mu; `constant` receives the mu-independent part of the cost so that
/// objective(mu) + constant equals the window cost.
QpProblem<double> build_mhe_qp(const BackwardWindow& win, const MheConfig& cfg, const PolytopeVertices<double>& verts,
                               const Eigen::Matrix2d& B_w, double* constant = nullptr);

/// Direct evaluation of the window cost at mu.
double mhe_cost(const BackwardWindow& win, const MheConfig& cfg, const PolytopeVertices<double>& verts,
                const Eigen::Matrix2d& B_w, const MembershipWeights<double>& mu);

/// Model-matching part of the cost only (sum of weighted squared one-step errors).
double mhe_residual(const BackwardWindow& win, const MheConfig& cfg, const PolytopeVertices<double>& verts,
                    const Eigen::Matrix2d& B_w, const MembershipWeights<double>& mu);

struct MheEstimate {
    MembershipWeights<double> mu;
    double residual = 0;
    int qp_iterations = 0;
    bool from_qp = false;
};

MheEstimate estimate_mu(const BackwardWindow& win, const MheConfig& cfg, const PolytopeVertices<double>& verts,
                        const Eigen::Matrix2d& B_w, ActiveSetSolver<double>& solver);

/// Sliding-window estimator for one closed loop. Holds mu at the reset prior until N transitions are available.
class MembershipEstimator {
public:
    MembershipEstimator(MheConfig cfg, PolytopeVertices<double> verts, Eigen::Matrix2d B_w);

    void reset(const Eigen::Vector2d& x0,
               const MembershipWeights<double>& prior = MembershipWeights<double>::uniform());
    /// Transition x_prev --(u, w)--> x.
    void add_transition(double u, const Eigen::Vector2d& w, const Eigen::Vector2d& x);
    MheEstimate estimate();

    const MheConfig& config() const { return cfg_; }
    const MembershipWeights<double>& current() const { return mu_; }
    bool bootstrapping() const { return static_cast<int>(u_.size()) < cfg_.N; }

private:
    MheConfig cfg_;
    PolytopeVertices<double> verts_;
    Eigen::Matrix2d B_w_;
    ActiveSetSolver<double> solver_{QpSettings<double>{.check_psd = false}};  // Hessian PSD by construction
    std::deque<Eigen::Vector2d> x_;
    std::deque<double> u_;
    std::deque<Eigen::Vector2d> w_;
    MembershipWeights<double> mu_;
    std::vector<Eigen::Index> warm_;
};

} // namespace solarmpc
