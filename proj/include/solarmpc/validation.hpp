#pragma once

// Randomized self-checks of the LPV embedding, shared by the CLI and the acceptance run.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <random>

#include "solarmpc/lpv_model.hpp"
#include "solarmpc/plant.hpp"

namespace solarmpc {

struct EmbeddingCheck {
    int samples = 0;
    double max_error = 0;
};

/// Euler step of the nonlinear model against A(f_rho(x)) x + B u + B_w w at random admissible
/// points; error is relative per component, floored at 1.
inline EmbeddingCheck ldi_equivalence(const LpvModel<double>& model, int samples, std::uint64_t seed)
{
    const PlantParams<double>& p = model.params();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> tp(0, p.Tp_max), tf(0, p.Tf_max), irr(0, 1200), amb(-10, 45),
        flow(0, p.u_max);
    EmbeddingCheck out;
    out.samples = samples;
    for (int i = 0; i < samples; ++i) {
        const PlantState<double> s{tp(rng), tf(rng)};
        const Exogenous<double> e{irr(rng), amb(rng), flow(rng)};
        const Vector2<double> a = euler_discrete_model(s, e, p, model.sample_time()).vector();
        const Vector2<double> b = model.predict(s.vector(), e.flow, e.disturbance());
        out.max_error = std::max(out.max_error, ((a - b).cwiseAbs().array() / a.cwiseAbs().array().max(1.0)).maxCoeff());
    }
    return out;
}

/// sum_j mu_j(rho) [A_j, B_j] against [A(rho), B(rho)] at random rho in P; absolute entrywise error.
inline EmbeddingCheck membership_reconstruction(const LpvModel<double>& model, int samples, std::uint64_t seed)
{
    const SchedulingBounds<double>& b = model.bounds();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> r1(b.rho1_min, b.rho1_max), r2(b.rho2_min, b.rho2_max);
    EmbeddingCheck out;
    out.samples = samples;
    for (int i = 0; i < samples; ++i) {
        const SchedulingPoint<double> rho{r1(rng), r2(rng)};
        const LpvMatrices<double> direct = model.eval_matrices(rho);
        const LpvMatrices<double> blend = blend_vertices(model.membership_from_rho(rho), model.vertices(), model.B_w());
        out.max_error = std::max({out.max_error, (direct.A - blend.A).cwiseAbs().maxCoeff(),
                                  (direct.B - blend.B).cwiseAbs().maxCoeff()});
    }
    return out;
}

} // namespace solarmpc
