#pragma once

// Polytopic LPV embedding of the Euler-discretized collector model:
//   x(k+1) = A(rho) x(k) + B(rho) u(k) + B_w w(k),  rho = f_rho(x(k)).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "solarmpc/errors.hpp"
#include "solarmpc/plant.hpp"

namespace solarmpc {

template <typename Scalar = double>
struct SchedulingPoint {
    Scalar rho1{0};  // d_i pi h_i(T_p)
    Scalar rho2{0};  // (dT_f/ds) / A_i
};

template <typename Scalar = double>
struct LpvMatrices {
    Eigen::Matrix<Scalar, 2, 2> A;
    Vector2<Scalar> B;
    Eigen::Matrix<Scalar, 2, 2> B_w;

    Vector2<Scalar> step(const Vector2<Scalar>& x, Scalar u, const Vector2<Scalar>& w) const
    {
        return A * x + B * u + B_w * w;
    }
};

template <typename Scalar = double>
struct VertexModel {
    Eigen::Matrix<Scalar, 2, 2> A;
    Vector2<Scalar> B;
};

/// Vertices ordered (rho1min,rho2min), (rho1min,rho2max), (rho1max,rho2min), (rho1max,rho2max).
template <typename Scalar = double>
using PolytopeVertices = std::array<VertexModel<Scalar>, 4>;

template <typename Scalar = double>
struct MembershipWeights {
    Eigen::Matrix<Scalar, 4, 1> mu = Eigen::Matrix<Scalar, 4, 1>::Constant(Scalar(0.25));

    static MembershipWeights uniform() { return {}; }
    static MembershipWeights unit(int j)
    {
        MembershipWeights w;
        w.mu.setZero();
        w.mu(j) = Scalar(1);
        return w;
    }

    bool on_simplex(Scalar tol) const
    {
        return (mu.array() >= -tol).all() && (mu.array() <= Scalar(1) + tol).all()
            && std::abs(static_cast<double>(mu.sum() - Scalar(1))) <= static_cast<double>(tol);
    }
};

template <typename Scalar = double>
struct SchedulingBounds {
    Scalar rho1_min{0}, rho1_max{0};
    Scalar rho2_min{0}, rho2_max{0};

    SchedulingPoint<Scalar> corner(int j) const
    {
        return {(j & 2) ? rho1_max : rho1_min, (j & 1) ? rho2_max : rho2_min};
    }
    SchedulingPoint<Scalar> centroid() const
    {
        return {(rho1_min + rho1_max) / 2, (rho2_min + rho2_max) / 2};
    }
};

template <typename Scalar = double>
class LpvModel {
public:
    using Matrix2 = Eigen::Matrix<Scalar, 2, 2>;

    static constexpr Scalar kBoundTolerance = Scalar(1e-9);

    LpvModel(const PlantParams<Scalar>& params, Scalar Ts) : params_(params), Ts_(Ts)
    {
        params_.validate();
        if (!(Ts > Scalar(0)))
            throw DomainError("LpvModel: Ts must be positive");
        const Scalar pi = Scalar(EIGEN_PI);
        bounds_ = {Scalar(0), params_.d_i * pi * params_.hbar_i, Scalar(0), Scalar(1) / params_.A_i};
        const Scalar cm = params_.plate_capacitance();
        B_w_ << Ts_ * params_.d_e * pi * params_.nu / cm, Ts_ * params_.d_e * pi * params_.h0 / cm, 0, 0;
        for (int j = 0; j < 4; ++j) {
            const LpvMatrices<Scalar> m = eval_matrices(bounds_.corner(j));
            vertices_[j] = {m.A, m.B};
        }
    }

    const PlantParams<Scalar>& params() const { return params_; }
    Scalar sample_time() const { return Ts_; }
    const SchedulingBounds<Scalar>& bounds() const { return bounds_; }
    const PolytopeVertices<Scalar>& vertices() const { return vertices_; }
    const Matrix2& B_w() const { return B_w_; }

    /// f_rho(x); values within kBoundTolerance outside P are snapped onto it, anything further is an error.
    SchedulingPoint<Scalar> scheduling_map(const Vector2<Scalar>& x) const
    {
        if (!x.allFinite())
            throw DomainError("scheduling_map: non-finite state");
        const Scalar pi = Scalar(EIGEN_PI);
        SchedulingPoint<Scalar> rho{
            params_.d_i * pi * fluid_heat_transfer(x(0), params_),
            spatial_gradient(x(1), params_) / params_.A_i,
        };
        rho.rho1 = snap(rho.rho1, bounds_.rho1_min, bounds_.rho1_max, "rho1");
        rho.rho2 = snap(rho.rho2, bounds_.rho2_min, bounds_.rho2_max, "rho2");
        return rho;
    }

    LpvMatrices<Scalar> eval_matrices(const SchedulingPoint<Scalar>& rho) const
    {
        check_inside(rho);
        const Scalar pi = Scalar(EIGEN_PI);
        const Scalar cm = params_.plate_capacitance();
        const Scalar cf = params_.fluid_capacitance();
        Matrix2 Ac;
        Ac << -params_.d_e * pi * params_.h0 / cm - rho.rho1 / cm, rho.rho1 / cm,
              rho.rho1 / cf, -rho.rho1 / cf;
        LpvMatrices<Scalar> m;
        m.A = Matrix2::Identity() + Ts_ * Ac;
        m.B = Vector2<Scalar>(Scalar(0), -Ts_ * rho.rho2);
        m.B_w = B_w_;
        return m;
    }

    /// Bilinear interpolation weights over the four vertices.
    MembershipWeights<Scalar> membership_from_rho(const SchedulingPoint<Scalar>& rho) const
    {
        check_inside(rho);
        const Scalar s1 = (rho.rho1 - bounds_.rho1_min) / (bounds_.rho1_max - bounds_.rho1_min);
        const Scalar s2 = (rho.rho2 - bounds_.rho2_min) / (bounds_.rho2_max - bounds_.rho2_min);
        MembershipWeights<Scalar> w;
        w.mu << (1 - s1) * (1 - s2), (1 - s1) * s2, s1 * (1 - s2), s1 * s2;
        return w;
    }

    /// Scheduling point implied by a convex combination of the vertices.
    SchedulingPoint<Scalar> rho_from_membership(const MembershipWeights<Scalar>& w) const
    {
        SchedulingPoint<Scalar> rho{0, 0};
        for (int j = 0; j < 4; ++j) {
            const SchedulingPoint<Scalar> c = bounds_.corner(j);
            rho.rho1 += w.mu(j) * c.rho1;
            rho.rho2 += w.mu(j) * c.rho2;
        }
        return rho;
    }

    bool contains(const SchedulingPoint<Scalar>& rho) const
    {
        return rho.rho1 >= bounds_.rho1_min && rho.rho1 <= bounds_.rho1_max
            && rho.rho2 >= bounds_.rho2_min && rho.rho2 <= bounds_.rho2_max;
    }

    /// A(f_rho(x)) x + B(f_rho(x)) u + B_w w.
    Vector2<Scalar> predict(const Vector2<Scalar>& x, Scalar u, const Vector2<Scalar>& w) const
    {
        return eval_matrices(scheduling_map(x)).step(x, u, w);
    }

private:
    Scalar snap(Scalar v, Scalar lo, Scalar hi, const char* name) const
    {
        const Scalar tol = kBoundTolerance * std::max(Scalar(1), hi);
        if (v < lo) {
            if (lo - v > tol)
                throw DomainError(std::string("scheduling_map: ") + name + " below the scheduling polytope");
            return lo;
        }
        if (v > hi) {
            if (v - hi > tol)
                throw DomainError(std::string("scheduling_map: ") + name + " above the scheduling polytope");
            return hi;
        }
        return v;
    }

    void check_inside(const SchedulingPoint<Scalar>& rho) const
    {
        if (!std::isfinite(static_cast<double>(rho.rho1)) || !std::isfinite(static_cast<double>(rho.rho2))
            || !contains(rho))
            throw DomainError("scheduling point outside the polytope P");
    }

    PlantParams<Scalar> params_;
    Scalar Ts_;
    SchedulingBounds<Scalar> bounds_;
    Matrix2 B_w_;
    PolytopeVertices<Scalar> vertices_;
};

/// sum_j mu_j [A_j, B_j]; B_w passes through unchanged.
template <typename Scalar>
LpvMatrices<Scalar> blend_vertices(const MembershipWeights<Scalar>& w, const PolytopeVertices<Scalar>& verts,
                                   const Eigen::Matrix<Scalar, 2, 2>& B_w)
{
    if (!w.mu.allFinite() || !w.on_simplex(Scalar(1e-9)))
        throw DomainError("blend_vertices: membership weights are off the simplex");
    LpvMatrices<Scalar> m;
    m.A.setZero();
    m.B.setZero();
    for (int j = 0; j < 4; ++j) {
        m.A += w.mu(j) * verts[j].A;
        m.B += w.mu(j) * verts[j].B;
    }
    m.B_w = B_w;
    return m;
}

/// Vertices of the sub-box of P spanned by f_rho over the state box [x1lo,x1hi] x [x2lo,x2hi].
template <typename Scalar>
PolytopeVertices<Scalar> vertices_for_state_box(const LpvModel<Scalar>& model, const Vector2<Scalar>& lo,
                                                const Vector2<Scalar>& hi)
{
    const SchedulingPoint<Scalar> a = model.scheduling_map(lo);
    const SchedulingPoint<Scalar> b = model.scheduling_map(hi);
    const SchedulingBounds<Scalar> box{a.rho1, b.rho1, a.rho2, b.rho2};
    PolytopeVertices<Scalar> v;
    for (int j = 0; j < 4; ++j) {
        const LpvMatrices<Scalar> m = model.eval_matrices(box.corner(j));
        v[j] = {m.A, m.B};
    }
    return v;
}

/// Midpoint of the sub-box of P spanned by f_rho over the state box.
template <typename Scalar>
SchedulingPoint<Scalar> scheduling_midpoint_for_state_box(const LpvModel<Scalar>& model, const Vector2<Scalar>& lo,
                                                          const Vector2<Scalar>& hi)
{
    const SchedulingPoint<Scalar> a = model.scheduling_map(lo);
    const SchedulingPoint<Scalar> b = model.scheduling_map(hi);
    return {(a.rho1 + b.rho1) / 2, (a.rho2 + b.rho2) / 2};
}

} // namespace solarmpc
