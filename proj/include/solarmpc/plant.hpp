#pragma once

// Nonlinear solar-collector truth model: plate/fluid energy balances with the
// exponential heat-transfer and spatial-derivative relaxations.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "solarmpc/errors.hpp"

namespace solarmpc {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;

template <typename Scalar = double>
struct PlantParams {
    Scalar xi_m{1100};    // plate density, kg/m^3
    Scalar C_m{440};      // plate heat capacity, J/(kg C)
    Scalar xi_f{1000};    // fluid density, kg/m^3
    Scalar C_f{4018};     // fluid heat capacity, J/(kg C)
    Scalar A_e{0.0038};   // external pipe surface, m^2
    Scalar A_i{0.0013};   // internal pipe surface, m^2
    Scalar d_i{0.04};     // inner diameter, m
    Scalar d_e{0.07};     // outer diameter, m
    Scalar h0{11};        // absorber heat-transfer coefficient
    Scalar hbar_i{800};   // maximal fluid heat-transfer coefficient
    Scalar nu{3.655};     // thermal loss coefficient
    Scalar Tp_max{600};   // plate ceiling, C
    Scalar Tf_max{300};   // fluid ceiling, C
    Scalar u_max{0.35};   // pump limit, m^3/s

    void validate() const
    {
        const Scalar all[] = {xi_m, C_m, xi_f, C_f, A_e, A_i, d_i, d_e, h0, hbar_i, nu, Tp_max, Tf_max, u_max};
        for (Scalar v : all) {
            if (!(v > Scalar(0)) || !std::isfinite(static_cast<double>(v)))
                throw DomainError("PlantParams: every parameter must be finite and strictly positive");
        }
    }

    /// xi_m C_m A_e, the plate-side thermal capacitance per unit length.
    Scalar plate_capacitance() const { return xi_m * C_m * A_e; }
    /// xi_f C_f A_i, the fluid-side thermal capacitance per unit length.
    Scalar fluid_capacitance() const { return xi_f * C_f * A_i; }
};

template <typename Scalar = double>
struct PlantState {
    Scalar plate{0};  // T_p, C
    Scalar fluid{0};  // T_f, C

    static PlantState from_vector(const Vector2<Scalar>& v) { return {v(0), v(1)}; }
    Vector2<Scalar> vector() const { return Vector2<Scalar>(plate, fluid); }

    bool finite() const
    {
        return std::isfinite(static_cast<double>(plate)) && std::isfinite(static_cast<double>(fluid));
    }

    /// Box [0, Tp_max] x [0, Tf_max]; excursions are reported by callers, never clamped.
    bool within_limits(const PlantParams<Scalar>& p) const
    {
        return plate >= Scalar(0) && plate <= p.Tp_max && fluid >= Scalar(0) && fluid <= p.Tf_max;
    }
};

template <typename Scalar = double>
struct Exogenous {
    Scalar irradiance{0};  // I, W/m^2
    Scalar ambient{0};     // T_e, C
    Scalar flow{0};        // u, m^3/s

    Vector2<Scalar> disturbance() const { return Vector2<Scalar>(irradiance, ambient); }
};

namespace detail {

/// (1 - exp(-v/vmax)) / (1 - exp(-1)), evaluated with expm1 for accuracy near zero.
template <typename Scalar>
Scalar saturating_ratio(Scalar v, Scalar vmax)
{
    using std::expm1;
    return expm1(-v / vmax) / expm1(Scalar(-1));
}

} // namespace detail

/// Fluid heat-transfer coefficient h_i(T_p).
template <typename Scalar>
Scalar fluid_heat_transfer(Scalar plate_temp, const PlantParams<Scalar>& p)
{
    return p.hbar_i * detail::saturating_ratio(plate_temp, p.Tp_max);
}

/// Relaxed spatial derivative dT_f/ds as a function of T_f.
template <typename Scalar>
Scalar spatial_gradient(Scalar fluid_temp, const PlantParams<Scalar>& p)
{
    return detail::saturating_ratio(fluid_temp, p.Tf_max);
}

/// Right-hand sides (dT_p/dt, dT_f/dt) in C/s.
template <typename Scalar>
Vector2<Scalar> state_derivative(const PlantState<Scalar>& s, const Exogenous<Scalar>& e, const PlantParams<Scalar>& p)
{
    using std::isfinite;
    if (!s.finite() || !isfinite(static_cast<double>(e.irradiance)) || !isfinite(static_cast<double>(e.ambient))
        || !isfinite(static_cast<double>(e.flow)))
        throw DomainError("state_derivative: non-finite state or exogenous input");

    const Scalar pi = Scalar(EIGEN_PI);
    const Scalar hi = fluid_heat_transfer(s.plate, p);
    const Scalar exchange = p.d_i * pi * hi * (s.plate - s.fluid);
    const Scalar plate_power = p.d_e * pi * p.nu * e.irradiance - p.d_e * pi * p.h0 * (s.plate - e.ambient) - exchange;
    // The flow term's density symbol is the fluid density, so it reduces to u * dT_f/ds / A_i.
    const Scalar fluid_rate = exchange / p.fluid_capacitance() - e.flow * spatial_gradient(s.fluid, p) / p.A_i;
    return Vector2<Scalar>(plate_power / p.plate_capacitance(), fluid_rate);
}

/// Fixed-step RK4 over one sample with zero-order-held exogenous inputs.
template <typename Scalar>
PlantState<Scalar> integrate_step(const PlantState<Scalar>& s, const Exogenous<Scalar>& e, const PlantParams<Scalar>& p,
                                  Scalar Ts, int substeps)
{
    if (!(Ts > Scalar(0)))
        throw DomainError("integrate_step: Ts must be positive");
    if (substeps < 1)
        throw DomainError("integrate_step: substeps must be >= 1");

    const Scalar h = Ts / Scalar(substeps);
    Vector2<Scalar> x = s.vector();
    auto blowup = [](int i) {
        return IntegrationError("integrate_step: non-finite state at substep " + std::to_string(i), i);
    };
    for (int i = 1; i <= substeps; ++i) {
        // Intermediate stages may leave the finite range before x does; report those as blow-ups too.
        auto f = [&](const Vector2<Scalar>& v) {
            if (!v.allFinite())
                throw blowup(i);
            const Vector2<Scalar> d = state_derivative(PlantState<Scalar>::from_vector(v), e, p);
            if (!d.allFinite())
                throw blowup(i);
            return d;
        };
        const Vector2<Scalar> k1 = f(x);
        const Vector2<Scalar> k2 = f(x + h / 2 * k1);
        const Vector2<Scalar> k3 = f(x + h / 2 * k2);
        const Vector2<Scalar> k4 = f(x + h * k3);
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!x.allFinite())
            throw blowup(i);
    }
    return PlantState<Scalar>::from_vector(x);
}

/// Single forward-Euler step: the discrete prediction model the LPV embedding reproduces.
template <typename Scalar>
PlantState<Scalar> euler_discrete_model(const PlantState<Scalar>& s, const Exogenous<Scalar>& e,
                                        const PlantParams<Scalar>& p, Scalar Ts)
{
    if (!(Ts > Scalar(0)))
        throw DomainError("euler_discrete_model: Ts must be positive");
    const Vector2<Scalar> next = s.vector() + Ts * state_derivative(s, e, p);
    if (!next.allFinite())
        throw IntegrationError("euler_discrete_model: non-finite state", 1);
    return PlantState<Scalar>::from_vector(next);
}

} // namespace solarmpc
