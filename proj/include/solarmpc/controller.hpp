#pragma once

#include <Eigen/Dense>

#include <limits>
#include <span>
#include <string>

namespace solarmpc {

/// Per-sample record shared by every controller; fields a controller does not use stay NaN.
struct ControlDiagnostics {
    double u = 0;               // applied input, m^3/s
    double cost = std::numeric_limits<double>::quiet_NaN();
    int qp_iterations = 0;
    bool feasible = true;
    double solve_ms = 0;        // wall time of the online optimization(s)
    Eigen::Vector4d mu = Eigen::Vector4d::Constant(std::numeric_limits<double>::quiet_NaN());
    Eigen::Vector2d z = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
    double v = std::numeric_limits<double>::quiet_NaN();
    bool containment = true;    // tube controllers: x - z was inside the scaled tube section
    bool reinitialized = false;
    bool clamped = false;       // applied input had to be clipped into U
};

/// Receding-horizon controller driven by the scenario loop. Not thread-safe; one per loop.
class Controller {
public:
    virtual ~Controller() = default;
    virtual std::string name() const = 0;
    virtual void reset(const Eigen::Vector2d& x0, double u_prev) = 0;
    /// `preview` holds N disturbance pairs (I, T_e) starting at the current sample.
    virtual ControlDiagnostics step(const Eigen::Vector2d& x, std::span<const Eigen::Vector2d> preview,
                                    double x2_ref) = 0;
};

} // namespace solarmpc
