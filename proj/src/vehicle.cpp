#include "kfat/vehicle.hpp"
#include "kfat/errors.hpp"

#include <cmath>
#include <string>

namespace kfat {

void VehicleParams::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string("vehicle parameter must be strictly positive: ") + name);
        }
    };
    positive(mass, "mass");
    positive(yaw_inertia, "yaw_inertia");
    positive(dist_front_axle, "dist_front_axle");
    positive(dist_rear_axle, "dist_rear_axle");
    positive(cornering_stiffness_front, "cornering_stiffness_front");
    positive(cornering_stiffness_rear, "cornering_stiffness_rear");
    positive(gravity, "gravity");
    if (!(friction_coeff > 0.0 && friction_coeff <= 2.0)) {
        throw ConfigError("friction_coeff must lie in (0, 2]");
    }
}

namespace {

void require_speed(double vx, const char* where)
{
    if (!(vx > kLowSpeedThreshold)) {
        throw LowSpeedError(std::string(where) + ": vx must exceed " +
                            std::to_string(kLowSpeedThreshold) + " m/s, got " + std::to_string(vx));
    }
}

} // namespace

SlipAngles slip_angles(const VehicleState& state, const ControlInput& input,
                       const VehicleParams& params)
{
    require_speed(state.vx, "slip_angles");
    SlipAngles out;
    out.front = input.steer_angle -
                std::atan((state.vy + params.dist_front_axle * state.yaw_rate) / state.vx);
    out.rear = -std::atan((state.vy - params.dist_rear_axle * state.yaw_rate) / state.vx);
    return out;
}

double dugoff_lateral_force(double alpha, double fz, double c_alpha, double mu)
{
    const double t = std::tan(alpha);
    if (t == 0.0) {
        return 0.0;
    }
    const double lambda = mu * fz / (2.0 * c_alpha * std::abs(t));
    const double f = lambda < 1.0 ? lambda * (2.0 - lambda) : 1.0;
    return c_alpha * t * f;
}

AxleLoads static_axle_loads(const VehicleParams& params)
{
    const double w = params.mass * params.gravity / params.wheelbase();
    return {w * params.dist_rear_axle, w * params.dist_front_axle};
}

AxleLoads axle_loads_with_transfer(const VehicleParams& params, double long_accel,
                                   double cg_height)
{
    AxleLoads loads = static_axle_loads(params);
    const double shift = params.mass * long_accel * cg_height / params.wheelbase();
    loads.front -= shift;
    loads.rear += shift;
    // Keep a sliver of load on each axle so the tyre model stays defined.
    const double floor = 0.05 * params.mass * params.gravity;
    loads.front = std::max(loads.front, floor);
    loads.rear = std::max(loads.rear, floor);
    return loads;
}

AxleForces axle_forces(const VehicleState& state, const ControlInput& input,
                       const VehicleParams& params, const AxleLoads& loads)
{
    const SlipAngles sa = slip_angles(state, input, params);
    AxleForces fy;
    fy.front = dugoff_lateral_force(sa.front, loads.front, params.cornering_stiffness_front,
                                    params.friction_coeff);
    fy.rear = dugoff_lateral_force(sa.rear, loads.rear, params.cornering_stiffness_rear,
                                   params.friction_coeff);
    return fy;
}

VehicleState dynamics_step_with_loads(const VehicleState& state, const ControlInput& input,
                                      const VehicleParams& params, const AxleLoads& loads,
                                      double dt)
{
    const AxleForces fy = axle_forces(state, input, params, loads);
    const double cos_d = std::cos(input.steer_angle);

    VehicleState next;
    next.vx = state.vx + dt * (input.long_accel + state.yaw_rate * state.vy);
    next.vy = state.vy + dt * ((fy.front * cos_d + fy.rear) / params.mass -
                               state.yaw_rate * state.vx);
    next.yaw_rate = state.yaw_rate +
                    dt * (params.dist_front_axle * fy.front * cos_d -
                          params.dist_rear_axle * fy.rear) /
                        params.yaw_inertia;

    if (!std::isfinite(next.vx) || !std::isfinite(next.vy) || !std::isfinite(next.yaw_rate)) {
        const char* which = !std::isfinite(next.vx)   ? "vx"
                            : !std::isfinite(next.vy) ? "vy"
                                                      : "yaw_rate";
        throw NumericalError(std::string("dynamics_step produced non-finite ") + which);
    }
    return next;
}

VehicleState dynamics_step(const VehicleState& state, const ControlInput& input,
                           const VehicleParams& params, double dt)
{
    return dynamics_step_with_loads(state, input, params, static_axle_loads(params), dt);
}

Measurement measurement_model_with_loads(const VehicleState& state, const ControlInput& input,
                                         const VehicleParams& params, const AxleLoads& loads)
{
    const AxleForces fy = axle_forces(state, input, params, loads);
    Measurement m;
    m.vx = state.vx;
    m.ay = (fy.front * std::cos(input.steer_angle) + fy.rear) / params.mass;
    m.yaw_rate = state.yaw_rate;
    return m;
}

Measurement measurement_model(const VehicleState& state, const ControlInput& input,
                              const VehicleParams& params)
{
    return measurement_model_with_loads(state, input, params, static_axle_loads(params));
}

double sideslip(const VehicleState& state)
{
    require_speed(state.vx, "sideslip");
    return std::atan(state.vy / state.vx);
}

} // namespace kfat
