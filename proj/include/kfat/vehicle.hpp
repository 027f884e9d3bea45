#pragma once

#include <Eigen/Core>

namespace kfat {

struct VehicleParams {
    double mass = 1650.0;                      // kg
    double yaw_inertia = 2900.0;               // kg m^2
    double dist_front_axle = 1.35;             // m, CoG to front axle
    double dist_rear_axle = 1.30;              // m, CoG to rear axle
    double cornering_stiffness_front = 80000.0; // N/rad, per axle
    double cornering_stiffness_rear = 90000.0;  // N/rad, per axle
    double friction_coeff = 1.0;
    double gravity = 9.81;                     // m/s^2

    double wheelbase() const { return dist_front_axle + dist_rear_axle; }
    void validate() const;
};

struct VehicleState {
    double vx = 0.0;       // m/s
    double vy = 0.0;       // m/s
    double yaw_rate = 0.0; // rad/s
};

struct ControlInput {
    double steer_angle = 0.0; // rad, road-wheel angle
    double long_accel = 0.0;  // m/s^2, measured, used as exogenous input
};

// Speed below which slip and sideslip angles are ill-conditioned.
constexpr double kLowSpeedThreshold = 0.1;

struct SlipAngles {
    double front = 0.0; // rad
    double rear = 0.0;  // rad
};

SlipAngles slip_angles(const VehicleState& state, const ControlInput& input,
                       const VehicleParams& params);

// Static Dugoff tyre: linear in tan(alpha) until the friction limit bites,
// then saturates smoothly below mu*fz.
double dugoff_lateral_force(double alpha, double fz, double c_alpha, double mu);

struct AxleLoads {
    double front = 0.0; // N
    double rear = 0.0;  // N
};

AxleLoads static_axle_loads(const VehicleParams& params);

// Quasi-static longitudinal load transfer, used only by the ground-truth
// simulator to create process-model mismatch. cg_height in metres.
AxleLoads axle_loads_with_transfer(const VehicleParams& params, double long_accel,
                                   double cg_height);

struct AxleForces {
    double front = 0.0; // N, lateral
    double rear = 0.0;  // N, lateral
};

AxleForces axle_forces(const VehicleState& state, const ControlInput& input,
                       const VehicleParams& params, const AxleLoads& loads);

// One explicit Euler step of the single-track model with static axle loads.
VehicleState dynamics_step(const VehicleState& state, const ControlInput& input,
                           const VehicleParams& params, double dt);

// Same step but with caller-supplied axle loads (simulator side).
VehicleState dynamics_step_with_loads(const VehicleState& state, const ControlInput& input,
                                      const VehicleParams& params, const AxleLoads& loads,
                                      double dt);

struct Measurement {
    double vx = 0.0;       // m/s
    double ay = 0.0;       // m/s^2
    double yaw_rate = 0.0; // rad/s
};

Measurement measurement_model(const VehicleState& state, const ControlInput& input,
                              const VehicleParams& params);

Measurement measurement_model_with_loads(const VehicleState& state, const ControlInput& input,
                                         const VehicleParams& params, const AxleLoads& loads);

double sideslip(const VehicleState& state);

} // namespace kfat
