#pragma once

#include "kfat/manoeuvre.hpp"
#include "kfat/vehicle.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace kfat {

enum class ManoeuvreKind {
    skidpad,
    slalom,
    j_turn,
    lane_change,
    braking_in_turn,
    spiral,
    random_steer,
    lap,
};

ManoeuvreKind parse_kind(const std::string& name);
std::string kind_name(ManoeuvreKind kind);

struct MismatchSpec {
    // Truth simulator runs with scaled cornering stiffnesses so the filter's
    // process model is systematically wrong, which is what q has to absorb.
    double stiffness_scale_front = 0.9;
    double stiffness_scale_rear = 1.1;
    bool load_transfer = true;
    double cg_height = 0.55; // m
};

struct ScenarioConfig {
    ManoeuvreKind kind = ManoeuvreKind::skidpad;
    double duration = 20.0;        // s
    double dt = 0.01;              // s
    double speed = 15.0;           // m/s, initial longitudinal speed
    double steer_amplitude = 0.04; // rad
    Eigen::Vector3d noise_std{0.1, 0.15, 0.005}; // vx (m/s), ay (m/s^2), yaw rate (rad/s)
    MismatchSpec mismatch;
    std::uint64_t seed = 0;

    void validate() const;
};

// Road-wheel steering angle at time t. Pure in (kind, t, cfg); random_steer
// derives its waveform from cfg.seed alone.
double steering_profile(ManoeuvreKind kind, double t, const ScenarioConfig& cfg);

// Longitudinal acceleration input at time t (braking_in_turn brakes mid-run,
// everything else coasts).
double accel_profile(ManoeuvreKind kind, double t, const ScenarioConfig& cfg);

Manoeuvre generate(const ScenarioConfig& cfg, const VehicleParams& truth_params);

std::vector<ScenarioConfig> training_set_configs(std::uint64_t seed);
std::vector<ScenarioConfig> test_set_configs(std::uint64_t seed);

// Generates every config against the same truth vehicle, prefixing names with
// a running index so files sort in composition order.
std::vector<Manoeuvre> realize_set(const std::vector<ScenarioConfig>& configs,
                                   const VehicleParams& truth_params, std::size_t first_index);

std::vector<Manoeuvre> training_set(std::uint64_t seed, const VehicleParams& truth_params);
std::vector<Manoeuvre> test_set(std::uint64_t seed, const VehicleParams& truth_params);

void save(const Manoeuvre& man, const std::string& path);
Manoeuvre load(const std::string& path);

} // namespace kfat
