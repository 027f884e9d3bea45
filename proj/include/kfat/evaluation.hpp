#pragma once

#include "kfat/manoeuvre.hpp"
#include "kfat/ukf.hpp"
#include "kfat/vehicle.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace kfat {

struct CostWeights {
    double w_beta = 5.0;
    double w_yawrate = 1.0;
    double w_ay = 1.0;
    void validate() const;
};

// Root-mean-square error normalized by the reference's maximum magnitude.
double nrmse(const std::vector<double>& estimated, const std::vector<double>& reference);

// A diverged filter run contributes this in every channel, far above any
// value a surviving run produces, so the cost stays finite and total.
constexpr double kDivergenceNrmse = 10.0;

struct ManoeuvreChannels {
    double beta = 0.0;
    double yaw_rate = 0.0;
    double ay = 0.0;
    std::size_t n_samples = 0;
    bool diverged = false;
};

// Per-channel NRMSE of one filtered manoeuvre. Sideslip is scored against
// the simulator truth, yaw rate and lateral acceleration against the noisy
// measurements.
ManoeuvreChannels channel_nrmse(const EstimateTrace& trace, const Manoeuvre& man);

// Length-weighted RMS aggregation of per-manoeuvre NRMSEs.
double channel_error(const std::vector<double>& nrmses, const std::vector<std::size_t>& lengths);

struct EvalContext {
    NoiseConfig noise;   // process_noise_diag is overwritten by the candidate q
    UkfConfig ukf;
    VehicleParams params;
};

double cost(const Eigen::Vector3d& q, const std::vector<Manoeuvre>& set, const CostWeights& weights,
            const EvalContext& ctx);

struct ManoeuvreKpi {
    std::string name;
    double rmse_deg = 0.0;
    double mae_deg = 0.0; // maximum absolute error
    std::optional<double> rmse_non_deg;
    std::optional<double> mae_non_deg;
    bool diverged = false;
};

// Threshold separating the nonlinear handling regime for the *_non variants.
constexpr double kNonlinearAyThreshold = 4.0; // m/s^2

// Kinematic lateral acceleration of the stored truth, vy-dot + vx*yawrate,
// with vy-dot taken by central differences.
std::vector<double> true_lateral_accel(const Manoeuvre& man);

ManoeuvreKpi kpi(const EstimateTrace& trace, const Manoeuvre& man);

struct KpiReport {
    double rmse_deg = 0.0;
    double mae_deg = 0.0;
    std::optional<double> rmse_non_deg;
    std::optional<double> mae_non_deg;
    std::vector<ManoeuvreKpi> per_manoeuvre;
};

KpiReport kpi_report(const Eigen::Vector3d& q, const std::vector<Manoeuvre>& set,
                     const EvalContext& ctx);

} // namespace kfat
