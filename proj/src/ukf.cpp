#include "kfat/ukf.hpp"
#include "kfat/errors.hpp"

#include <cmath>
#include <string>

namespace kfat {

void NoiseConfig::validate() const
{
    for (int i = 0; i < 3; ++i) {
        if (!(process_noise_diag[i] > 0.0) || !std::isfinite(process_noise_diag[i])) {
            throw ConfigError("process noise diagonal entry " + std::to_string(i) +
                              " must be strictly positive and finite");
        }
        if (!(observation_noise_diag[i] > 0.0) || !std::isfinite(observation_noise_diag[i])) {
            throw ConfigError("observation noise diagonal entry " + std::to_string(i) +
                              " must be strictly positive and finite");
        }
    }
}

UtWeights ut_weights(const UkfConfig& cfg)
{
    const double n = kStateDim;
    const double lambda = cfg.sigma_scaling * cfg.sigma_scaling * (n + cfg.kappa) - n;
    if (!(n + lambda > 0.0)) {
        throw ConfigError("sigma-point scaling gives non-positive n + lambda");
    }
    UtWeights w;
    w.gamma = std::sqrt(n + lambda);
    w.mean0 = lambda / (n + lambda);
    w.cov0 = w.mean0 + (1.0 - cfg.sigma_scaling * cfg.sigma_scaling + cfg.beta_prior);
    w.tail = 0.5 / (n + lambda);
    return w;
}

SigmaPoints sigma_points(const Eigen::Vector3d& mean, const Eigen::Matrix3d& cov,
                         const UkfConfig& cfg)
{
    SigmaPoints sp;
    sp.w = ut_weights(cfg);
    const Eigen::Matrix3d root = robust_llt(cov).matrixL();
    sp.points.col(0) = mean;
    for (int i = 0; i < kStateDim; ++i) {
        sp.points.col(1 + i) = mean + sp.w.gamma * root.col(i);
        sp.points.col(1 + kStateDim + i) = mean - sp.w.gamma * root.col(i);
    }
    return sp;
}

Belief ukf_step(const Belief& prior, const ControlInput& input, const Eigen::Vector3d& meas,
                const NoiseConfig& noise, const UkfConfig& cfg, const VehicleParams& params)
{
    auto process = [&](const Eigen::Vector3d& x) {
        const VehicleState next =
            dynamics_step({x[0], x[1], x[2]}, input, params, cfg.dt);
        return Eigen::Vector3d{next.vx, next.vy, next.yaw_rate};
    };
    auto measure = [&](const Eigen::Vector3d& x) {
        const Measurement m = measurement_model({x[0], x[1], x[2]}, input, params);
        return Eigen::Vector3d{m.vx, m.ay, m.yaw_rate};
    };
    return ukf_step_with(prior, process, measure, noise.process_noise_diag,
                         noise.observation_noise_diag, meas, cfg);
}

EstimateTrace run_filter(const Manoeuvre& man, const NoiseConfig& noise, const UkfConfig& cfg,
                         const VehicleParams& params)
{
    if (man.samples.empty()) {
        throw DataError("run_filter: empty manoeuvre '" + man.name + "'");
    }
    noise.validate();

    EstimateTrace trace;
    const std::size_t n = man.samples.size();
    trace.t.reserve(n);
    trace.state.reserve(n);
    trace.meas_est.reserve(n);
    trace.beta.reserve(n);
    trace.cov_diag.reserve(n);

    Belief belief;
    belief.mean = {man.samples[0].meas_vx, 0.0, man.samples[0].meas_yawrate};
    belief.cov = Eigen::Vector3d{1.0, 1.0, 0.1}.asDiagonal();

    auto record = [&](std::size_t k, const Belief& b) {
        const VehicleState st{b.mean[0], b.mean[1], b.mean[2]};
        const ControlInput in{man.samples[k].steer_angle, man.samples[k].long_accel};
        const Measurement m = measurement_model(st, in, params);
        trace.t.push_back(man.samples[k].t);
        trace.state.push_back(b.mean);
        trace.meas_est.push_back({m.vx, m.ay, m.yaw_rate});
        trace.beta.push_back(sideslip(st));
        trace.cov_diag.push_back(b.cov.diagonal());
    };

    try {
        record(0, belief);
        for (std::size_t k = 1; k < n; ++k) {
            const ControlInput input{man.samples[k - 1].steer_angle,
                                     man.samples[k - 1].long_accel};
            const Eigen::Vector3d meas{man.samples[k].meas_vx, man.samples[k].meas_ay,
                                       man.samples[k].meas_yawrate};
            belief = ukf_step(belief, input, meas, noise, cfg, params);
            if (!belief.mean.allFinite() || !(belief.cov.diagonal().minCoeff() > 0.0)) {
                trace.diverged = true;
                trace.diverged_at = k;
                return trace;
            }
            record(k, belief);
        }
    } catch (const NumericalError&) {
        trace.diverged = true;
        trace.diverged_at = trace.t.size();
    }
    return trace;
}

} // namespace kfat
