#pragma once

#include "kfat/manoeuvre.hpp"
#include "kfat/numerics.hpp"
#include "kfat/vehicle.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <vector>

namespace kfat {

constexpr int kStateDim = 3;

struct NoiseConfig {
    Eigen::Vector3d process_noise_diag = Eigen::Vector3d::Constant(1e-4);
    Eigen::Vector3d observation_noise_diag{1e-2, 2.25e-2, 2.5e-5};
    void validate() const;
};

struct UkfConfig {
    double sigma_scaling = 1e-3; // Merwe alpha
    double beta_prior = 2.0;
    double kappa = 0.0;
    double dt = 0.01;
};

struct UtWeights {
    double mean0 = 0.0;
    double cov0 = 0.0;
    double tail = 0.0;
    double gamma = 0.0; // sigma-point spread, sqrt(n + lambda)
};

UtWeights ut_weights(const UkfConfig& cfg);

using SigmaMatrix = Eigen::Matrix<double, kStateDim, 2 * kStateDim + 1>;

struct SigmaPoints {
    SigmaMatrix points;
    UtWeights w;
};

SigmaPoints sigma_points(const Eigen::Vector3d& mean, const Eigen::Matrix3d& cov,
                         const UkfConfig& cfg);

struct Belief {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Matrix3d cov = Eigen::Matrix3d::Identity();
};

template <typename Derived>
Eigen::Vector3d ut_mean(const Eigen::MatrixBase<Derived>& pts, const UtWeights& w)
{
    // The centre weight is O(1/alpha_s^2) and negative while the tails cancel
    // it back to 1, so a plain weighted sum loses about six digits. Neumaier
    // summation over exact fma product splits keeps the transform accurate to
    // working precision, which the affine-exactness guarantee relies on.
    Eigen::Vector3d m;
    for (int r = 0; r < kStateDim; ++r) {
        double sum = 0.0;
        double comp = 0.0;
        auto accumulate = [&](double term) {
            const double t = sum + term;
            comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
            sum = t;
        };
        auto add_product = [&](double weight, double value) {
            const double p = weight * value;
            accumulate(p);
            accumulate(std::fma(weight, value, -p));
        };
        add_product(w.mean0, pts(r, 0));
        for (int i = 1; i < pts.cols(); ++i) {
            add_product(w.tail, pts(r, i));
        }
        m[r] = sum + comp;
    }
    return m;
}

template <typename DerivedA, typename DerivedB>
Eigen::Matrix3d ut_cross_cov(const Eigen::MatrixBase<DerivedA>& a, const Eigen::Vector3d& mean_a,
                             const Eigen::MatrixBase<DerivedB>& b, const Eigen::Vector3d& mean_b,
                             const UtWeights& w)
{
    Eigen::Matrix3d cov =
        w.cov0 * (a.col(0) - mean_a) * (b.col(0) - mean_b).transpose();
    for (int i = 1; i < a.cols(); ++i) {
        cov += w.tail * (a.col(i) - mean_a) * (b.col(i) - mean_b).transpose();
    }
    return cov;
}

// One predict-update cycle over arbitrary transition and measurement maps,
// both Vector3d -> Vector3d, with additive diagonal noise. Sigma points are
// redrawn around the predicted belief so the process noise shapes the update.
template <typename ProcessFn, typename MeasureFn>
Belief ukf_step_with(const Belief& prior, ProcessFn&& process, MeasureFn&& measure,
                     const Eigen::Vector3d& q_diag, const Eigen::Vector3d& r_diag,
                     const Eigen::Vector3d& meas, const UkfConfig& cfg)
{
    const SigmaPoints chi = sigma_points(prior.mean, prior.cov, cfg);
    SigmaMatrix propagated;
    for (int i = 0; i < propagated.cols(); ++i) {
        propagated.col(i) = process(Eigen::Vector3d(chi.points.col(i)));
    }

    Belief predicted;
    predicted.mean = ut_mean(propagated, chi.w);
    predicted.cov =
        ut_cross_cov(propagated, predicted.mean, propagated, predicted.mean, chi.w);
    predicted.cov.diagonal() += q_diag;

    const SigmaPoints chi2 = sigma_points(predicted.mean, predicted.cov, cfg);
    SigmaMatrix observed;
    for (int i = 0; i < observed.cols(); ++i) {
        observed.col(i) = measure(Eigen::Vector3d(chi2.points.col(i)));
    }

    const Eigen::Vector3d meas_mean = ut_mean(observed, chi2.w);
    Eigen::Matrix3d innov_cov = ut_cross_cov(observed, meas_mean, observed, meas_mean, chi2.w);
    innov_cov.diagonal() += r_diag;
    const Eigen::Matrix3d cross_cov =
        ut_cross_cov(chi2.points, predicted.mean, observed, meas_mean, chi2.w);

    const Eigen::Matrix3d gain =
        robust_llt(innov_cov).solve(cross_cov.transpose()).transpose();

    Belief posterior;
    posterior.mean = predicted.mean + gain * (meas - meas_mean);
    posterior.cov = predicted.cov - gain * innov_cov * gain.transpose();
    posterior.cov = (0.5 * (posterior.cov + posterior.cov.transpose())).eval();
    return posterior;
}

Belief ukf_step(const Belief& prior, const ControlInput& input, const Eigen::Vector3d& meas,
                const NoiseConfig& noise, const UkfConfig& cfg, const VehicleParams& params);

struct EstimateTrace {
    std::vector<double> t;
    std::vector<Eigen::Vector3d> state;    // vx, vy, yaw_rate
    std::vector<Eigen::Vector3d> meas_est; // vx, ay, yaw_rate at the posterior mean
    std::vector<double> beta;
    std::vector<Eigen::Vector3d> cov_diag;
    bool diverged = false;
    std::size_t diverged_at = 0;

    std::size_t size() const { return t.size(); }
};

EstimateTrace run_filter(const Manoeuvre& man, const NoiseConfig& noise, const UkfConfig& cfg,
                         const VehicleParams& params);

} // namespace kfat
