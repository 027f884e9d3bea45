#include "kfat/evaluation.hpp"
#include "kfat/errors.hpp"
#include "kfat/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace kfat {

namespace {

constexpr double kRadToDeg = 57.29577951308232;

} // namespace

void CostWeights::validate() const
{
    if (!(w_beta >= 0.0 && w_yawrate >= 0.0 && w_ay >= 0.0)) {
        throw ConfigError("cost weights must be nonnegative");
    }
    if (w_beta == 0.0 && w_yawrate == 0.0 && w_ay == 0.0) {
        throw ConfigError("cost weights must not all be zero");
    }
}

double nrmse(const std::vector<double>& estimated, const std::vector<double>& reference)
{
    if (estimated.size() != reference.size() || reference.empty()) {
        throw DataError("nrmse: series lengths differ or are empty");
    }
    double sq_sum = 0.0;
    double ref_max = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double e = estimated[i] - reference[i];
        sq_sum += e * e;
        ref_max = std::max(ref_max, std::abs(reference[i]));
    }
    if (ref_max == 0.0) {
        throw DataError("nrmse: reference series is identically zero");
    }
    return std::sqrt(sq_sum / static_cast<double>(reference.size())) / ref_max;
}

ManoeuvreChannels channel_nrmse(const EstimateTrace& trace, const Manoeuvre& man)
{
    ManoeuvreChannels out;
    out.n_samples = man.samples.size();
    if (trace.diverged) {
        out.diverged = true;
        out.beta = out.yaw_rate = out.ay = kDivergenceNrmse;
        return out;
    }
    if (trace.size() != man.samples.size()) {
        throw DataError("channel_nrmse: trace and manoeuvre lengths differ");
    }
    const std::size_t n = man.samples.size();
    std::vector<double> est(n), ref(n);

    for (std::size_t i = 0; i < n; ++i) {
        est[i] = trace.beta[i];
        ref[i] = man.samples[i].true_beta;
    }
    out.beta = nrmse(est, ref);

    for (std::size_t i = 0; i < n; ++i) {
        est[i] = trace.state[i][2];
        ref[i] = man.samples[i].meas_yawrate;
    }
    out.yaw_rate = nrmse(est, ref);

    for (std::size_t i = 0; i < n; ++i) {
        est[i] = trace.meas_est[i][1];
        ref[i] = man.samples[i].meas_ay;
    }
    out.ay = nrmse(est, ref);
    return out;
}

double channel_error(const std::vector<double>& nrmses, const std::vector<std::size_t>& lengths)
{
    if (nrmses.size() != lengths.size() || nrmses.empty()) {
        throw DataError("channel_error: mismatched or empty inputs");
    }
    double weighted = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < nrmses.size(); ++i) {
        weighted += nrmses[i] * nrmses[i] * static_cast<double>(lengths[i]);
        total += static_cast<double>(lengths[i]);
    }
    return std::sqrt(weighted / total);
}

double cost(const Eigen::Vector3d& q, const std::vector<Manoeuvre>& set, const CostWeights& weights,
            const EvalContext& ctx)
{
    weights.validate();
    if (set.empty()) {
        throw DataError("cost: empty manoeuvre set");
    }

    NoiseConfig noise = ctx.noise;
    noise.process_noise_diag = q;
    noise.validate();

    std::vector<ManoeuvreChannels> results(set.size());
    parallel_for(set.size(), [&](std::size_t i) {
        const EstimateTrace trace = run_filter(set[i], noise, ctx.ukf, ctx.params);
        results[i] = channel_nrmse(trace, set[i]);
    });

    std::vector<double> beta(set.size()), yaw(set.size()), ay(set.size());
    std::vector<std::size_t> lengths(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        beta[i] = results[i].beta;
        yaw[i] = results[i].yaw_rate;
        ay[i] = results[i].ay;
        lengths[i] = results[i].n_samples;
    }
    return weights.w_beta * channel_error(beta, lengths) +
           weights.w_yawrate * channel_error(yaw, lengths) +
           weights.w_ay * channel_error(ay, lengths);
}

std::vector<double> true_lateral_accel(const Manoeuvre& man)
{
    const std::size_t n = man.samples.size();
    std::vector<double> ay(n);
    auto vy = [&](std::size_t i) { return man.samples[i].true_vy; };
    for (std::size_t i = 0; i < n; ++i) {
        double vy_dot;
        if (i == 0) {
            vy_dot = (vy(1) - vy(0)) / man.dt;
        } else if (i == n - 1) {
            vy_dot = (vy(n - 1) - vy(n - 2)) / man.dt;
        } else {
            vy_dot = (vy(i + 1) - vy(i - 1)) / (2.0 * man.dt);
        }
        ay[i] = vy_dot + man.samples[i].true_vx * man.samples[i].true_yawrate;
    }
    return ay;
}

ManoeuvreKpi kpi(const EstimateTrace& trace, const Manoeuvre& man)
{
    if (trace.diverged || trace.size() != man.samples.size()) {
        throw DataError("kpi: trace and manoeuvre are not aligned");
    }
    ManoeuvreKpi out;
    out.name = man.name;

    const std::vector<double> ay_true = true_lateral_accel(man);
    double sq_all = 0.0, max_all = 0.0;
    double sq_non = 0.0, max_non = 0.0;
    std::size_t n_non = 0;
    for (std::size_t i = 0; i < man.samples.size(); ++i) {
        const double err = (trace.beta[i] - man.samples[i].true_beta) * kRadToDeg;
        sq_all += err * err;
        max_all = std::max(max_all, std::abs(err));
        if (std::abs(ay_true[i]) >= kNonlinearAyThreshold) {
            sq_non += err * err;
            max_non = std::max(max_non, std::abs(err));
            ++n_non;
        }
    }
    out.rmse_deg = std::sqrt(sq_all / static_cast<double>(man.samples.size()));
    out.mae_deg = max_all;
    if (n_non > 0) {
        out.rmse_non_deg = std::sqrt(sq_non / static_cast<double>(n_non));
        out.mae_non_deg = max_non;
    }
    return out;
}

KpiReport kpi_report(const Eigen::Vector3d& q, const std::vector<Manoeuvre>& set,
                     const EvalContext& ctx)
{
    if (set.empty()) {
        throw DataError("kpi_report: empty manoeuvre set");
    }
    NoiseConfig noise = ctx.noise;
    noise.process_noise_diag = q;
    noise.validate();

    KpiReport report;
    report.per_manoeuvre.resize(set.size());
    parallel_for(set.size(), [&](std::size_t i) {
        const EstimateTrace trace = run_filter(set[i], noise, ctx.ukf, ctx.params);
        if (trace.diverged) {
            report.per_manoeuvre[i].name = set[i].name;
            report.per_manoeuvre[i].diverged = true;
        } else {
            report.per_manoeuvre[i] = kpi(trace, set[i]);
        }
    });

    double rmse = 0.0, mae = 0.0, rmse_non = 0.0, mae_non = 0.0;
    std::size_t n_valid = 0, n_non = 0;
    for (const auto& m : report.per_manoeuvre) {
        if (m.diverged) {
            continue;
        }
        rmse += m.rmse_deg;
        mae += m.mae_deg;
        ++n_valid;
        if (m.rmse_non_deg) {
            rmse_non += *m.rmse_non_deg;
            mae_non += *m.mae_non_deg;
            ++n_non;
        }
    }
    if (n_valid == 0) {
        throw NumericalError("kpi_report: every manoeuvre diverged");
    }
    report.rmse_deg = rmse / static_cast<double>(n_valid);
    report.mae_deg = mae / static_cast<double>(n_valid);
    if (n_non > 0) {
        report.rmse_non_deg = rmse_non / static_cast<double>(n_non);
        report.mae_non_deg = mae_non / static_cast<double>(n_non);
    }
    return report;
}

} // namespace kfat
