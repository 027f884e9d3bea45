#include "kfat/surrogate.hpp"
#include "kfat/errors.hpp"
#include "kfat/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace kfat {

void KernelHyper::validate() const
{
    if (!(signal_std > 0.0) || !std::isfinite(signal_std)) {
        throw ConfigError("kernel signal_std must be strictly positive");
    }
    for (int i = 0; i < length_scales.size(); ++i) {
        if (!(length_scales(i) > 0.0) || !std::isfinite(length_scales(i))) {
            throw ConfigError("kernel length scale must be strictly positive");
        }
    }
}

void ObservationSet::add(const Eigen::VectorXd& point, double value)
{
    if (!point.allFinite() || !std::isfinite(value)) {
        throw DataError("observation must be finite");
    }
    if (point.minCoeff() < -1e-12 || point.maxCoeff() > 1.0 + 1e-12) {
        throw DataError("observation point lies outside the unit cube");
    }
    if (points.rows() > 0 && points.cols() != point.size()) {
        throw DataError("observation dimension mismatch");
    }
    if (contains(point)) {
        throw DataError("duplicate observation point");
    }
    const Eigen::Index n = points.rows();
    points.conservativeResize(n + 1, point.size());
    points.row(n) = point.transpose();
    values.conservativeResize(n + 1);
    values(n) = value;
}

bool ObservationSet::contains(const Eigen::VectorXd& point, double tol) const
{
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        if ((points.row(i).transpose() - point).cwiseAbs().maxCoeff() <= tol) {
            return true;
        }
    }
    return false;
}

namespace {

constexpr double kNoiseFloorRatio = 1e-6; // times sigma_f^2
constexpr double kHyperBound = 1e3;       // hyperparameters clamped to [1/bound, bound]
constexpr double kSqrt5 = 2.23606797749978969;

// Per-dimension squared coordinate differences, computed once per fit so each
// NLML evaluation only rescales them.
struct NlmlWorkspace {
    std::vector<Eigen::MatrixXd> sq_diffs;
    Eigen::VectorXd y_centered;
    int dim = 0;

    explicit NlmlWorkspace(const ObservationSet& obs)
    {
        const auto n = static_cast<Eigen::Index>(obs.size());
        dim = obs.dim();
        sq_diffs.reserve(static_cast<std::size_t>(dim));
        for (int d = 0; d < dim; ++d) {
            Eigen::MatrixXd m(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j <= i; ++j) {
                    const double diff = obs.points(i, d) - obs.points(j, d);
                    m(i, j) = m(j, i) = diff * diff;
                }
            }
            sq_diffs.push_back(std::move(m));
        }
        y_centered = obs.values.array() - obs.values.mean();
    }
};

Eigen::MatrixXd build_gram(const NlmlWorkspace& ws, const KernelHyper& hyper)
{
    const Eigen::Index n = ws.y_centered.size();
    Eigen::MatrixXd r2 = Eigen::MatrixXd::Zero(n, n);
    for (int d = 0; d < ws.dim; ++d) {
        r2 += ws.sq_diffs[static_cast<std::size_t>(d)] /
              (hyper.length_scales(d) * hyper.length_scales(d));
    }
    const double sf2 = hyper.signal_std * hyper.signal_std;
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double r = std::sqrt(r2(i, j));
            k(i, j) = k(j, i) = sf2 * (1.0 + kSqrt5 * r + 5.0 * r2(i, j) / 3.0) *
                                std::exp(-kSqrt5 * r);
        }
        k(i, i) += kNoiseFloorRatio * sf2;
    }
    return k;
}

double nlml_from_workspace(const NlmlWorkspace& ws, const KernelHyper& hyper, SurrogateKind kind,
                           double dof)
{
    const Eigen::MatrixXd k = build_gram(ws, hyper);
    const Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) {
        return std::numeric_limits<double>::infinity();
    }
    const auto n = static_cast<double>(ws.y_centered.size());
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < ws.y_centered.size(); ++i) {
        log_det += std::log(llt.matrixLLT()(i, i));
    }
    log_det *= 2.0;
    const double quad = ws.y_centered.dot(llt.solve(ws.y_centered));

    constexpr double kPi = 3.141592653589793238462643383279502884;
    if (kind == SurrogateKind::gp) {
        return 0.5 * quad + 0.5 * log_det + 0.5 * n * std::log(2.0 * kPi);
    }
    return -std::lgamma(0.5 * (dof + n)) + std::lgamma(0.5 * dof) +
           0.5 * n * std::log((dof - 2.0) * kPi) + 0.5 * log_det +
           0.5 * (dof + n) * std::log1p(quad / (dof - 2.0));
}

KernelHyper hyper_from_log(const Eigen::VectorXd& theta, int dim)
{
    KernelHyper hyper;
    hyper.signal_std = std::exp(theta(0));
    hyper.length_scales.resize(dim);
    for (int d = 0; d < dim; ++d) {
        hyper.length_scales(d) = std::exp(theta(d + 1));
    }
    return hyper;
}

} // namespace

double nlml(const ObservationSet& obs, const KernelHyper& hyper, SurrogateKind kind, double dof)
{
    if (obs.size() == 0) {
        throw DataError("nlml: empty observation set");
    }
    hyper.validate();
    if (kind == SurrogateKind::tsp && !(dof > 2.0)) {
        throw ConfigError("t-process degrees of freedom must exceed 2");
    }
    const NlmlWorkspace ws(obs);
    return nlml_from_workspace(ws, hyper, kind, dof);
}

SurrogateModel build_model(const ObservationSet& obs, SurrogateKind kind, double dof,
                           const KernelHyper& hyper)
{
    if (obs.size() == 0) {
        throw DataError("build_model: empty observation set");
    }
    if (kind == SurrogateKind::tsp && !(dof > 2.0)) {
        throw ConfigError("t-process degrees of freedom must exceed 2");
    }
    hyper.validate();
    if (hyper.length_scales.size() != obs.dim()) {
        throw ConfigError("build_model: one length scale per dimension required");
    }

    SurrogateModel model;
    model.kind = kind;
    model.dof = dof;
    model.obs = obs;
    model.hyper = hyper;
    model.center = obs.values.mean();
    model.noise_floor = kNoiseFloorRatio * hyper.signal_std * hyper.signal_std;

    const NlmlWorkspace ws(obs);
    model.gram_factor = robust_llt(build_gram(ws, model.hyper));
    model.alpha = model.gram_factor.solve(ws.y_centered);
    model.quad_form = ws.y_centered.dot(model.alpha);
    return model;
}

SurrogateModel fit(const ObservationSet& obs, SurrogateKind kind, double dof, std::uint64_t seed)
{
    if (obs.size() == 0) {
        throw DataError("fit: empty observation set");
    }
    if (kind == SurrogateKind::tsp && !(dof > 2.0)) {
        throw ConfigError("t-process degrees of freedom must exceed 2");
    }
    const int dim = obs.dim();

    KernelHyper trained;
    if (obs.size() == 1) {
        trained.signal_std = 1.0;
        trained.length_scales = Eigen::VectorXd::Constant(dim, 0.5);
    } else {
        const NlmlWorkspace ws(obs);
        const double y_std =
            std::max(std::sqrt(ws.y_centered.squaredNorm() / static_cast<double>(obs.size())),
                     1e-2);
        const double log_bound = std::log(kHyperBound);

        auto objective = [&](const Eigen::VectorXd& theta) {
            double penalty = 0.0;
            for (int i = 0; i < theta.size(); ++i) {
                if (std::abs(theta(i)) > 20.0) {
                    return 1e300;
                }
                const double excess = std::abs(theta(i)) - log_bound;
                if (excess > 0.0) {
                    penalty += 1e8 * excess * excess;
                }
            }
            return nlml_from_workspace(ws, hyper_from_log(theta, dim), kind, dof) + penalty;
        };

        std::uint64_t seed_state = seed ^ 0xa0761d6478bd642fULL;
        std::mt19937_64 rng(splitmix64(seed_state));
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        Eigen::VectorXd best_theta;
        double best_value = std::numeric_limits<double>::infinity();
        constexpr int kStarts = 5;
        for (int s = 0; s < kStarts; ++s) {
            Eigen::VectorXd theta(dim + 1);
            if (s == 0) {
                theta(0) = std::log(y_std);
                theta.tail(dim).setConstant(std::log(0.5));
            } else {
                theta(0) = std::log(y_std) + (unit(rng) * 2.0 - 1.0) * std::log(3.0);
                for (int d = 0; d < dim; ++d) {
                    theta(d + 1) =
                        std::log(0.05) + unit(rng) * (std::log(2.0) - std::log(0.05));
                }
            }
            const NelderMeadResult res = nelder_mead(objective, theta, 0.7, 200);
            if (res.value < best_value) {
                best_value = res.value;
                best_theta = res.x;
            }
        }
        if (!std::isfinite(best_value)) {
            throw NumericalError("surrogate fit: NLML non-finite at every start");
        }
        trained = hyper_from_log(best_theta, dim);
        trained.signal_std = std::clamp(trained.signal_std, 1.0 / kHyperBound, kHyperBound);
        for (int d = 0; d < dim; ++d) {
            trained.length_scales(d) =
                std::clamp(trained.length_scales(d), 1.0 / kHyperBound, kHyperBound);
        }
    }

    return build_model(obs, kind, dof, trained);
}

Posterior posterior(const SurrogateModel& model, const Eigen::VectorXd& q)
{
    const auto n = static_cast<Eigen::Index>(model.obs.size());
    if (n == 0) {
        throw DataError("posterior: model has no observations");
    }
    Eigen::VectorXd k_vec(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k_vec(i) = kernel(q, model.obs.points.row(i).transpose(), model.hyper);
    }

    Posterior post;
    post.mean = model.center + k_vec.dot(model.alpha);

    const double sf2 = model.hyper.signal_std * model.hyper.signal_std;
    double variance = sf2 - k_vec.dot(model.gram_factor.solve(k_vec));
    variance = std::max(variance, 0.0);
    if (model.kind == SurrogateKind::tsp) {
        variance *= (model.dof + model.quad_form - 2.0) /
                    (model.dof + static_cast<double>(n) - 2.0);
    }
    post.variance = variance;
    return post;
}

} // namespace kfat
