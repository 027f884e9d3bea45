#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace kfat {

struct KernelHyper {
    double signal_std = 1.0;        // sigma_f
    Eigen::VectorXd length_scales;  // one per dimension
    void validate() const;
};

// ARD Matern 5/2 over per-dimension scaled distance.
template <typename DerivedA, typename DerivedB>
double kernel(const Eigen::MatrixBase<DerivedA>& q, const Eigen::MatrixBase<DerivedB>& q2,
              const KernelHyper& hyper)
{
    double r2 = 0.0;
    for (int i = 0; i < q.size(); ++i) {
        const double d = (q(i) - q2(i)) / hyper.length_scales(i);
        r2 += d * d;
    }
    const double r = std::sqrt(r2);
    const double sqrt5_r = 2.23606797749978969 * r;
    return hyper.signal_std * hyper.signal_std * (1.0 + sqrt5_r + 5.0 * r2 / 3.0) *
           std::exp(-sqrt5_r);
}

enum class SurrogateKind { tsp, gp };

struct ObservationSet {
    Eigen::MatrixXd points; // one normalized point per row
    Eigen::VectorXd values;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }

    void add(const Eigen::VectorXd& point, double value);
    bool contains(const Eigen::VectorXd& point, double tol = 1e-12) const;
};

struct SurrogateModel {
    SurrogateKind kind = SurrogateKind::tsp;
    KernelHyper hyper;
    double dof = 15.0;        // ignored by the GP branch
    double noise_floor = 1e-6;
    ObservationSet obs;
    double center = 0.0;      // observation mean, the constant mean function value

    // Cached factorization of K + noise_floor*I and derived quantities.
    Eigen::LLT<Eigen::MatrixXd> gram_factor;
    Eigen::VectorXd alpha;    // K^-1 (y - center)
    double quad_form = 0.0;   // (y - center)^T K^-1 (y - center)
};

// Negative log marginal likelihood of the centered observations under the
// chosen process with the given hyperparameters.
double nlml(const ObservationSet& obs, const KernelHyper& hyper, SurrogateKind kind, double dof);

// Multi-start local minimization of the NLML in log-parameter space. The seed
// drives the randomized starts; identical inputs give identical models.
SurrogateModel fit(const ObservationSet& obs, SurrogateKind kind, double dof,
                   std::uint64_t seed);

// Assembles a queryable model from externally chosen hyperparameters, skipping
// the NLML training. fit() finishes through here.
SurrogateModel build_model(const ObservationSet& obs, SurrogateKind kind, double dof,
                           const KernelHyper& hyper);

struct Posterior {
    double mean = 0.0;
    double variance = 0.0;
};

Posterior posterior(const SurrogateModel& model, const Eigen::VectorXd& q);

} // namespace kfat
