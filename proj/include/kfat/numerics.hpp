#ifndef KFAT_NUMERICS_HPP
#define KFAT_NUMERICS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

namespace kfat {

// Cholesky factorization with a repair path: the input is symmetrized and, if
// the plain factorization fails, a diagonal jitter of 1e-9 * max(diag) is
// added and escalated by factors of 10 up to 1e-3 * max(diag).
// Throws NumericalError once the escalation is exhausted.
Eigen::LLT<Eigen::MatrixXd> robust_llt(Eigen::MatrixXd a);

// Runs fn(i) for i in [0, n). Thread count is min(n, hardware threads),
// capped by the KFAT_THREADS environment variable when set. Results must be
// written to per-index slots; the helper gives no ordering guarantees.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// SplitMix64 step, used to derive independent sub-seeds from a base seed.
std::uint64_t splitmix64(std::uint64_t& state);

struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0.0;
};

// Plain Nelder-Mead simplex minimization, initial simplex spanned by
// x0 + step*e_i. Deterministic; non-finite objective values are treated as
// very bad vertices rather than errors.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& x0, double step, int max_iters);

} // namespace kfat

#endif
