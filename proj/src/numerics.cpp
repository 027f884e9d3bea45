#include "kfat/numerics.hpp"
#include "kfat/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <vector>

namespace kfat {

Eigen::LLT<Eigen::MatrixXd> robust_llt(Eigen::MatrixXd a)
{
    a = 0.5 * (a + a.transpose()).eval();
    const double scale = a.diagonal().maxCoeff();

    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
        return llt;
    }
    for (double jitter = 1e-9; jitter <= 1e-3; jitter *= 10.0) {
        Eigen::MatrixXd repaired = a;
        repaired.diagonal().array() += jitter * scale;
        llt.compute(repaired);
        if (llt.info() == Eigen::Success) {
            return llt;
        }
    }
    throw NumericalError("robust_llt: matrix not positive definite after jitter escalation");
}

namespace {

int thread_budget(std::size_t n)
{
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) {
        hw = 1;
    }
    std::size_t budget = std::min<std::size_t>(n, hw);
    if (const char* env = std::getenv("KFAT_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) {
            budget = std::min<std::size_t>(budget, static_cast<std::size_t>(cap));
        }
    }
    return static_cast<int>(std::max<std::size_t>(budget, 1));
}

} // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn)
{
    if (n == 0) {
        return;
    }
    const int threads = thread_budget(n);
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = static_cast<std::size_t>(t); i < n; i += static_cast<std::size_t>(threads)) {
                fn(i);
            }
        });
    }
    for (auto& worker : pool) {
        worker.join();
    }
}

std::uint64_t splitmix64(std::uint64_t& state)
{
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& x0, double step, int max_iters)
{
    const auto dim = static_cast<int>(x0.size());
    auto safe_eval = [&](const Eigen::VectorXd& x) {
        const double v = objective(x);
        return std::isfinite(v) ? v : 1e300;
    };

    std::vector<Eigen::VectorXd> verts(static_cast<std::size_t>(dim) + 1, x0);
    std::vector<double> vals(verts.size());
    for (int i = 0; i < dim; ++i) {
        verts[static_cast<std::size_t>(i) + 1](i) += step;
    }
    for (std::size_t i = 0; i < verts.size(); ++i) {
        vals[i] = safe_eval(verts[i]);
    }

    std::vector<std::size_t> order(verts.size());
    for (int iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second_worst = order[order.size() - 2];
        if (vals[worst] - vals[best] < 1e-10 * (1.0 + std::abs(vals[best]))) {
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (std::size_t i : order) {
            if (i != worst) {
                centroid += verts[i];
            }
        }
        centroid /= static_cast<double>(dim);

        const Eigen::VectorXd reflected = centroid + (centroid - verts[worst]);
        const double f_ref = safe_eval(reflected);
        if (f_ref < vals[best]) {
            const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - verts[worst]);
            const double f_exp = safe_eval(expanded);
            if (f_exp < f_ref) {
                verts[worst] = expanded;
                vals[worst] = f_exp;
            } else {
                verts[worst] = reflected;
                vals[worst] = f_ref;
            }
        } else if (f_ref < vals[second_worst]) {
            verts[worst] = reflected;
            vals[worst] = f_ref;
        } else {
            const Eigen::VectorXd contracted = centroid + 0.5 * (verts[worst] - centroid);
            const double f_con = safe_eval(contracted);
            if (f_con < vals[worst]) {
                verts[worst] = contracted;
                vals[worst] = f_con;
            } else {
                for (std::size_t i : order) {
                    if (i != best) {
                        verts[i] = verts[best] + 0.5 * (verts[i] - verts[best]);
                        vals[i] = safe_eval(verts[i]);
                    }
                }
            }
        }
    }

    NelderMeadResult result;
    std::size_t best = 0;
    for (std::size_t i = 1; i < vals.size(); ++i) {
        if (vals[i] < vals[best]) {
            best = i;
        }
    }
    result.x = verts[best];
    result.value = vals[best];
    return result;
}

} // namespace kfat
