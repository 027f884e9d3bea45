#pragma once

#include "kfat/acquisition.hpp"
#include "kfat/errors.hpp"
#include "kfat/evaluation.hpp"
#include "kfat/surrogate.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kfat {

enum class AxisScale { linear, log10 };

struct BoxSpace {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    std::vector<AxisScale> scales;

    int dim() const { return static_cast<int>(lower.size()); }
    void validate() const;

    // The default tuning box: ten decades per process-noise component,
    // searched in log space.
    static BoxSpace default_q_space();
};

Eigen::VectorXd normalize(const Eigen::VectorXd& q, const BoxSpace& space);
Eigen::VectorXd denormalize(const Eigen::VectorXd& u, const BoxSpace& space);

struct HyperRect {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
    double volume() const;
    bool contains(const Eigen::VectorXd& u, double tol = 1e-12) const;
};

std::vector<HyperRect> subdivide(const HyperRect& rect, int parts);

// Convergence counter: one more consecutive small move of the incumbent, or
// a reset when it jumped.
inline int update_counter(int n, double move_norm, double threshold)
{
    return move_norm < threshold ? n + 1 : 0;
}

// Per-dimension interval of relative width alpha around the incumbent,
// clipped to the outer box.
BoxSpace shrink_space(const Eigen::VectorXd& q_star_physical, double alpha,
                      const BoxSpace& outer);

struct TsboConfig {
    int max_fe = 15;           // consecutive small moves ending stage 1
    int max_pe = 40;           // stage-2 evaluation budget
    int max_sm = 38;           // stage-2 refit budget
    int max_af = 12;           // alternating picks before committing to one AF
    double tr_fe_factor = 0.01; // threshold factor on the incumbent's norm
    double beta = 0.01;        // CBM exploration weight
    double alpha = 0.15;       // shrink width
    double dof = 15.0;         // surrogate degrees of freedom
    CostWeights weights;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EvalRecord {
    int iter = 0;  // 1-based across the whole run
    int stage = 0; // 1 or 2
    std::string af;
    Eigen::VectorXd q; // physical units
    double j = 0.0;
    double best_j = 0.0;
};

struct TuningResult {
    std::string method;
    Eigen::VectorXd best_q; // physical units
    double best_j = 0.0;
    std::vector<EvalRecord> trace;
    int evals_stage1 = 0;
    int evals_stage2 = 0;
    int surrogate_refits = 0;
    double wall_time_s = 0.0;
    // Final surrogate state, kept for post-hoc inspection. Empty for the GA.
    std::optional<SurrogateModel> surrogate;
};

class OptimizationAborted : public NumericalError {
public:
    OptimizationAborted(const std::string& what, TuningResult partial)
        : NumericalError(what), partial_result(std::move(partial))
    {
    }
    TuningResult partial_result;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

// Intermediate state shared by the two stages.
struct StageState {
    Eigen::VectorXd best_q_norm;
    double best_j = 0.0;
    SurrogateModel model;
    std::vector<HyperRect> rects;
    std::vector<EvalRecord> trace;
    std::vector<AfRecord> af_history;
    int refits = 0;
};

StageState fast_exploration(const Objective& objective, const BoxSpace& space,
                            const TsboConfig& cfg, SurrogateKind kind);

void pure_exploitation(const Objective& objective, const BoxSpace& outer,
                       const BoxSpace& shrunk, const TsboConfig& cfg, SurrogateKind kind,
                       StageState& state);

TuningResult tune(const Objective& objective, const BoxSpace& space, const TsboConfig& cfg,
                  SurrogateKind kind);

} // namespace kfat
