#include "kfat/tsbo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace kfat {

void BoxSpace::validate() const
{
    if (lower.size() == 0 || lower.size() != upper.size() ||
        scales.size() != static_cast<std::size_t>(lower.size())) {
        throw ConfigError("search box: inconsistent dimensions");
    }
    for (int i = 0; i < dim(); ++i) {
        if (!(lower(i) < upper(i))) {
            throw ConfigError("search box: lower bound must be below upper bound");
        }
        if (scales[static_cast<std::size_t>(i)] == AxisScale::log10 && !(lower(i) > 0.0)) {
            throw ConfigError("search box: log-scaled dimension needs positive lower bound");
        }
    }
}

BoxSpace BoxSpace::default_q_space()
{
    BoxSpace space;
    space.lower = Eigen::VectorXd::Constant(3, 1e-10);
    space.upper = Eigen::VectorXd::Constant(3, 1.0);
    space.scales.assign(3, AxisScale::log10);
    return space;
}

Eigen::VectorXd normalize(const Eigen::VectorXd& q, const BoxSpace& space)
{
    space.validate();
    if (q.size() != space.lower.size()) {
        throw ConfigError("normalize: dimension mismatch");
    }
    Eigen::VectorXd u(q.size());
    for (int i = 0; i < space.dim(); ++i) {
        const double lo = space.lower(i);
        const double hi = space.upper(i);
        if (q(i) < lo - 1e-12 * std::abs(lo) - 1e-300 ||
            q(i) > hi + 1e-12 * std::abs(hi)) {
            throw ConfigError("normalize: point outside the search box");
        }
        if (space.scales[static_cast<std::size_t>(i)] == AxisScale::log10) {
            u(i) = (std::log10(q(i)) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
        } else {
            u(i) = (q(i) - lo) / (hi - lo);
        }
        u(i) = std::clamp(u(i), 0.0, 1.0);
    }
    return u;
}

Eigen::VectorXd denormalize(const Eigen::VectorXd& u, const BoxSpace& space)
{
    space.validate();
    if (u.size() != space.lower.size()) {
        throw ConfigError("denormalize: dimension mismatch");
    }
    Eigen::VectorXd q(u.size());
    for (int i = 0; i < space.dim(); ++i) {
        const double f = u(i);
        if (f < -1e-12 || f > 1.0 + 1e-12) {
            throw ConfigError("denormalize: point outside the unit cube");
        }
        const double lo = space.lower(i);
        const double hi = space.upper(i);
        if (space.scales[static_cast<std::size_t>(i)] == AxisScale::log10) {
            const double llo = std::log10(lo);
            const double lhi = std::log10(hi);
            q(i) = std::pow(10.0, llo + f * (lhi - llo));
        } else {
            q(i) = lo + f * (hi - lo);
        }
        q(i) = std::clamp(q(i), lo, hi);
    }
    return q;
}

double HyperRect::volume() const
{
    double v = 1.0;
    for (int i = 0; i < lower.size(); ++i) {
        v *= upper(i) - lower(i);
    }
    return v;
}

bool HyperRect::contains(const Eigen::VectorXd& u, double tol) const
{
    for (int i = 0; i < lower.size(); ++i) {
        if (u(i) < lower(i) - tol || u(i) > upper(i) + tol) {
            return false;
        }
    }
    return true;
}

std::vector<HyperRect> subdivide(const HyperRect& rect, int parts)
{
    if (parts != 2 && parts != 3) {
        throw ConfigError("subdivide: parts must be 2 or 3");
    }
    const auto d = static_cast<int>(rect.lower.size());
    int count = 1;
    for (int i = 0; i < d; ++i) {
        count *= parts;
    }
    std::vector<HyperRect> children;
    children.reserve(static_cast<std::size_t>(count));
    for (int c = 0; c < count; ++c) {
        HyperRect child;
        child.lower.resize(d);
        child.upper.resize(d);
        int rest = c;
        for (int i = 0; i < d; ++i) {
            const int digit = rest % parts;
            rest /= parts;
            const double width = (rect.upper(i) - rect.lower(i)) / parts;
            child.lower(i) = rect.lower(i) + digit * width;
            child.upper(i) = digit == parts - 1 ? rect.upper(i) : rect.lower(i) + (digit + 1) * width;
        }
        children.push_back(std::move(child));
    }
    return children;
}

BoxSpace shrink_space(const Eigen::VectorXd& q_star_physical, double alpha,
                      const BoxSpace& outer)
{
    outer.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("shrink_space: alpha must lie in (0, 1)");
    }
    BoxSpace shrunk = outer;
    for (int i = 0; i < outer.dim(); ++i) {
        const double a = (1.0 - alpha) * q_star_physical(i);
        const double b = (1.0 + alpha) * q_star_physical(i);
        double lo = std::max(std::min(a, b), outer.lower(i));
        double hi = std::min(std::max(a, b), outer.upper(i));
        if (!(lo < hi)) {
            throw NumericalError("shrink_space: degenerate interval on dimension " +
                                 std::to_string(i));
        }
        shrunk.lower(i) = lo;
        shrunk.upper(i) = hi;
    }
    return shrunk;
}

void TsboConfig::validate() const
{
    if (max_fe < 1 || max_pe < 1 || max_af < 1) {
        throw ConfigError("tsbo: stage budgets must be at least 1");
    }
    if (max_sm > max_pe) {
        throw ConfigError("tsbo: refit budget must not exceed the evaluation budget");
    }
    if (!(tr_fe_factor > 0.0)) {
        throw ConfigError("tsbo: convergence threshold factor must be positive");
    }
    if (!(beta >= 0.0)) {
        throw ConfigError("tsbo: beta must be nonnegative");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("tsbo: shrink alpha must lie in (0, 1)");
    }
    if (!(dof > 2.0)) {
        throw ConfigError("tsbo: degrees of freedom must exceed 2");
    }
    weights.validate();
}

namespace {

// The Gaussian branch scores candidates through the same t formulas in the
// large-dof limit.
constexpr double kGaussianDof = 1e6;

std::uint64_t fit_seed(const TsboConfig& cfg, int refit_index)
{
    return cfg.seed * 1000003ULL + static_cast<std::uint64_t>(refit_index);
}

struct LoopContext {
    const Objective& objective;
    const BoxSpace& outer;
    const TsboConfig& cfg;
    SurrogateKind kind;
    ObservationSet& obs;
    StageState& state;
    int stage = 1;
};

double evaluate_at(LoopContext& ctx, const Eigen::VectorXd& u, const std::string& af_label)
{
    const Eigen::VectorXd q = denormalize(u, ctx.outer);
    double j;
    try {
        j = ctx.objective(q);
    } catch (const Error& e) {
        TuningResult partial;
        partial.trace = ctx.state.trace;
        throw OptimizationAborted(std::string("objective failed after ") +
                                      std::to_string(ctx.state.trace.size()) +
                                      " evaluations: " + e.what(),
                                  std::move(partial));
    }
    ctx.obs.add(u, j);

    EvalRecord rec;
    rec.iter = static_cast<int>(ctx.state.trace.size()) + 1;
    rec.stage = ctx.stage;
    rec.af = af_label;
    rec.q = q;
    rec.j = j;
    rec.best_j = std::min(j, ctx.state.trace.empty() ? j : ctx.state.trace.back().best_j);
    ctx.state.trace.push_back(rec);
    return j;
}

// Replaces one rectangle with its parts^d children.
void split_rect(StageState& state, std::size_t idx, int parts)
{
    std::vector<HyperRect> children = subdivide(state.rects[idx], parts);
    state.rects.erase(state.rects.begin() + static_cast<std::ptrdiff_t>(idx));
    for (auto& child : children) {
        state.rects.push_back(std::move(child));
    }
}

// One AF-guided evaluation followed by the subdivision of the rectangle the
// chosen candidate was the center of, so the next iteration scores finer
// cells exactly where this one sampled. Returns false when every remaining
// center has already been observed.
bool candidate_step(LoopContext& ctx, int parts)
{
    auto& state = ctx.state;

    AfKind af;
    if (const auto committed = select_af(state.af_history, ctx.cfg.max_af)) {
        af = *committed;
    } else {
        af = state.af_history.size() % 2 == 0 ? AfKind::ei : AfKind::cbm;
    }
    const double af_dof = ctx.kind == SurrogateKind::gp ? kGaussianDof : ctx.cfg.dof;

    double best_score = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_candidate;
    std::size_t best_idx = state.rects.size();
    for (std::size_t i = 0; i < state.rects.size(); ++i) {
        const Eigen::VectorXd c = state.rects[i].center();
        if (ctx.obs.contains(c)) {
            continue;
        }
        const Posterior post = posterior(state.model, c);
        const double sd = std::sqrt(std::max(post.variance, 0.0));
        const double score = af == AfKind::ei
                                 ? ei(post.mean, sd, af_dof, state.best_j)
                                 : cbm(post.mean, sd, ctx.cfg.beta, state.best_j);
        if (score > best_score) {
            best_score = score;
            best_candidate = c;
            best_idx = i;
        }
    }
    if (best_candidate.size() == 0) {
        return false;
    }

    const double best_before = state.best_j;
    const double j = evaluate_at(ctx, best_candidate, af_name(af));
    if (j < state.best_j) {
        state.best_j = j;
        state.best_q_norm = best_candidate;
    }
    state.af_history.push_back({af, best_before, state.best_j});
    split_rect(state, best_idx, parts);
    return true;
}

} // namespace

StageState fast_exploration(const Objective& objective, const BoxSpace& space,
                            const TsboConfig& cfg, SurrogateKind kind)
{
    space.validate();
    cfg.validate();
    const int d = space.dim();

    StageState state;
    HyperRect root;
    root.lower = Eigen::VectorXd::Zero(d);
    root.upper = Eigen::VectorXd::Ones(d);
    state.rects.push_back(root);

    ObservationSet obs;
    LoopContext ctx{objective, space, cfg, kind, obs, state, 1};

    // The very first sample sits at the center of the whole space; the space
    // is then cut into 2^d cells whose centers seed the candidate pool.
    const Eigen::VectorXd center = root.center();
    state.best_j = evaluate_at(ctx, center, "center");
    state.best_q_norm = center;
    state.model = fit(obs, kind, cfg.dof, fit_seed(cfg, state.refits++));
    split_rect(state, 0, 2);

    // The stage ends once the best point seen has sat still, within 1% of its
    // own norm, for MAX_FE consecutive evaluations.
    int counter = 0;
    while (counter < cfg.max_fe) {
        const Eigen::VectorXd prev_best = state.best_q_norm;
        if (!candidate_step(ctx, 2)) {
            break;
        }
        const double move = (state.best_q_norm - prev_best).norm();
        const double threshold = cfg.tr_fe_factor * state.best_q_norm.norm();
        counter = update_counter(counter, move, threshold);
        state.model = fit(obs, kind, cfg.dof, fit_seed(cfg, state.refits++));
    }
    return state;
}

void pure_exploitation(const Objective& objective, const BoxSpace& outer,
                       const BoxSpace& shrunk, const TsboConfig& cfg, SurrogateKind kind,
                       StageState& state)
{
    outer.validate();
    shrunk.validate();
    cfg.validate();

    // The shrunken band lives in the same normalized coordinates as stage
    // one, so the surrogate carries over. It starts pre-divided into 3^d
    // cells for a denser candidate pool.
    HyperRect root;
    root.lower = normalize(shrunk.lower, outer);
    root.upper = normalize(shrunk.upper, outer);
    state.rects.clear();
    state.rects.push_back(root);
    split_rect(state, 0, 3);

    ObservationSet obs = state.model.obs;
    LoopContext ctx{objective, outer, cfg, kind, obs, state, 2};

    for (int n_iter = 1; n_iter <= cfg.max_pe; ++n_iter) {
        if (!candidate_step(ctx, 3)) {
            break;
        }
        if (n_iter <= cfg.max_sm) {
            state.model = fit(obs, kind, cfg.dof, fit_seed(cfg, state.refits++));
        }
    }
}

TuningResult tune(const Objective& objective, const BoxSpace& space, const TsboConfig& cfg,
                  SurrogateKind kind)
{
    const auto start = std::chrono::steady_clock::now();

    StageState state = fast_exploration(objective, space, cfg, kind);
    const int stage1_evals = static_cast<int>(state.trace.size());

    const BoxSpace shrunk =
        shrink_space(denormalize(state.best_q_norm, space), cfg.alpha, space);
    pure_exploitation(objective, space, shrunk, cfg, kind, state);

    TuningResult result;
    result.method = kind == SurrogateKind::tsp ? "tsbo-tsp" : "tsbo-gp";
    result.best_q = denormalize(state.best_q_norm, space);
    result.best_j = state.best_j;
    result.trace = std::move(state.trace);
    result.evals_stage1 = stage1_evals;
    result.evals_stage2 = static_cast<int>(result.trace.size()) - stage1_evals;
    result.surrogate_refits = state.refits;
    result.surrogate = std::move(state.model);
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace kfat
