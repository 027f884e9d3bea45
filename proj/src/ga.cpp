#include "kfat/ga.hpp"
#include "kfat/numerics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace kfat {

void GaConfig::validate() const
{
    if (population_size < 2) {
        throw ConfigError("ga: population size must be at least 2");
    }
    if (max_generations < 1) {
        throw ConfigError("ga: generation count must be at least 1");
    }
    if (!(elite_fraction >= 0.0 && elite_fraction <= 1.0) ||
        !(crossover_fraction >= 0.0 && crossover_fraction <= 1.0)) {
        throw ConfigError("ga: fractions must lie in [0, 1]");
    }
    if (!(mutation_std > 0.0)) {
        throw ConfigError("ga: mutation std must be positive");
    }
}

namespace {

Eigen::VectorXd clip_to_cube(Eigen::VectorXd u)
{
    for (int i = 0; i < u.size(); ++i) {
        u(i) = std::clamp(u(i), 0.0, 1.0);
    }
    return u;
}

} // namespace

TuningResult ga_minimize(const Objective& objective, const BoxSpace& space, const GaConfig& cfg)
{
    space.validate();
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const int d = space.dim();
    const int pop = cfg.population_size;

    std::uint64_t seed_state = cfg.seed ^ 0xe7037ed1a0b428dbULL;
    std::mt19937_64 rng(splitmix64(seed_state));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<Eigen::VectorXd> population(static_cast<std::size_t>(pop));
    for (auto& individual : population) {
        individual.resize(d);
        for (int i = 0; i < d; ++i) {
            individual(i) = unit(rng);
        }
    }

    // Rank selection over the sorted population: weight pop - rank.
    auto pick_parent = [&](const std::vector<std::size_t>& order) {
        const double total = 0.5 * pop * (pop + 1);
        double ticket = unit(rng) * total;
        for (int rank = 0; rank < pop; ++rank) {
            ticket -= static_cast<double>(pop - rank);
            if (ticket <= 0.0) {
                return order[static_cast<std::size_t>(rank)];
            }
        }
        return order.back();
    };

    TuningResult result;
    result.method = "ga";
    result.best_j = std::numeric_limits<double>::infinity();

    const int elites = static_cast<int>(
        std::ceil(cfg.elite_fraction * static_cast<double>(pop)));
    std::vector<double> fitness(static_cast<std::size_t>(pop));

    for (int gen = 0; gen < cfg.max_generations; ++gen) {
        for (int i = 0; i < pop; ++i) {
            const Eigen::VectorXd q = denormalize(population[static_cast<std::size_t>(i)], space);
            const double j = objective(q);
            fitness[static_cast<std::size_t>(i)] = j;

            EvalRecord rec;
            rec.iter = static_cast<int>(result.trace.size()) + 1;
            rec.stage = 1;
            rec.af = "ga";
            rec.q = q;
            rec.j = j;
            if (j < result.best_j) {
                result.best_j = j;
                result.best_q = q;
            }
            rec.best_j = result.best_j;
            result.trace.push_back(rec);
        }

        if (gen == cfg.max_generations - 1) {
            break;
        }

        std::vector<std::size_t> order(static_cast<std::size_t>(pop));
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return fitness[a] < fitness[b];
        });

        std::vector<Eigen::VectorXd> next;
        next.reserve(static_cast<std::size_t>(pop));
        for (int e = 0; e < std::min(elites, pop); ++e) {
            next.push_back(population[order[static_cast<std::size_t>(e)]]);
        }

        const int offspring = pop - static_cast<int>(next.size());
        const int crossed = static_cast<int>(
            std::lround(cfg.crossover_fraction * static_cast<double>(offspring)));
        const double sigma = cfg.mutation_std * std::pow(0.5, gen / 5);

        for (int c = 0; c < offspring; ++c) {
            if (c < crossed) {
                const Eigen::VectorXd& p1 = population[pick_parent(order)];
                const Eigen::VectorXd& p2 = population[pick_parent(order)];
                Eigen::VectorXd child(d);
                for (int i = 0; i < d; ++i) {
                    const double mix = unit(rng);
                    child(i) = mix * p1(i) + (1.0 - mix) * p2(i);
                }
                next.push_back(child);
            } else {
                Eigen::VectorXd child = population[pick_parent(order)];
                for (int i = 0; i < d; ++i) {
                    child(i) += sigma * gauss(rng);
                }
                next.push_back(clip_to_cube(std::move(child)));
            }
        }
        population = std::move(next);
    }

    result.evals_stage1 = static_cast<int>(result.trace.size());
    result.evals_stage2 = 0;
    result.surrogate_refits = 0;
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace kfat
