#pragma once

#include "kfat/tsbo.hpp"

#include <cstdint>

namespace kfat {

struct GaConfig {
    int population_size = 15;
    int max_generations = 15;
    double elite_fraction = 0.75;
    double crossover_fraction = 0.8;
    double mutation_std = 0.1; // normalized units, halved every 5 generations
    std::uint64_t seed = 0;

    void validate() const;
};

TuningResult ga_minimize(const Objective& objective, const BoxSpace& space, const GaConfig& cfg);

} // namespace kfat
