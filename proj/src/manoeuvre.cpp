#include "kfat/manoeuvre.hpp"
#include "kfat/errors.hpp"

#include <cmath>
#include <string>

namespace kfat {

void Manoeuvre::validate() const
{
    if (samples.size() < 100) {
        throw DataError("manoeuvre '" + name + "' has " + std::to_string(samples.size()) +
                        " samples, need at least 100");
    }
    if (!(dt > 0.0)) {
        throw DataError("manoeuvre '" + name + "' has non-positive dt");
    }
    const double t0 = samples.front().t;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const auto& s = samples[k];
        if (std::abs(s.t - (t0 + static_cast<double>(k) * dt)) > 1e-9) {
            throw DataError("manoeuvre '" + name + "' time grid not uniform at sample " +
                            std::to_string(k));
        }
        if (std::abs(s.true_beta - std::atan(s.true_vy / s.true_vx)) > 1e-12) {
            throw DataError("manoeuvre '" + name + "' stored sideslip inconsistent at sample " +
                            std::to_string(k));
        }
    }
}

} // namespace kfat
