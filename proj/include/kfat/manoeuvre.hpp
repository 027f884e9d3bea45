#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace kfat {

struct ManoeuvreSample {
    double t = 0.0;
    double steer_angle = 0.0;
    double long_accel = 0.0;
    double meas_vx = 0.0;
    double meas_ay = 0.0;
    double meas_yawrate = 0.0;
    double true_vx = 0.0;
    double true_vy = 0.0;
    double true_yawrate = 0.0;
    double true_beta = 0.0;
};

struct Manoeuvre {
    std::string name;
    double dt = 0.01;
    std::vector<ManoeuvreSample> samples;

    std::size_t size() const { return samples.size(); }

    // Uniform time grid, at least 100 samples, stored sideslip consistent
    // with the stored velocities. Throws DataError on violation.
    void validate() const;
};

} // namespace kfat
