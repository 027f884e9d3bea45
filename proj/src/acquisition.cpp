#include "kfat/acquisition.hpp"
#include "kfat/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>

namespace kfat {

const char* af_name(AfKind kind)
{
    return kind == AfKind::ei ? "ei" : "cbm";
}

double ei(double mean, double std_dev, double dof, double y_hat)
{
    if (!(std_dev >= 0.0)) {
        throw ConfigError("ei: standard deviation must be nonnegative");
    }
    if (!(dof > 1.0)) {
        throw ConfigError("ei: degrees of freedom must exceed 1");
    }
    if (std_dev == 0.0) {
        return std::max(y_hat - mean, 0.0);
    }
    const double z = (y_hat - mean) / std_dev;
    const boost::math::students_t dist(dof);
    const double pdf_z = boost::math::pdf(dist, z);
    const double cdf_z = boost::math::cdf(dist, z);
    return std_dev * (dof / (dof - 1.0) * (1.0 + z * z / dof) * pdf_z + z * cdf_z);
}

double cbm(double mean, double std_dev, double beta, double f_star)
{
    if (!(std_dev >= 0.0)) {
        throw ConfigError("cbm: standard deviation must be nonnegative");
    }
    if (!(beta >= 0.0)) {
        throw ConfigError("cbm: beta must be nonnegative");
    }
    return std_dev * std::sqrt(beta) + (f_star - mean);
}

std::optional<AfKind> select_af(const std::vector<AfRecord>& history, int max_af)
{
    if (max_af < 1) {
        throw ConfigError("select_af: max_af must be at least 1");
    }
    if (history.size() < static_cast<std::size_t>(max_af)) {
        return std::nullopt;
    }
    double gain_ei = 0.0;
    double gain_cbm = 0.0;
    for (int i = 0; i < max_af; ++i) {
        const AfRecord& rec = history[static_cast<std::size_t>(i)];
        const double gain = rec.best_before - rec.best_after;
        if (rec.used == AfKind::ei) {
            gain_ei += gain;
        } else {
            gain_cbm += gain;
        }
    }
    return gain_cbm > gain_ei ? AfKind::cbm : AfKind::ei;
}

} // namespace kfat
