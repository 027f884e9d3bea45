#pragma once

#include <optional>
#include <vector>

namespace kfat {

enum class AfKind { ei, cbm };

const char* af_name(AfKind kind);

// Expected improvement below the incumbent y_hat under a t posterior with
// dof degrees of freedom. Larger is better.
double ei(double mean, double std_dev, double dof, double y_hat);

// Confidence bound score: std_dev*sqrt(beta) + (f_star - mean). Larger is
// better; beta trades exploration against exploitation.
double cbm(double mean, double std_dev, double beta, double f_star);

struct AfRecord {
    AfKind used = AfKind::ei;
    double best_before = 0.0;
    double best_after = 0.0;
};

// After max_af alternating picks, commit to the function whose picks lowered
// the running best the most (cumulatively); ties go to EI. Returns nullopt
// while the history is still shorter than max_af (keep alternating).
std::optional<AfKind> select_af(const std::vector<AfRecord>& history, int max_af);

} // namespace kfat
