#pragma once

#include "avatar/core.hpp"

#include <span>
#include <string>
#include <vector>

namespace avatar {

// Adam with bias correction and an optional per-step exponential learning-rate
// decay. One instance per parameter group; moments live alongside the group so
// they can be remapped when the parameter vector is reshaped (anchor growth /
// pruning).
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay_factor = 1.0;  // lr multiplier applied after each step
    long step_count = 0;
    std::vector<double> m, v;

    static AdamState make(size_t n, double lr, double decay_factor = 1.0);

    // One update. Rejects non-finite gradients, naming the offending group.
    void step(std::span<double> params, std::span<const double> grads,
              const std::string& group_name);

    // Rebuild moments after entries were reordered, dropped, or added.
    // new_to_old[i] gives the source entry for new entry i, or -1 for a fresh
    // entry (zero moments); `stride` is the number of scalars per entry.
    void remap(const std::vector<int>& new_to_old, int stride);
};

}  // namespace avatar
