#pragma once

#include "avatar/camera.hpp"
#include "avatar/core.hpp"
#include "avatar/mesh.hpp"
#include "avatar/patch_layout.hpp"
#include "avatar/tbnp.hpp"

#include <string>
#include <vector>

namespace avatar {

inline constexpr int kFeatureDim = 32;
inline constexpr double kOpacityGate = 0.005;  // sigmoid(alpha) visibility gate

// Scaffold anchors in structure-of-arrays form. Positions are in the parent
// patch's local (TBNP) frame; scale is stored as a softplus pre-image so the
// optimizer can roam freely; alpha is an opacity logit used only as a gate.
struct AnchorSet {
    int patch_count = 0;
    int feature_dim = kFeatureDim;

    std::vector<int> parent_patch;
    std::vector<Vec3> mu;           // local position, meters
    std::vector<Vec3> scale_param;  // softplus(scale_param) = s
    std::vector<double> alpha;      // opacity logit
    MatX features;                  // N x feature_dim

    // densification statistics, reset by densify_and_prune
    std::vector<double> grad_acc;      // summed per-step mean gradient magnitude
    std::vector<int> obs_count;        // visible-step count
    std::vector<double> opacity_sum;   // summed sigmoid(alpha) per step
    int steps_since_reset = 0;
    int gaussians_per_anchor = 0;          // L, set on first accumulate
    std::vector<double> per_gaussian_grad; // N*L accumulated magnitudes
    std::vector<Vec3> last_offsets;        // N*L last spawned local offsets

    int count() const { return static_cast<int>(mu.size()); }
    Vec3 scale(int i) const {
        return {softplus(scale_param[i].x()), softplus(scale_param[i].y()),
                softplus(scale_param[i].z())};
    }
    std::vector<std::vector<int>> patch_lists() const;
    void validate() const;
};

// per_patch anchors per patch: the first at the patch origin, extras jittered
// up to 1 cm; scale from the mean nearest patch-center spacing of `neutral`.
AnchorSet init_anchors(const PatchLayout& layout, const Mesh& neutral, int per_patch,
                       uint64_t seed);

std::vector<Vec3> anchors_to_global(const AnchorSet& anchors,
                                    const std::vector<TbnpFrame>& frames);

// True iff the anchor is in front of the near plane, projects inside the
// image rectangle expanded by 10% per side, and passes the opacity gate.
std::vector<char> visible_anchors(const AnchorSet& anchors, const std::vector<TbnpFrame>& frames,
                                  const Camera& cam, double tau = kOpacityGate);

// Per-step statistics update. `visible_ids` lists anchors that spawned
// Gaussians this step (in ascending order); `per_gaussian_grad_norms` holds L
// consecutive gradient magnitudes per visible anchor; `local_offsets` the
// matching spawned offsets in patch-local space.
void accumulate_color_gradient(AnchorSet& anchors, const std::vector<int>& visible_ids,
                               const std::vector<double>& per_gaussian_grad_norms,
                               const std::vector<Vec3>& local_offsets, int gaussians_per_anchor);

struct DensifyResult {
    std::vector<int> new_to_old;  // -1 for freshly spawned children
    int grown = 0;
    int pruned = 0;
};

// Grows children where the normalized gradient statistic exceeds
// `threshold_grow` (highest statistics first, at most `max_grow` when >= 0);
// prunes anchors whose running mean gate opacity fell below `threshold_prune`,
// never emptying a patch. Resets all statistics.
DensifyResult densify_and_prune(AnchorSet& anchors, double threshold_grow,
                                double threshold_prune, uint64_t seed, int max_grow = -1);

// Checkpoint: f32/u32 arrays plus a JSON manifest under `prefix`.
void save_anchors(const AnchorSet& anchors, const std::string& prefix);
AnchorSet load_anchors(const std::string& prefix);

}  // namespace avatar
