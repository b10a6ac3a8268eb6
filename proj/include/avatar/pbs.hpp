#pragma once

#include "avatar/core.hpp"
#include "avatar/mesh.hpp"
#include "avatar/patch_layout.hpp"

#include <optional>
#include <vector>

namespace avatar {

// Per-patch linear shape model: neutral patch plus K-1 delta shapes.
struct PatchBlendshapeBasis {
    PatchLayout layout;
    int shape_count = 0;                    // K
    int vertex_count = 0;                   // full-mesh vertex count (topology guard)
    std::vector<MatX> neutral;              // per patch: V_p x 3
    std::vector<std::vector<MatX>> deltas;  // per patch: K-1 matrices, V_p x 3

    int patch_count() const { return static_cast<int>(neutral.size()); }
    int weight_count() const { return shape_count - 1; }
};

// shapes[0] is the neutral scan; all K shapes must share topology.
PatchBlendshapeBasis build_basis(const std::vector<Mesh>& shapes, const PatchLayout& layout);

// p^{S0} + sum_i beta_i (p^{S_i} - p^{S0}) for one patch.
MatX eval_patch_model(const PatchBlendshapeBasis& basis, int patch, const VecX& beta_p);

// Full-mesh reconstruction: overlapping vertices take the value from the
// highest-index patch containing them (used for synthetic targets).
Mesh eval_full_model(const PatchBlendshapeBasis& basis, const Mesh& reference, const MatX& beta);

struct RigidTransform {
    Vec4 quat{1, 0, 0, 0};  // (w, x, y, z), unit
    Vec3 translation = Vec3::Zero();

    Mat3 rotation() const;
    Vec3 apply(const Vec3& p) const { return rotation() * p + translation; }
    static RigidTransform from_matrix(const Mat3& r, const Vec3& t);
};

struct PbsWeights {
    double lambda_ls = 1.0;
    double lambda_reg = 1e-3;
    double lambda_o = 1e-2;
};

// Raw term values (before weighting) plus the weighted total.
struct PbsEnergy {
    double ls = 0;       // sum of squared member-vertex residuals
    double reg = 0;      // sum |beta|
    double overlap = 0;  // sum over ordered neighbor pairs of |beta_p - beta_q|
    double total = 0;    // weighted
};

PbsEnergy energy(const PatchBlendshapeBasis& basis, const Mesh& target, const MatX& beta,
                 const RigidTransform& rigid, const PbsWeights& weights);

struct PbsSolveResult {
    MatX beta;  // P x (K-1)
    RigidTransform rigid;
    PbsEnergy final_energy;
    std::vector<double> trace;  // smoothed objective per outer iteration
    int iterations = 0;
};

// Block-coordinate descent: global rigid alignment by Procrustes alternating
// with one IRLS-reweighted sparse least-squares solve for all beta jointly.
PbsSolveResult solve_frame(const PatchBlendshapeBasis& basis, const Mesh& target,
                           const PbsWeights& weights, const MatX* init = nullptr);

// The convex beta subproblem with the rigid transform held fixed; runs IRLS
// until the smoothed objective stalls. Exposed for oracle tests.
MatX solve_beta_given_rigid(const PatchBlendshapeBasis& basis, const Mesh& target,
                            const PbsWeights& weights, const RigidTransform& rigid,
                            const MatX& beta_init, int max_iters = 100);

// Per-frame solve, warm-started from the previous frame.
std::vector<PbsSolveResult> solve_sequence(const PatchBlendshapeBasis& basis,
                                           const std::vector<Mesh>& frames,
                                           const PbsWeights& weights);

}  // namespace avatar
