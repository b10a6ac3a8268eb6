#pragma once

#include "avatar/anchors.hpp"
#include "avatar/camera.hpp"
#include "avatar/gaussian.hpp"
#include "avatar/mlp.hpp"
#include "avatar/tbnp.hpp"

#include <optional>
#include <string>
#include <vector>

namespace avatar {

struct ModelConfig {
    int patch_count = 0;          // P
    int shape_count = 0;          // K (blendweights have K-1 coefficients)
    int gaussians_per_anchor = 5; // L
    int feature_dim = kFeatureDim;
    int expr_dim = 32;            // width of e_p and e_g
    int hidden = 32;
    bool use_patch_expressions = true;  // off: e_g-only conditioning, shared color MLP
    bool use_patch_color_mlp = true;    // off: one shared color MLP
    uint64_t seed = 1;

    // |f| + |e_p| + |e_g| + 3 (anchor position or view direction)
    int attr_input_dim() const {
        return feature_dim + (use_patch_expressions ? expr_dim : 0) + expr_dim + 3;
    }
    bool patch_color() const { return use_patch_color_mlp && use_patch_expressions; }
};

// Anchors plus the MLP families that predict Gaussian attributes from them.
struct AvatarModel {
    ModelConfig cfg;
    AnchorSet anchors;
    std::optional<MlpParams> patch_encoders;  // P instances, (K-1) -> 32 -> 32
    MlpParams global_encoder;                 // P(K-1) -> 32 -> 32
    MlpParams f_mu;     // attr input -> 32 -> 3L, linear offsets
    MlpParams f_scale;  // attr input -> 32 -> 3L, softplus
    MlpParams f_quat;   // attr input -> 32 -> 4L, identity-biased raw quats
    MlpParams f_alpha;  // attr input -> 32 -> L, sigmoid
    MlpParams f_color;  // attr input -> 32 -> 3L, sigmoid; per patch when enabled

    void validate() const;
};

AvatarModel build_model(const ModelConfig& cfg, const AnchorSet& anchors);

struct ExprEncoding {
    MatX beta;   // P x (K-1) input, kept for the caches
    MatX e_p;    // P x expr_dim (empty rows when patch expressions are off)
    VecX e_g;    // expr_dim
    MlpCache cache_patch, cache_global;
};

ExprEncoding encode_expressions(const AvatarModel& model, const MatX& beta);

struct SpawnResult {
    std::vector<int> visible_ids;            // ascending anchor indices
    std::vector<GaussianPrimitive> prims;    // L per visible anchor
    std::vector<Vec3> mu_hat;                // raw predicted offsets, per Gaussian
    std::vector<Vec3> local_offsets;         // patch-local spawned offsets, per Gaussian
    std::vector<Vec3> mu_glob;               // per visible anchor
    std::vector<Vec3> s_anchor;              // softplus(scale_param), per visible anchor
    std::vector<Mat3> rot;                   // parent TBNP rotation, per visible anchor
    std::vector<Vec3> view_u;                // pre-normalization view vectors
    MatX input_mu, input_view;               // MLP input rows per visible anchor
    MatX out_q;                              // raw quaternion outputs (pre-normalize)
    MlpCache cache_mu, cache_s, cache_q, cache_a, cache_c;
};

// Predicts and places L Gaussians per visible anchor (expression-conditioned
// offsets/attributes in the parent patch frame, view-conditioned appearance).
SpawnResult spawn_gaussians(const AvatarModel& model, const ExprEncoding& enc,
                            const std::vector<TbnpFrame>& frames, const Camera& cam);

// Gradients for every trainable parameter group, shaped like the model.
struct ModelGrads {
    std::vector<Vec3> anchor_mu, anchor_scale_param;
    std::vector<double> anchor_alpha;  // stays zero: alpha only gates visibility
    MatX anchor_features;
    std::vector<double> patch_encoders, global_encoder;
    std::vector<double> f_mu, f_scale, f_quat, f_alpha, f_color;

    static ModelGrads zeros(const AvatarModel& model);
};

// Reverse of spawn_gaussians. Per-Gaussian gradients come from the rasterizer
// plus any regularizers the caller folded in; d_mu_hat_extra / d_anchor_mu_extra
// carry the position-regularizer terms on the raw offsets and visible anchors.
// Returns the expression-encoding gradients for encode_backward.
struct EncodingGrads {
    MatX d_e_p;  // P x expr_dim
    VecX d_e_g;
};

EncodingGrads spawn_backward(const AvatarModel& model, const SpawnResult& spawn,
                             const std::vector<Vec3>& d_mean, const std::vector<Vec3>& d_scale,
                             const std::vector<Vec4>& d_quat,
                             const std::vector<double>& d_opacity,
                             const std::vector<Vec3>& d_color,
                             const std::vector<Vec3>& d_mu_hat_extra,
                             const std::vector<Vec3>& d_anchor_mu_extra, ModelGrads& grads);

void encode_backward(const AvatarModel& model, const ExprEncoding& enc,
                     const EncodingGrads& d_enc, ModelGrads& grads);

// Checkpoint: one directory holding the anchor container, one f32 blob per
// MLP family, and a manifest.
void save_model(const AvatarModel& model, const std::string& dir);
AvatarModel load_model(const std::string& dir);

void save_mlp(const MlpParams& params, const std::string& path_prefix);
MlpParams load_mlp(const std::string& path_prefix);

}  // namespace avatar
