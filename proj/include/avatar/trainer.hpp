#pragma once

#include "avatar/adam.hpp"
#include "avatar/losses.hpp"
#include "avatar/model.hpp"
#include "avatar/tensor_io.hpp"

#include <map>
#include <string>
#include <vector>

namespace avatar {

struct StageConfig {
    int start_iteration = 0;
    int resolution_divisor = 1;  // power of two; renders at dataset_res / divisor
};

struct TrainConfig {
    int iterations = 10000;
    std::vector<StageConfig> stages;  // strictly increasing start iterations

    int densify_start = 2000;
    int densify_interval = 500;
    double densify_grow_threshold = 2e-6;
    double densify_prune_threshold = 0.005;
    int max_anchors = 1024;            // growth cap; <= 0 means unlimited
    bool densify_by_position = false;  // rank growth by 2D-mean instead of color gradients
    int anchors_per_patch = 1;

    LossWeights loss_weights;
    double visibility_tau = kOpacityGate;
    int patch_window_count = 16;
    int patch_window_divisor = 8;  // window edge = render width / divisor, min 8

    double lr_anchor_mu = 0.00016;
    double lr_anchor_scale = 0.005;
    double lr_anchor_alpha = 0.05;
    double lr_anchor_feat = 0.0025;
    double lr_f_mu = 0.01;
    double lr_f_alpha = 0.002;
    double lr_f_quat = 0.004;
    double lr_f_scale = 0.004;
    double lr_f_color = 0.006;
    double lr_encoders = 0.0001;
    double lr_half_life = 25000;  // steps for lr to halve; no decay in the last stage

    int gaussians_per_anchor = 5;
    bool use_patch_expressions = true;
    bool use_patch_color_mlp = true;

    int checkpoint_interval = 5000;
    int eval_interval = 500;
    int log_interval = 10;
    uint64_t seed = 1;

    // stage starts at 0% / 20% / 55% of the run, full resolution last
    static TrainConfig defaults(int iterations);
    void validate() const;
};

TrainConfig load_train_config(const std::string& path);  // JSON; absent keys keep defaults
void save_train_config(const TrainConfig& cfg, const std::string& path);

// In-memory training data: per-frame meshes with TBNP frames, fitted
// blendweights, cameras, and full-resolution target images + masks.
struct Dataset {
    PatchLayout layout;
    std::vector<Mesh> meshes;                          // T
    std::vector<std::vector<TbnpFrame>> tbnp;          // T x P
    BlendweightSequence weights;                       // T x P x (K-1)
    std::vector<Camera> cameras;
    std::vector<int> train_cameras, heldout_cameras;
    std::vector<Image> images;  // frame-major: frame * camera_count + cam
    std::vector<Image> masks;   // same indexing, H x W x 1
    Vec3 background = Vec3::Zero();

    int frame_count() const { return static_cast<int>(meshes.size()); }
    int camera_count() const { return static_cast<int>(cameras.size()); }
    const Image& image(int t, int cam) const { return images[t * camera_count() + cam]; }
    const Image& mask(int t, int cam) const { return masks[t * camera_count() + cam]; }
    MatX beta(int t) const;
    void validate() const;
};

Dataset load_dataset(const std::string& manifest_path);

Camera scale_camera(const Camera& cam, int divisor);

Image render_view(const AvatarModel& model, const Dataset& data, int frame, int camera,
                  int divisor = 1);

struct EvalView {
    int frame = 0, camera = 0;
    double psnr = 0, ssim = 0;
};
struct EvalReport {
    std::vector<EvalView> views;
    double mean_psnr = 0, mean_ssim = 0;
};

// Renders every (frame, camera) pair for the given cameras and scores it
// against the dataset target inside the mask.
EvalReport evaluate(const AvatarModel& model, const Dataset& data,
                    const std::vector<int>& camera_ids);
void save_eval_report(const EvalReport& report, const std::string& path);

struct StepStats {
    LossBreakdown losses;
    double weighted = 0;
    int anchor_count = 0;
    int gaussian_count = 0;
};

class Trainer {
  public:
    Trainer(AvatarModel model, const Dataset& data, TrainConfig cfg);

    // One optimization step at the given iteration (forward, backward, Adam,
    // scheduled densification).
    StepStats step(int iteration);

    // Full loop: CSV log, periodic held-out PSNR, checkpoints under out_dir.
    void run(const std::string& out_dir);

    const AvatarModel& model() const { return model_; }
    AvatarModel& model() { return model_; }
    const TrainConfig& config() const { return cfg_; }

  private:
    int stage_divisor(int iteration) const;
    bool final_stage(int iteration) const;
    void apply_gradients(const ModelGrads& grads);
    void remap_anchor_optimizers(const std::vector<int>& new_to_old);

    AvatarModel model_;
    const Dataset& data_;
    TrainConfig cfg_;
    std::map<std::string, AdamState> opt_;
    bool decay_disabled_ = false;
};

}  // namespace avatar
