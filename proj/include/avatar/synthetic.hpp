#pragma once

#include "avatar/camera.hpp"
#include "avatar/gaussian.hpp"
#include "avatar/tbnp.hpp"
#include "avatar/tensor_io.hpp"
#include "avatar/trainer.hpp"

#include <string>
#include <vector>

namespace avatar {

// Knobs for the procedural head used by tests, the acceptance gate and the
// demo CLI. Defaults give a ~2 m ellipsoid so Gaussian scales land inside the
// unpenalized band of the scale regularizer.
struct SyntheticConfig {
    int patch_count = 24;
    int shape_count = 4;  // K: neutral plus K-1 bump shapes
    int frames = 20;
    int cameras = 7;  // ring; camera 0 is held out
    int width = 128, height = 128;
    int subdivisions = 3;          // icosphere refinement level
    int gaussians_per_patch = 10;  // teacher density
    Vec3 radii{1.5, 1.9, 1.6};     // ellipsoid semi-axes, meters
    Vec3 background{0.05, 0.05, 0.08};
    uint64_t seed = 7;
};

// One ground-truth Gaussian, pinned to its parent patch frame. Color moves
// with the expression weights (stripe term) and the view angle (sheen term)
// so that expression and view conditioning have signal to learn.
struct TeacherGaussian {
    int patch = 0;
    Vec3 local_pos = Vec3::Zero();
    Vec3 scale = Vec3::Ones();
    Vec4 local_quat{1, 0, 0, 0};
    double opacity = 0.9;
    Vec3 base_color = Vec3::Ones();
    Vec3 stripe_color = Vec3::Zero();
    VecX shape_key;  // K-1 entries
    double sheen = 0.0;
};

struct SyntheticScene {
    SyntheticConfig cfg;
    PatchLayout layout;                        // centers assigned
    std::vector<Mesh> shapes;                  // K topology-shared shape meshes
    std::vector<Mesh> frames;                  // T deformed + rigidly moved meshes
    std::vector<std::vector<TbnpFrame>> tbnp;  // T x P
    BlendweightSequence weights;               // true weights, equal across patches
    std::vector<Camera> cameras;
    std::vector<TeacherGaussian> teacher;
};

// Unit icosphere refined `subdivisions` times (level 0 = icosahedron).
Mesh make_icosphere(int subdivisions);

// Farthest-point patch seeds on the neutral mesh, nearest-seed assignment,
// then one ring of dilation so adjacent patches overlap.
PatchLayout make_overlapping_patches(const Mesh& mesh, int patch_count, uint64_t seed);

SyntheticScene make_synthetic_scene(const SyntheticConfig& cfg);

// Teacher primitives for one frame/camera in world space.
std::vector<GaussianPrimitive> teacher_gaussians(const SyntheticScene& scene, int frame,
                                                 const Camera& cam);

// Rasterized teacher target; optional binary coverage mask (alpha > 0.5).
Image render_teacher(const SyntheticScene& scene, int frame, int camera, Image* mask = nullptr);

// All frames/cameras rendered into an in-memory training set.
Dataset scene_to_dataset(const SyntheticScene& scene);

// Full on-disk dataset: meshes, shapes, layout, weights, cameras, f32
// images/masks, preview PNGs and the manifest consumed by load_dataset.
void write_synthetic_dataset(const SyntheticScene& scene, const std::string& out_dir);

}  // namespace avatar
