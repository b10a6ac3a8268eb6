#include "avatar/synthetic.hpp"

#include "avatar/rasterizer.hpp"
#include "avatar/rng.hpp"

#include <json.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

namespace avatar {

namespace {

Vec3 random_unit(Pcg32& rng) {
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

Vec3 hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    Vec3 rgb;
    if (hp < 1) rgb = {c, x, 0};
    else if (hp < 2) rgb = {x, c, 0};
    else if (hp < 3) rgb = {0, c, x};
    else if (hp < 4) rgb = {0, x, c};
    else if (hp < 5) rgb = {x, 0, c};
    else rgb = {c, 0, x};
    return rgb.array() + (v - c);
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
    Eigen::Quaterniond qa(a[0], a[1], a[2], a[3]);
    Eigen::Quaterniond qb(b[0], b[1], b[2], b[3]);
    Eigen::Quaterniond q = qa * qb;
    return {q.w(), q.x(), q.y(), q.z()};
}

Vec4 rotation_to_quat(const Mat3& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    return {q.w(), q.x(), q.y(), q.z()};
}

}  // namespace

Mesh make_icosphere(int subdivisions) {
    require(subdivisions >= 0 && subdivisions <= 6, "unsupported icosphere refinement");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh mesh;
    mesh.vertices = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                     {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                     {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                  {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                  {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (auto& v : mesh.vertices) v.normalize();

    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 m = (mesh.vertices[a] + mesh.vertices[b]).normalized();
            mesh.vertices.push_back(m);
            int id = static_cast<int>(mesh.vertices.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> faces;
        faces.reserve(mesh.faces.size() * 4);
        for (const auto& f : mesh.faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            faces.push_back({f[0], ab, ca});
            faces.push_back({f[1], bc, ab});
            faces.push_back({f[2], ca, bc});
            faces.push_back({ab, bc, ca});
        }
        mesh.faces = std::move(faces);
    }
    finalize_mesh(mesh);
    return mesh;
}

PatchLayout make_overlapping_patches(const Mesh& mesh, int patch_count, uint64_t seed) {
    const int n = mesh.vertex_count();
    require(patch_count >= 1 && patch_count <= n, "patch count out of range");
    Pcg32 rng(mix_seed(seed, 0x9a7c));

    // farthest-point seeds
    std::vector<int> seeds = {static_cast<int>(rng.uniform_index(static_cast<uint32_t>(n)))};
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    while (static_cast<int>(seeds.size()) < patch_count) {
        for (int v = 0; v < n; ++v)
            dist[v] = std::min(dist[v],
                               (mesh.vertices[v] - mesh.vertices[seeds.back()]).squaredNorm());
        int far = 0;
        for (int v = 1; v < n; ++v)
            if (dist[v] > dist[far]) far = v;
        seeds.push_back(far);
    }

    std::vector<int> owner(n, 0);
    for (int v = 0; v < n; ++v) {
        double best = std::numeric_limits<double>::infinity();
        for (int p = 0; p < patch_count; ++p) {
            const double d = (mesh.vertices[v] - mesh.vertices[seeds[p]]).squaredNorm();
            if (d < best) {
                best = d;
                owner[v] = p;
            }
        }
    }

    // dilate by one ring so neighboring patches share their border vertices
    const auto adjacency = vertex_adjacency(mesh);
    PatchLayout layout;
    layout.patches.resize(patch_count);
    std::vector<std::vector<char>> member(patch_count, std::vector<char>(n, 0));
    for (int v = 0; v < n; ++v) {
        member[owner[v]][v] = 1;
        for (int u : adjacency[v]) member[owner[v]][u] = 1;
    }
    for (int p = 0; p < patch_count; ++p)
        for (int v = 0; v < n; ++v)
            if (member[p][v]) layout.patches[p].vertices.push_back(v);

    for (int p = 0; p < patch_count; ++p)
        for (int q = p + 1; q < patch_count; ++q) {
            bool shared = false;
            for (int v = 0; v < n && !shared; ++v) shared = member[p][v] && member[q][v];
            if (shared) {
                layout.patches[p].neighbors.push_back(q);
                layout.patches[q].neighbors.push_back(p);
            }
        }
    validate_layout(layout, n);
    return layout;
}

SyntheticScene make_synthetic_scene(const SyntheticConfig& cfg) {
    require(cfg.shape_count >= 2 && cfg.frames >= 1 && cfg.cameras >= 2,
            "scene needs >= 2 shapes, >= 1 frame, >= 2 cameras");
    SyntheticScene scene;
    scene.cfg = cfg;

    Mesh neutral = make_icosphere(cfg.subdivisions);
    for (auto& v : neutral.vertices) v = v.cwiseProduct(cfg.radii);
    finalize_mesh(neutral);

    scene.layout = make_overlapping_patches(neutral, cfg.patch_count, cfg.seed);
    compute_patch_centers(neutral, scene.layout);

    // smooth shapes displacing along the neutral normals: a localized bump on
    // top of a global wave, so every patch sees every shape (keeps the
    // per-patch fit identifiable without regularization)
    Pcg32 rng(mix_seed(cfg.seed, 0x5ba5e));
    scene.shapes.push_back(neutral);
    const int coeffs = cfg.shape_count - 1;
    for (int k = 0; k < coeffs; ++k) {
        const Vec3 center = random_unit(rng).cwiseProduct(cfg.radii);
        const double sigma = rng.uniform(0.45, 0.8);
        const double amp = rng.uniform(0.18, 0.3);
        const Vec3 wave_dir = random_unit(rng);
        const double wave_freq = rng.uniform(1.5, 2.5);
        const double wave_phase = rng.uniform(0.0, 2.0 * M_PI);
        const double wave_amp = rng.uniform(0.08, 0.12);
        Mesh shape = neutral;
        for (int v = 0; v < shape.vertex_count(); ++v) {
            const Vec3& x = neutral.vertices[v];
            const double bump = amp * std::exp(-(x - center).squaredNorm() / (2 * sigma * sigma));
            const double wave =
                wave_amp * (1.2 + std::sin(wave_freq * wave_dir.dot(x) + wave_phase)) / 2.2;
            shape.vertices[v] += (bump + wave) * neutral.normals[v];
        }
        finalize_mesh(shape);
        scene.shapes.push_back(shape);
    }

    // shared sinusoidal weight trajectory, identical across patches
    scene.weights.frames = cfg.frames;
    scene.weights.patches = cfg.patch_count;
    scene.weights.shape_count = cfg.shape_count;
    scene.weights.values.assign(
        static_cast<size_t>(cfg.frames) * cfg.patch_count * coeffs, 0.0);
    std::vector<double> amp(coeffs), phase(coeffs);
    std::vector<int> freq(coeffs);
    for (int k = 0; k < coeffs; ++k) {
        amp[k] = rng.uniform(0.5, 0.85);
        phase[k] = rng.uniform(0.0, 2.0 * M_PI);
        freq[k] = 1 + (k % 2);
    }
    for (int t = 0; t < cfg.frames; ++t)
        for (int k = 0; k < coeffs; ++k) {
            const double b =
                amp[k] * 0.5 *
                (1.0 + std::sin(2.0 * M_PI * freq[k] * t / cfg.frames + phase[k]));
            for (int p = 0; p < cfg.patch_count; ++p) scene.weights.at(t, p, k) = b;
        }

    // deformed frames under a global rigid motion; the wide head turn sweeps
    // every surface point through a fan of view directions between the ring
    // cameras, so view-dependent shading is constrained away from the exact
    // training viewpoints instead of being memorized per camera
    const Vec3 axis = Vec3(0.3, 1.0, 0.2).normalized();
    for (int t = 0; t < cfg.frames; ++t) {
        const double u = 2.0 * M_PI * t / cfg.frames;
        const Mat3 rot = Eigen::AngleAxisd(0.8 * std::sin(u + 0.4), axis).toRotationMatrix();
        const Vec3 trans(0.04 * std::sin(u), 0.03 * std::cos(u), 0.05 * std::sin(2 * u));
        Mesh frame = neutral;
        for (int v = 0; v < frame.vertex_count(); ++v) {
            Vec3 x = neutral.vertices[v];
            for (int k = 0; k < coeffs; ++k)
                x += scene.weights.at(t, 0, k) *
                     (scene.shapes[k + 1].vertices[v] - neutral.vertices[v]);
            frame.vertices[v] = rot * x + trans;
        }
        finalize_mesh(frame);
        scene.frames.push_back(std::move(frame));
        scene.tbnp.push_back(compute_tbnp(scene.frames.back(), scene.layout));
    }

    // camera ring around the head
    const double ring_radius = 7.0;
    const double focal = 1.4 * cfg.width;
    for (int c = 0; c < cfg.cameras; ++c) {
        const double theta = 2.0 * M_PI * c / cfg.cameras;
        const Vec3 eye(ring_radius * std::sin(theta), 0.25, ring_radius * std::cos(theta));
        scene.cameras.push_back(look_at_camera(eye, Vec3::Zero(), Vec3(0, 1, 0), focal, focal,
                                               cfg.width, cfg.height));
    }

    // teacher Gaussians pinned to the neutral patch frames
    const auto neutral_frames = compute_tbnp(neutral, scene.layout);
    for (int p = 0; p < cfg.patch_count; ++p) {
        Pcg32 prng(mix_seed(cfg.seed, 0x7ea0 + static_cast<uint64_t>(p)));
        std::vector<int> members = scene.layout.patches[p].vertices;
        for (size_t i = members.size(); i > 1; --i)
            std::swap(members[i - 1], members[prng.uniform_index(static_cast<uint32_t>(i))]);
        const Vec3 patch_hue = hsv_to_rgb(static_cast<double>(p) / cfg.patch_count, 0.55, 0.75);
        const Mat3 r0t = neutral_frames[p].rotation().transpose();
        for (int g = 0; g < cfg.gaussians_per_patch; ++g) {
            const int v = members[g % members.size()];
            TeacherGaussian tg;
            tg.patch = p;
            const Vec3 world = neutral.vertices[v] + 0.02 * neutral.normals[v] +
                               0.03 * random_unit(prng);
            tg.local_pos = r0t * (world - neutral_frames[p].position());
            tg.scale = {prng.uniform(0.22, 0.5), prng.uniform(0.22, 0.5),
                        prng.uniform(0.18, 0.4)};
            const Vec3 ax = random_unit(prng);
            const double ang = prng.uniform(0.0, M_PI);
            Eigen::Quaterniond q(Eigen::AngleAxisd(ang, ax));
            tg.local_quat = {q.w(), q.x(), q.y(), q.z()};
            tg.opacity = prng.uniform(0.65, 0.95);
            Vec3 freckle(prng.uniform(-0.1, 0.1), prng.uniform(-0.1, 0.1),
                         prng.uniform(-0.1, 0.1));
            tg.base_color = (patch_hue + freckle).cwiseMax(0.05).cwiseMin(0.95);
            tg.stripe_color = 0.15 * random_unit(prng);
            tg.shape_key = VecX(coeffs);
            for (int k = 0; k < coeffs; ++k) tg.shape_key[k] = prng.uniform(-0.7, 0.7);
            tg.sheen = prng.uniform(0.0, 0.12);
            scene.teacher.push_back(std::move(tg));
        }
    }
    return scene;
}

std::vector<GaussianPrimitive> teacher_gaussians(const SyntheticScene& scene, int frame,
                                                 const Camera& cam) {
    require(frame >= 0 && frame < scene.cfg.frames, "teacher frame out of range");
    const int coeffs = scene.cfg.shape_count - 1;
    VecX beta(coeffs);
    for (int k = 0; k < coeffs; ++k) beta[k] = scene.weights.at(frame, 0, k);

    std::vector<GaussianPrimitive> prims;
    prims.reserve(scene.teacher.size());
    const Vec3 cam_pos = cam.position();
    for (const auto& tg : scene.teacher) {
        const TbnpFrame& f = scene.tbnp[frame][tg.patch];
        GaussianPrimitive prim;
        prim.mean = f.rotation() * tg.local_pos + f.position();
        prim.scale = tg.scale;
        prim.quat = quat_multiply(rotation_to_quat(f.rotation()), tg.local_quat);
        prim.opacity = tg.opacity;
        const Vec3 view = (cam_pos - prim.mean).normalized();
        const double facing = std::max(0.0, f.rotation().col(2).dot(view));
        Vec3 color = tg.base_color + tg.stripe_color * tg.shape_key.dot(beta) +
                     Vec3::Ones() * (tg.sheen * facing * facing);
        prim.color = color.cwiseMax(0.0).cwiseMin(1.0);
        prims.push_back(prim);
    }
    return prims;
}

Image render_teacher(const SyntheticScene& scene, int frame, int camera, Image* mask) {
    const Camera& cam = scene.cameras.at(camera);
    RenderOutput out = rasterize(teacher_gaussians(scene, frame, cam), cam,
                                 scene.cfg.background);
    if (mask) {
        *mask = Image(cam.width, cam.height, 1);
        for (size_t i = 0; i < out.alpha.data.size(); ++i)
            mask->data[i] = out.alpha.data[i] > 0.5 ? 1.0 : 0.0;
    }
    return std::move(out.image);
}

Dataset scene_to_dataset(const SyntheticScene& scene) {
    Dataset d;
    d.layout = scene.layout;
    d.meshes = scene.frames;
    d.tbnp = scene.tbnp;
    d.weights = scene.weights;
    d.cameras = scene.cameras;
    d.heldout_cameras = {0};
    for (int c = 1; c < scene.cfg.cameras; ++c) d.train_cameras.push_back(c);
    d.background = scene.cfg.background;
    for (int t = 0; t < scene.cfg.frames; ++t)
        for (int c = 0; c < scene.cfg.cameras; ++c) {
            Image mask;
            d.images.push_back(render_teacher(scene, t, c, &mask));
            d.masks.push_back(std::move(mask));
        }
    d.validate();
    return d;
}

void write_synthetic_dataset(const SyntheticScene& scene, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir + "/images");
    fs::create_directories(out_dir + "/masks");

    nlohmann::json manifest;
    save_layout(out_dir + "/layout.json", scene.layout);
    manifest["layout"] = "layout.json";

    manifest["shapes"] = nlohmann::json::array();
    for (size_t k = 0; k < scene.shapes.size(); ++k) {
        const std::string name = "shape_" + std::to_string(k) + ".obj";
        save_obj(out_dir + "/" + name, scene.shapes[k]);
        manifest["shapes"].push_back(name);
    }
    manifest["meshes"] = nlohmann::json::array();
    for (size_t t = 0; t < scene.frames.size(); ++t) {
        const std::string name = "frame_" + std::to_string(t) + ".obj";
        save_obj(out_dir + "/" + name, scene.frames[t]);
        manifest["meshes"].push_back(name);
    }

    save_blendweights(out_dir + "/weights_true.bin", scene.weights);
    manifest["blendweights"] = "weights_true.bin";

    manifest["cameras"] = nlohmann::json::array();
    for (size_t c = 0; c < scene.cameras.size(); ++c) {
        const std::string name = "camera_" + std::to_string(c) + ".json";
        save_camera(scene.cameras[c], out_dir + "/" + name);
        manifest["cameras"].push_back(name);
    }
    manifest["train_cameras"] = nlohmann::json::array();
    for (int c = 1; c < scene.cfg.cameras; ++c) manifest["train_cameras"].push_back(c);
    manifest["heldout_cameras"] = {0};
    manifest["width"] = scene.cfg.width;
    manifest["height"] = scene.cfg.height;
    manifest["background"] = {scene.cfg.background[0], scene.cfg.background[1],
                              scene.cfg.background[2]};

    manifest["images"] = nlohmann::json::array();
    manifest["masks"] = nlohmann::json::array();
    for (int t = 0; t < scene.cfg.frames; ++t) {
        nlohmann::json img_row = nlohmann::json::array();
        nlohmann::json mask_row = nlohmann::json::array();
        for (int c = 0; c < scene.cfg.cameras; ++c) {
            Image mask;
            Image img = render_teacher(scene, t, c, &mask);
            char name[64];
            std::snprintf(name, sizeof(name), "images/f%03d_c%02d.bin", t, c);
            save_image_f32(out_dir + "/" + name, img);
            img_row.push_back(name);
            std::snprintf(name, sizeof(name), "masks/f%03d_c%02d.bin", t, c);
            save_image_f32(out_dir + "/" + name, mask);
            mask_row.push_back(name);
            if (t == 0) {
                std::snprintf(name, sizeof(name), "preview_c%02d.png", c);
                save_image_png(out_dir + "/" + name, img);
            }
        }
        manifest["images"].push_back(img_row);
        manifest["masks"].push_back(mask_row);
    }
    write_text_file(out_dir + "/dataset.json", manifest.dump(2) + "\n");
}

}  // namespace avatar
