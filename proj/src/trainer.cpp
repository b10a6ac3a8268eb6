#include "avatar/trainer.hpp"

#include "avatar/rasterizer.hpp"
#include "avatar/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace avatar {

TrainConfig TrainConfig::defaults(int iterations) {
    TrainConfig cfg;
    cfg.iterations = iterations;
    cfg.stages = {{0, 4},
                  {static_cast<int>(std::lround(0.20 * iterations)), 2},
                  {static_cast<int>(std::lround(0.55 * iterations)), 1}};
    return cfg;
}

void TrainConfig::validate() const {
    require(iterations >= 1, "iterations must be >= 1");
    require(!stages.empty() && stages.front().start_iteration == 0,
            "stage schedule must start at iteration 0");
    for (size_t i = 1; i < stages.size(); ++i)
        require(stages[i].start_iteration > stages[i - 1].start_iteration,
                "stage schedule must be strictly increasing");
    for (const auto& s : stages) {
        require(s.resolution_divisor >= 1 &&
                    (s.resolution_divisor & (s.resolution_divisor - 1)) == 0,
                "resolution divisor must be a power of two");
    }
    require(loss_weights.lambda_ssim >= 0 && loss_weights.lambda_ssim <= 1,
            "lambda (SSIM mix) must be in [0,1]");
    require(densify_interval >= 1 && anchors_per_patch >= 1 && gaussians_per_anchor >= 1,
            "bad densify/model configuration");
}

namespace {

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    int iterations = 10000;
    maybe_get(j, "iterations", iterations);
    TrainConfig cfg = TrainConfig::defaults(iterations);
    if (j.contains("stages")) {
        cfg.stages.clear();
        for (const auto& s : j.at("stages"))
            cfg.stages.push_back({s.at("start_iteration").get<int>(),
                                  s.at("resolution_divisor").get<int>()});
    }
    maybe_get(j, "densify_start", cfg.densify_start);
    maybe_get(j, "densify_interval", cfg.densify_interval);
    maybe_get(j, "densify_grow_threshold", cfg.densify_grow_threshold);
    maybe_get(j, "densify_prune_threshold", cfg.densify_prune_threshold);
    maybe_get(j, "max_anchors", cfg.max_anchors);
    maybe_get(j, "densify_by_position", cfg.densify_by_position);
    maybe_get(j, "anchors_per_patch", cfg.anchors_per_patch);
    maybe_get(j, "lambda_ssim", cfg.loss_weights.lambda_ssim);
    maybe_get(j, "lambda_patch", cfg.loss_weights.lambda_patch);
    maybe_get(j, "lambda_xyz", cfg.loss_weights.lambda_xyz);
    maybe_get(j, "lambda_scale", cfg.loss_weights.lambda_scale);
    maybe_get(j, "visibility_tau", cfg.visibility_tau);
    maybe_get(j, "patch_window_count", cfg.patch_window_count);
    maybe_get(j, "patch_window_divisor", cfg.patch_window_divisor);
    maybe_get(j, "lr_anchor_mu", cfg.lr_anchor_mu);
    maybe_get(j, "lr_anchor_scale", cfg.lr_anchor_scale);
    maybe_get(j, "lr_anchor_alpha", cfg.lr_anchor_alpha);
    maybe_get(j, "lr_anchor_feat", cfg.lr_anchor_feat);
    maybe_get(j, "lr_f_mu", cfg.lr_f_mu);
    maybe_get(j, "lr_f_alpha", cfg.lr_f_alpha);
    maybe_get(j, "lr_f_quat", cfg.lr_f_quat);
    maybe_get(j, "lr_f_scale", cfg.lr_f_scale);
    maybe_get(j, "lr_f_color", cfg.lr_f_color);
    maybe_get(j, "lr_encoders", cfg.lr_encoders);
    maybe_get(j, "lr_half_life", cfg.lr_half_life);
    maybe_get(j, "gaussians_per_anchor", cfg.gaussians_per_anchor);
    maybe_get(j, "use_patch_expressions", cfg.use_patch_expressions);
    maybe_get(j, "use_patch_color_mlp", cfg.use_patch_color_mlp);
    maybe_get(j, "checkpoint_interval", cfg.checkpoint_interval);
    maybe_get(j, "eval_interval", cfg.eval_interval);
    maybe_get(j, "log_interval", cfg.log_interval);
    maybe_get(j, "seed", cfg.seed);
    cfg.validate();
    return cfg;
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
    nlohmann::json j;
    j["iterations"] = cfg.iterations;
    j["stages"] = nlohmann::json::array();
    for (const auto& s : cfg.stages)
        j["stages"].push_back({{"start_iteration", s.start_iteration},
                               {"resolution_divisor", s.resolution_divisor}});
    j["densify_start"] = cfg.densify_start;
    j["densify_interval"] = cfg.densify_interval;
    j["densify_grow_threshold"] = cfg.densify_grow_threshold;
    j["densify_prune_threshold"] = cfg.densify_prune_threshold;
    j["max_anchors"] = cfg.max_anchors;
    j["densify_by_position"] = cfg.densify_by_position;
    j["anchors_per_patch"] = cfg.anchors_per_patch;
    j["lambda_ssim"] = cfg.loss_weights.lambda_ssim;
    j["lambda_patch"] = cfg.loss_weights.lambda_patch;
    j["lambda_xyz"] = cfg.loss_weights.lambda_xyz;
    j["lambda_scale"] = cfg.loss_weights.lambda_scale;
    j["visibility_tau"] = cfg.visibility_tau;
    j["patch_window_count"] = cfg.patch_window_count;
    j["patch_window_divisor"] = cfg.patch_window_divisor;
    j["lr_anchor_mu"] = cfg.lr_anchor_mu;
    j["lr_anchor_scale"] = cfg.lr_anchor_scale;
    j["lr_anchor_alpha"] = cfg.lr_anchor_alpha;
    j["lr_anchor_feat"] = cfg.lr_anchor_feat;
    j["lr_f_mu"] = cfg.lr_f_mu;
    j["lr_f_alpha"] = cfg.lr_f_alpha;
    j["lr_f_quat"] = cfg.lr_f_quat;
    j["lr_f_scale"] = cfg.lr_f_scale;
    j["lr_f_color"] = cfg.lr_f_color;
    j["lr_encoders"] = cfg.lr_encoders;
    j["lr_half_life"] = cfg.lr_half_life;
    j["gaussians_per_anchor"] = cfg.gaussians_per_anchor;
    j["use_patch_expressions"] = cfg.use_patch_expressions;
    j["use_patch_color_mlp"] = cfg.use_patch_color_mlp;
    j["checkpoint_interval"] = cfg.checkpoint_interval;
    j["eval_interval"] = cfg.eval_interval;
    j["log_interval"] = cfg.log_interval;
    j["seed"] = cfg.seed;
    write_text_file(path, j.dump(2) + "\n");
}

MatX Dataset::beta(int t) const {
    MatX b(weights.patches, weights.coeffs());
    for (int p = 0; p < weights.patches; ++p)
        for (int i = 0; i < weights.coeffs(); ++i) b(p, i) = weights.at(t, p, i);
    return b;
}

void Dataset::validate() const {
    const int t = frame_count(), c = camera_count();
    require(t >= 1 && c >= 1, "dataset needs frames and cameras");
    require(static_cast<int>(tbnp.size()) == t, "TBNP frames missing");
    require(weights.frames == t, "blendweight frame count mismatch");
    require(weights.patches == static_cast<int>(layout.patches.size()),
            "blendweight patch count mismatch");
    require(static_cast<int>(images.size()) == t * c && images.size() == masks.size(),
            "image/mask table mismatch");
    for (int cam : train_cameras) require(cam >= 0 && cam < c, "train camera out of range");
    for (int cam : heldout_cameras) require(cam >= 0 && cam < c, "held-out camera out of range");
    require(!train_cameras.empty(), "no training cameras");
    for (int cam : train_cameras)
        require(std::find(heldout_cameras.begin(), heldout_cameras.end(), cam) ==
                    heldout_cameras.end(),
                "train/held-out split must be disjoint");
}

Dataset load_dataset(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    const fs::path root = fs::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) { return (root / p).string(); };

    nlohmann::json j = nlohmann::json::parse(read_text_file(manifest_path));
    Dataset d;
    d.layout = load_layout(resolve(j.at("layout").get<std::string>()));

    for (const auto& mp : j.at("meshes")) d.meshes.push_back(load_obj(resolve(mp)));
    require(!d.meshes.empty(), "dataset has no meshes");
    for (auto& m : d.meshes) {
        require(m.vertices.size() == d.meshes[0].vertices.size(),
                "mesh sequence topology mismatch");
    }
    bool has_centers = true;
    for (const auto& p : d.layout.patches) has_centers = has_centers && p.center >= 0;
    if (!has_centers) compute_patch_centers(d.meshes[0], d.layout);
    for (const auto& m : d.meshes) d.tbnp.push_back(compute_tbnp(m, d.layout));

    d.weights = load_blendweights(resolve(j.at("blendweights").get<std::string>()));
    for (const auto& cp : j.at("cameras")) d.cameras.push_back(load_camera(resolve(cp)));
    d.train_cameras = j.at("train_cameras").get<std::vector<int>>();
    d.heldout_cameras = j.at("heldout_cameras").get<std::vector<int>>();

    const int width = j.at("width").get<int>();
    const int height = j.at("height").get<int>();
    auto bg = j.at("background").get<std::vector<double>>();
    require(bg.size() == 3, "background must be RGB");
    d.background = Vec3(bg[0], bg[1], bg[2]);

    const auto& images = j.at("images");
    const auto& masks = j.at("masks");
    require(images.size() == d.meshes.size() && masks.size() == d.meshes.size(),
            "image table must have one row per frame");
    for (size_t t = 0; t < images.size(); ++t) {
        require(images[t].size() == d.cameras.size() && masks[t].size() == d.cameras.size(),
                "image table must have one column per camera");
        for (size_t c = 0; c < d.cameras.size(); ++c) {
            d.images.push_back(load_image_f32(resolve(images[t][c]), width, height, 3));
            d.masks.push_back(load_image_f32(resolve(masks[t][c]), width, height, 1));
        }
    }
    d.validate();
    return d;
}

Camera scale_camera(const Camera& cam, int divisor) {
    require(divisor >= 1 && (divisor & (divisor - 1)) == 0, "divisor must be a power of two");
    require(cam.width % divisor == 0 && cam.height % divisor == 0,
            "camera resolution not divisible by stage divisor");
    Camera out = cam;
    out.fx /= divisor;
    out.fy /= divisor;
    out.cx /= divisor;
    out.cy /= divisor;
    out.width /= divisor;
    out.height /= divisor;
    return out;
}

Image render_view(const AvatarModel& model, const Dataset& data, int frame, int camera,
                  int divisor) {
    Camera cam = scale_camera(data.cameras[camera], divisor);
    ExprEncoding enc = encode_expressions(model, data.beta(frame));
    SpawnResult sr = spawn_gaussians(model, enc, data.tbnp[frame], cam);
    return rasterize(sr.prims, cam, data.background).image;
}

namespace {

// SSIM on the mask's bounding box (windowed SSIM has no exact masked form).
double masked_ssim(const Image& a, const Image& b, const Image& mask) {
    int x0 = mask.width, x1 = -1, y0 = mask.height, y1 = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x, 0) > 0.5) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    if (x1 < x0) return ssim(a, b);
    Image ca = crop(a, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    Image cb = crop(b, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
    return ssim(ca, cb);
}

}  // namespace

EvalReport evaluate(const AvatarModel& model, const Dataset& data,
                    const std::vector<int>& camera_ids) {
    EvalReport rep;
    for (int cam : camera_ids) {
        require(cam >= 0 && cam < data.camera_count(), "missing camera " + std::to_string(cam));
        for (int t = 0; t < data.frame_count(); ++t) {
            Image rendered = render_view(model, data, t, cam);
            EvalView v;
            v.frame = t;
            v.camera = cam;
            v.psnr = psnr(rendered, data.image(t, cam), &data.mask(t, cam));
            v.ssim = masked_ssim(rendered, data.image(t, cam), data.mask(t, cam));
            rep.views.push_back(v);
        }
    }
    require(!rep.views.empty(), "nothing to evaluate");
    for (const auto& v : rep.views) {
        rep.mean_psnr += v.psnr;
        rep.mean_ssim += v.ssim;
    }
    rep.mean_psnr /= static_cast<double>(rep.views.size());
    rep.mean_ssim /= static_cast<double>(rep.views.size());
    return rep;
}

void save_eval_report(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["mean_psnr"] = report.mean_psnr;
    j["mean_ssim"] = report.mean_ssim;
    j["views"] = nlohmann::json::array();
    for (const auto& v : report.views)
        j["views"].push_back(
            {{"frame", v.frame}, {"camera", v.camera}, {"psnr", v.psnr}, {"ssim", v.ssim}});
    write_text_file(path, j.dump(2) + "\n");
}

Trainer::Trainer(AvatarModel model, const Dataset& data, TrainConfig cfg)
    : model_(std::move(model)), data_(data), cfg_(std::move(cfg)) {
    cfg_.validate();
    data_.validate();
    model_.validate();

    const double decay = std::pow(0.5, 1.0 / cfg_.lr_half_life);
    auto add = [&](const std::string& name, size_t n, double lr) {
        opt_.emplace(name, AdamState::make(n, lr, decay));
    };
    const size_t na = model_.anchors.count();
    add("anchor_mu", na * 3, cfg_.lr_anchor_mu);
    add("anchor_scale", na * 3, cfg_.lr_anchor_scale);
    add("anchor_alpha", na, cfg_.lr_anchor_alpha);
    add("anchor_feat", na * model_.anchors.feature_dim, cfg_.lr_anchor_feat);
    if (model_.patch_encoders)
        add("patch_enc", model_.patch_encoders->values.size(), cfg_.lr_encoders);
    add("global_enc", model_.global_encoder.values.size(), cfg_.lr_encoders);
    add("f_mu", model_.f_mu.values.size(), cfg_.lr_f_mu);
    add("f_scale", model_.f_scale.values.size(), cfg_.lr_f_scale);
    add("f_quat", model_.f_quat.values.size(), cfg_.lr_f_quat);
    add("f_alpha", model_.f_alpha.values.size(), cfg_.lr_f_alpha);
    add("f_color", model_.f_color.values.size(), cfg_.lr_f_color);
}

int Trainer::stage_divisor(int iteration) const {
    int div = cfg_.stages.front().resolution_divisor;
    for (const auto& s : cfg_.stages)
        if (iteration >= s.start_iteration) div = s.resolution_divisor;
    return div;
}

bool Trainer::final_stage(int iteration) const {
    return iteration >= cfg_.stages.back().start_iteration;
}

namespace {

void flatten3(const std::vector<Vec3>& v, std::vector<double>& out) {
    out.resize(v.size() * 3);
    for (size_t i = 0; i < v.size(); ++i)
        for (int k = 0; k < 3; ++k) out[i * 3 + k] = v[i][k];
}

void unflatten3(const std::vector<double>& in, std::vector<Vec3>& v) {
    for (size_t i = 0; i < v.size(); ++i)
        for (int k = 0; k < 3; ++k) v[i][k] = in[i * 3 + k];
}

}  // namespace

void Trainer::apply_gradients(const ModelGrads& grads) {
    std::vector<double> buf, gbuf;

    flatten3(model_.anchors.mu, buf);
    flatten3(grads.anchor_mu, gbuf);
    opt_.at("anchor_mu").step(buf, gbuf, "anchor_mu");
    unflatten3(buf, model_.anchors.mu);

    flatten3(model_.anchors.scale_param, buf);
    flatten3(grads.anchor_scale_param, gbuf);
    opt_.at("anchor_scale").step(buf, gbuf, "anchor_scale");
    unflatten3(buf, model_.anchors.scale_param);

    opt_.at("anchor_alpha").step(model_.anchors.alpha, grads.anchor_alpha, "anchor_alpha");

    const int fd = model_.anchors.feature_dim;
    buf.resize(model_.anchors.count() * static_cast<size_t>(fd));
    gbuf.resize(buf.size());
    for (int i = 0; i < model_.anchors.count(); ++i)
        for (int k = 0; k < fd; ++k) {
            buf[static_cast<size_t>(i) * fd + k] = model_.anchors.features(i, k);
            gbuf[static_cast<size_t>(i) * fd + k] = grads.anchor_features(i, k);
        }
    opt_.at("anchor_feat").step(buf, gbuf, "anchor_feat");
    for (int i = 0; i < model_.anchors.count(); ++i)
        for (int k = 0; k < fd; ++k)
            model_.anchors.features(i, k) = buf[static_cast<size_t>(i) * fd + k];

    if (model_.patch_encoders)
        opt_.at("patch_enc").step(model_.patch_encoders->values, grads.patch_encoders,
                                  "patch_enc");
    opt_.at("global_enc").step(model_.global_encoder.values, grads.global_encoder, "global_enc");
    opt_.at("f_mu").step(model_.f_mu.values, grads.f_mu, "f_mu");
    opt_.at("f_scale").step(model_.f_scale.values, grads.f_scale, "f_scale");
    opt_.at("f_quat").step(model_.f_quat.values, grads.f_quat, "f_quat");
    opt_.at("f_alpha").step(model_.f_alpha.values, grads.f_alpha, "f_alpha");
    opt_.at("f_color").step(model_.f_color.values, grads.f_color, "f_color");
}

void Trainer::remap_anchor_optimizers(const std::vector<int>& new_to_old) {
    opt_.at("anchor_mu").remap(new_to_old, 3);
    opt_.at("anchor_scale").remap(new_to_old, 3);
    opt_.at("anchor_alpha").remap(new_to_old, 1);
    opt_.at("anchor_feat").remap(new_to_old, model_.anchors.feature_dim);
}

StepStats Trainer::step(int iteration) {
    const int div = stage_divisor(iteration);
    if (!decay_disabled_ && final_stage(iteration)) {
        for (auto& [name, state] : opt_) state.decay_factor = 1.0;
        decay_disabled_ = true;
    }

    const int t = iteration % data_.frame_count();
    const int cam_id =
        data_.train_cameras[(iteration / data_.frame_count()) % data_.train_cameras.size()];
    const Camera cam = scale_camera(data_.cameras[cam_id], div);
    const Image target = downsample_pow2(data_.image(t, cam_id), div);
    const Image mask = downsample_pow2(data_.mask(t, cam_id), div);

    ExprEncoding enc = encode_expressions(model_, data_.beta(t));
    SpawnResult sr = spawn_gaussians(model_, enc, data_.tbnp[t], cam);
    StepStats stats;
    stats.anchor_count = model_.anchors.count();
    stats.gaussian_count = static_cast<int>(sr.prims.size());
    if (sr.prims.empty()) return stats;

    RenderOutput fwd = rasterize(sr.prims, cam, data_.background);

    const LossWeights& w = cfg_.loss_weights;
    Image image_grad;
    stats.losses.rgb = loss_rgb(fwd.image, target, w.lambda_ssim, &image_grad);

    // a fully occluded or downsampled-away view contributes no patch loss
    const bool mask_covered =
        std::any_of(mask.data.begin(), mask.data.end(), [](double v) { return v > 0.5; });
    if (mask_covered) {
        Image patch_grad;
        const int window = std::max(8, cam.width / cfg_.patch_window_divisor);
        stats.losses.patch =
            loss_patch(fwd.image, target, mask, cfg_.patch_window_count, window,
                       mix_seed(cfg_.seed, 0x70617463 + static_cast<uint64_t>(iteration)),
                       &patch_grad);
        for (size_t i = 0; i < image_grad.data.size(); ++i)
            image_grad.data[i] += w.lambda_patch * patch_grad.data[i];
    }

    RenderGrads rg = rasterize_backward(sr.prims, cam, fwd, image_grad);

    // position regularizer on visible anchors and raw offsets
    std::vector<Vec3> vis_mu(sr.visible_ids.size());
    for (size_t v = 0; v < sr.visible_ids.size(); ++v)
        vis_mu[v] = model_.anchors.mu[sr.visible_ids[v]];
    std::vector<Vec3> d_vis_mu, d_mu_hat;
    stats.losses.xyz = loss_xyz(vis_mu, sr.mu_hat, &d_vis_mu, &d_mu_hat);
    for (auto& g : d_vis_mu) g *= w.lambda_xyz;
    for (auto& g : d_mu_hat) g *= w.lambda_xyz;

    // scale regularizer on the final Gaussian scales
    std::vector<double> flat_scales(sr.prims.size() * 3);
    for (size_t i = 0; i < sr.prims.size(); ++i)
        for (int k = 0; k < 3; ++k) flat_scales[i * 3 + k] = sr.prims[i].scale[k];
    std::vector<double> d_flat_scales;
    stats.losses.scale = loss_scale(flat_scales, &d_flat_scales);
    for (size_t i = 0; i < sr.prims.size(); ++i)
        for (int k = 0; k < 3; ++k) rg.scale[i][k] += w.lambda_scale * d_flat_scales[i * 3 + k];

    stats.weighted = stats.losses.weighted_total(w);
    if (!std::isfinite(stats.weighted))
        fail("non-finite loss at iteration " + std::to_string(iteration) + " (rgb=" +
             std::to_string(stats.losses.rgb) + ", patch=" + std::to_string(stats.losses.patch) +
             ", xyz=" + std::to_string(stats.losses.xyz) +
             ", scale=" + std::to_string(stats.losses.scale) + ")");

    ModelGrads grads = ModelGrads::zeros(model_);
    EncodingGrads eg = spawn_backward(model_, sr, rg.mean, rg.scale, rg.quat, rg.opacity,
                                      rg.color, d_mu_hat, d_vis_mu, grads);
    encode_backward(model_, enc, eg, grads);

    // densification statistic: color gradients, or projected-mean gradients
    // under the position ablation
    const auto& stat = cfg_.densify_by_position ? rg.mean2d_grad_norm : rg.color_grad_norm;
    accumulate_color_gradient(model_.anchors, sr.visible_ids, stat, sr.local_offsets,
                              model_.cfg.gaussians_per_anchor);

    apply_gradients(grads);

    if (iteration + 1 >= cfg_.densify_start &&
        (iteration + 1 - cfg_.densify_start) % cfg_.densify_interval == 0) {
        int budget = cfg_.max_anchors > 0
                         ? std::max(0, cfg_.max_anchors - model_.anchors.count())
                         : -1;
        DensifyResult dr = densify_and_prune(
            model_.anchors, cfg_.densify_grow_threshold, cfg_.densify_prune_threshold,
            mix_seed(cfg_.seed, 0xd3a5 + static_cast<uint64_t>(iteration)), budget);
        if (dr.grown > 0 || dr.pruned > 0) remap_anchor_optimizers(dr.new_to_old);
    }
    stats.anchor_count = model_.anchors.count();
    return stats;
}

void Trainer::run(const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream log(out_dir + "/train_log.csv");
    require(log.good(), "cannot open training log");
    log << "step,l_rgb,l_patch,l_xyz,l_scale,anchors,psnr_val\n";

    double psnr_val = 0.0;
    const std::vector<int>& eval_cams =
        data_.heldout_cameras.empty() ? data_.train_cameras : data_.heldout_cameras;
    char row[256];
    for (int it = 0; it < cfg_.iterations; ++it) {
        StepStats s = step(it);
        if (cfg_.eval_interval > 0 && (it % cfg_.eval_interval == 0 || it + 1 == cfg_.iterations))
            psnr_val = evaluate(model_, data_, eval_cams).mean_psnr;
        if (it % cfg_.log_interval == 0 || it + 1 == cfg_.iterations) {
            std::snprintf(row, sizeof(row), "%d,%.9g,%.9g,%.9g,%.9g,%d,%.9g\n", it,
                          s.losses.rgb, s.losses.patch, s.losses.xyz, s.losses.scale,
                          s.anchor_count, psnr_val);
            log << row;
            log.flush();
        }
        if (cfg_.checkpoint_interval > 0 && it > 0 && it % cfg_.checkpoint_interval == 0)
            save_model(model_, out_dir + "/checkpoint_" + std::to_string(it));
    }
    save_model(model_, out_dir + "/checkpoint_final");
    EvalReport rep = evaluate(model_, data_, eval_cams);
    save_eval_report(rep, out_dir + "/eval_final.json");
}

}  // namespace avatar
