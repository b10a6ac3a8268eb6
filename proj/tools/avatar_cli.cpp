// Command-line front end: synthetic data generation, blendweight fitting,
// training, rendering and evaluation of patch-conditioned Gaussian avatars.

#include "avatar/pbs.hpp"
#include "avatar/synthetic.hpp"
#include "avatar/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

using namespace avatar;

namespace {

SyntheticConfig& parse_synthetic(CLI::App* cmd, std::string& out_dir) {
    static SyntheticConfig cfg;
    cmd->add_option("--out", out_dir, "output dataset directory")->required();
    cmd->add_option("--patches", cfg.patch_count, "patch count");
    cmd->add_option("--shapes", cfg.shape_count, "shape count K (neutral included)");
    cmd->add_option("--frames", cfg.frames, "sequence length");
    cmd->add_option("--cameras", cfg.cameras, "camera ring size (camera 0 held out)");
    cmd->add_option("--width", cfg.width, "image width");
    cmd->add_option("--height", cfg.height, "image height");
    cmd->add_option("--subdivisions", cfg.subdivisions, "icosphere refinement level");
    cmd->add_option("--teacher-per-patch", cfg.gaussians_per_patch,
                    "ground-truth Gaussians per patch");
    cmd->add_option("--seed", cfg.seed, "rng seed");
    return cfg;
}

std::vector<Mesh> load_shape_meshes(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    const fs::path root = fs::path(manifest_path).parent_path();
    nlohmann::json j = nlohmann::json::parse(read_text_file(manifest_path));
    require(j.contains("shapes"), "dataset manifest has no shape meshes to fit against");
    std::vector<Mesh> shapes;
    for (const auto& p : j.at("shapes"))
        shapes.push_back(load_obj((root / p.get<std::string>()).string()));
    return shapes;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-conditioned Gaussian avatar toolkit"};
    app.require_subcommand(1);

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "generate a procedural head dataset");
    std::string gen_out;
    SyntheticConfig& gen_cfg = parse_synthetic(gen, gen_out);

    // fit-pbs
    auto* fit = app.add_subcommand("fit-pbs", "fit per-patch blendweights to a mesh sequence");
    std::string fit_dataset, fit_out;
    PbsWeights fit_weights;
    fit->add_option("--dataset", fit_dataset, "dataset manifest JSON")->required();
    fit->add_option("--out", fit_out, "output blendweight .bin")->required();
    fit->add_option("--lambda-reg", fit_weights.lambda_reg, "sparsity weight");
    fit->add_option("--lambda-overlap", fit_weights.lambda_o, "neighbor consistency weight");

    // train
    auto* train = app.add_subcommand("train", "optimize an avatar against a dataset");
    std::string train_dataset, train_out, train_config;
    int train_iterations = 10000;
    uint64_t train_seed = 1;
    bool by_position = false, no_patch_expr = false, no_patch_color = false;
    train->add_option("--dataset", train_dataset, "dataset manifest JSON")->required();
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--config", train_config, "training config JSON (overrides defaults)");
    train->add_option("--iterations", train_iterations, "iteration count");
    train->add_option("--seed", train_seed, "rng seed");
    train->add_flag("--densify-by-position", by_position,
                    "rank densification by 2D position gradients instead of color");
    train->add_flag("--no-patch-expressions", no_patch_expr,
                    "disable per-patch expression encoders");
    train->add_flag("--no-patch-color", no_patch_color, "share one color head across patches");

    // render
    auto* render = app.add_subcommand("render", "render a checkpoint");
    std::string render_ckpt, render_dataset, render_png, render_f32;
    int render_frame = 0, render_camera = 0, render_divisor = 1;
    render->add_option("--checkpoint", render_ckpt, "checkpoint directory")->required();
    render->add_option("--dataset", render_dataset, "dataset manifest JSON")->required();
    render->add_option("--frame", render_frame, "frame index");
    render->add_option("--camera", render_camera, "camera index");
    render->add_option("--divisor", render_divisor, "resolution divisor (power of two)");
    render->add_option("--out", render_png, "output PNG")->required();
    render->add_option("--out-f32", render_f32, "optional raw f32 dump");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on held-out cameras");
    std::string eval_ckpt, eval_dataset, eval_out;
    std::vector<int> eval_cameras;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint directory")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "dataset manifest JSON")->required();
    eval_cmd->add_option("--cameras", eval_cameras, "camera ids (default: held-out set)");
    eval_cmd->add_option("--out", eval_out, "optional report JSON");

    // info
    auto* info = app.add_subcommand("info", "describe a checkpoint");
    std::string info_ckpt;
    info->add_option("--checkpoint", info_ckpt, "checkpoint directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            SyntheticScene scene = make_synthetic_scene(gen_cfg);
            write_synthetic_dataset(scene, gen_out);
            std::printf("wrote %d frames x %d cameras at %dx%d to %s\n", gen_cfg.frames,
                        gen_cfg.cameras, gen_cfg.width, gen_cfg.height, gen_out.c_str());
        } else if (fit->parsed()) {
            Dataset data = load_dataset(fit_dataset);
            PatchBlendshapeBasis basis = build_basis(load_shape_meshes(fit_dataset), data.layout);
            std::vector<PbsSolveResult> fits = solve_sequence(basis, data.meshes, fit_weights);
            BlendweightSequence out;
            out.frames = data.frame_count();
            out.patches = basis.patch_count();
            out.shape_count = basis.shape_count;
            out.values.assign(static_cast<size_t>(out.frames) * out.patches * out.coeffs(), 0.0);
            for (int t = 0; t < out.frames; ++t) {
                for (int p = 0; p < out.patches; ++p)
                    for (int i = 0; i < out.coeffs(); ++i)
                        out.at(t, p, i) = fits[t].beta(p, i);
                std::printf("frame %d: %d iterations, energy %.6g\n", t, fits[t].iterations,
                            fits[t].final_energy.total);
            }
            save_blendweights(fit_out, out);
        } else if (train->parsed()) {
            TrainConfig cfg;
            if (train_config.empty()) {
                cfg = TrainConfig::defaults(train_iterations);
            } else {
                cfg = load_train_config(train_config);
                if (train->count("--iterations")) cfg.iterations = train_iterations;
            }
            cfg.seed = train_seed;
            cfg.densify_by_position = by_position;
            cfg.use_patch_expressions = !no_patch_expr;
            cfg.use_patch_color_mlp = !no_patch_color;

            Dataset data = load_dataset(train_dataset);
            ModelConfig mc;
            mc.patch_count = data.layout.patch_count();
            mc.shape_count = data.weights.shape_count;
            mc.gaussians_per_anchor = cfg.gaussians_per_anchor;
            mc.use_patch_expressions = cfg.use_patch_expressions;
            mc.use_patch_color_mlp = cfg.use_patch_color_mlp;
            mc.seed = cfg.seed;
            AnchorSet anchors = init_anchors(data.layout, data.meshes[0], cfg.anchors_per_patch,
                                             mix_seed(cfg.seed, 0xa0c0));
            Trainer trainer(build_model(mc, anchors), data, cfg);
            std::filesystem::create_directories(train_out);
            save_train_config(trainer.config(), train_out + "/train_config.json");
            trainer.run(train_out);
            std::printf("finished %d iterations; outputs in %s\n", cfg.iterations,
                        train_out.c_str());
        } else if (render->parsed()) {
            AvatarModel model = load_model(render_ckpt);
            Dataset data = load_dataset(render_dataset);
            Image img = render_view(model, data, render_frame, render_camera, render_divisor);
            save_image_png(render_png, img);
            if (!render_f32.empty()) save_image_f32(render_f32, img);
        } else if (eval_cmd->parsed()) {
            AvatarModel model = load_model(eval_ckpt);
            Dataset data = load_dataset(eval_dataset);
            if (eval_cameras.empty()) eval_cameras = data.heldout_cameras;
            EvalReport rep = evaluate(model, data, eval_cameras);
            std::printf("mean PSNR %.4f dB, mean SSIM %.5f over %zu views\n", rep.mean_psnr,
                        rep.mean_ssim, rep.views.size());
            if (!eval_out.empty()) save_eval_report(rep, eval_out);
        } else if (info->parsed()) {
            AvatarModel model = load_model(info_ckpt);
            std::printf("patches %d, anchors %d, gaussians/anchor %d\n", model.cfg.patch_count,
                        model.anchors.count(), model.cfg.gaussians_per_anchor);
            std::printf("expression conditioning: %s, color head: %s\n",
                        model.cfg.use_patch_expressions ? "per-patch + global" : "global only",
                        model.cfg.patch_color() ? "per-patch" : "shared");
            auto lists = model.anchors.patch_lists();
            int lo = model.anchors.count(), hi = 0;
            for (const auto& l : lists) {
                lo = std::min(lo, static_cast<int>(l.size()));
                hi = std::max(hi, static_cast<int>(l.size()));
            }
            std::printf("anchors per patch: min %d, max %d\n", lo, hi);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
