#include "avatar/model.hpp"

#include "avatar/rng.hpp"
#include "avatar/tensor_io.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>

namespace avatar {

namespace {

MlpSpec encoder_spec(int in, int hidden, int out, int instances) {
    MlpSpec s;
    s.widths = {in, hidden, out};
    s.activations = {Activation::Relu, Activation::None};
    s.instance_count = instances;
    return s;
}

MlpSpec attr_spec(int in, int hidden, int out, Activation last, int instances = 1) {
    MlpSpec s;
    s.widths = {in, hidden, out};
    s.activations = {Activation::Relu, last};
    s.instance_count = instances;
    return s;
}

}  // namespace

void AvatarModel::validate() const {
    const int in = cfg.attr_input_dim();
    const int l = cfg.gaussians_per_anchor;
    require(cfg.patch_count >= 1 && cfg.shape_count >= 2 && l >= 1, "bad model config");
    if (cfg.use_patch_expressions) {
        require(patch_encoders.has_value(), "patch encoders missing");
        require(patch_encoders->spec.widths ==
                    std::vector<int>({cfg.shape_count - 1, cfg.hidden, cfg.expr_dim}),
                "patch encoder widths mismatch");
        require(patch_encoders->spec.instance_count == cfg.patch_count,
                "patch encoder instance count mismatch");
    } else {
        require(!patch_encoders.has_value(), "patch encoders present but disabled");
    }
    require(global_encoder.spec.widths ==
                std::vector<int>(
                    {cfg.patch_count * (cfg.shape_count - 1), cfg.hidden, cfg.expr_dim}),
            "global encoder widths mismatch");
    require(f_mu.spec.widths == std::vector<int>({in, cfg.hidden, 3 * l}), "f_mu widths");
    require(f_scale.spec.widths == std::vector<int>({in, cfg.hidden, 3 * l}), "f_scale widths");
    require(f_quat.spec.widths == std::vector<int>({in, cfg.hidden, 4 * l}), "f_quat widths");
    require(f_alpha.spec.widths == std::vector<int>({in, cfg.hidden, l}), "f_alpha widths");
    require(f_color.spec.widths == std::vector<int>({in, cfg.hidden, 3 * l}), "f_color widths");
    require(f_color.spec.instance_count == (cfg.patch_color() ? cfg.patch_count : 1),
            "f_color instance count mismatch");
    require(anchors.patch_count == cfg.patch_count, "anchor patch count mismatch");
    require(anchors.feature_dim == cfg.feature_dim, "anchor feature dim mismatch");
}

AvatarModel build_model(const ModelConfig& cfg, const AnchorSet& anchors) {
    AvatarModel m;
    m.cfg = cfg;
    m.anchors = anchors;
    const int in = cfg.attr_input_dim();
    const int l = cfg.gaussians_per_anchor;
    const int kw = cfg.shape_count - 1;

    if (cfg.use_patch_expressions)
        m.patch_encoders = MlpParams::glorot_init(
            encoder_spec(kw, cfg.hidden, cfg.expr_dim, cfg.patch_count), mix_seed(cfg.seed, 1));
    m.global_encoder = MlpParams::glorot_init(
        encoder_spec(cfg.patch_count * kw, cfg.hidden, cfg.expr_dim, 1), mix_seed(cfg.seed, 2));
    m.f_mu = MlpParams::glorot_init(attr_spec(in, cfg.hidden, 3 * l, Activation::None),
                                    mix_seed(cfg.seed, 3));
    m.f_scale = MlpParams::glorot_init(attr_spec(in, cfg.hidden, 3 * l, Activation::Softplus),
                                       mix_seed(cfg.seed, 4));
    m.f_quat = MlpParams::glorot_init(attr_spec(in, cfg.hidden, 4 * l, Activation::None),
                                      mix_seed(cfg.seed, 5));
    m.f_alpha = MlpParams::glorot_init(attr_spec(in, cfg.hidden, l, Activation::Sigmoid),
                                       mix_seed(cfg.seed, 6));
    m.f_color = MlpParams::glorot_init(
        attr_spec(in, cfg.hidden, 3 * l, Activation::Sigmoid, cfg.patch_color() ? cfg.patch_count : 1),
        mix_seed(cfg.seed, 7));

    // bias the raw quaternion outputs toward identity so the normalization
    // in spawn starts well-conditioned
    for (int inst = 0; inst < m.f_quat.spec.instance_count; ++inst) {
        auto b = m.f_quat.bias(inst, m.f_quat.spec.layer_count() - 1);
        for (int slot = 0; slot < l; ++slot) b[4 * slot] = 1.0;
    }
    m.validate();
    return m;
}

ExprEncoding encode_expressions(const AvatarModel& model, const MatX& beta) {
    require(beta.rows() == model.cfg.patch_count &&
                beta.cols() == model.cfg.shape_count - 1,
            "beta must be P x (K-1)");
    ExprEncoding enc;
    enc.beta = beta;
    if (model.cfg.use_patch_expressions) {
        std::vector<int> ids(model.cfg.patch_count);
        for (int p = 0; p < model.cfg.patch_count; ++p) ids[p] = p;
        enc.e_p = mlp_forward(*model.patch_encoders, beta, &enc.cache_patch, &ids);
    }
    MatX flat(1, beta.size());
    for (int p = 0; p < beta.rows(); ++p)
        for (int i = 0; i < beta.cols(); ++i) flat(0, p * beta.cols() + i) = beta(p, i);
    MatX eg = mlp_forward(model.global_encoder, flat, &enc.cache_global);
    enc.e_g = eg.row(0).transpose();
    return enc;
}

SpawnResult spawn_gaussians(const AvatarModel& model, const ExprEncoding& enc,
                            const std::vector<TbnpFrame>& frames, const Camera& cam) {
    model.validate();
    const auto& cfg = model.cfg;
    const int l = cfg.gaussians_per_anchor;
    const int in_dim = cfg.attr_input_dim();
    const Vec3 cam_pos = cam.position();

    SpawnResult sr;
    std::vector<char> mask = visible_anchors(model.anchors, frames, cam);
    for (int i = 0; i < model.anchors.count(); ++i)
        if (mask[i]) sr.visible_ids.push_back(i);
    const int nv = static_cast<int>(sr.visible_ids.size());
    if (nv == 0) return sr;

    sr.input_mu = MatX::Zero(nv, in_dim);
    sr.input_view = MatX::Zero(nv, in_dim);
    sr.mu_glob.resize(nv);
    sr.s_anchor.resize(nv);
    sr.rot.resize(nv);
    sr.view_u.resize(nv);
    std::vector<int> color_ids(nv, 0);

    for (int v = 0; v < nv; ++v) {
        const int a = sr.visible_ids[v];
        const int p = model.anchors.parent_patch[a];
        sr.mu_glob[v] = to_global(frames[p], model.anchors.mu[a]);
        sr.s_anchor[v] = model.anchors.scale(a);
        sr.rot[v] = frames[p].rotation();
        sr.view_u[v] = sr.mu_glob[v] - cam_pos;
        require(sr.view_u[v].norm() > 0, "anchor coincides with the camera center");
        const Vec3 d_v = sr.view_u[v].normalized();

        int off = 0;
        sr.input_mu.row(v).segment(off, cfg.feature_dim) = model.anchors.features.row(a);
        off += cfg.feature_dim;
        if (cfg.use_patch_expressions) {
            sr.input_mu.row(v).segment(off, cfg.expr_dim) = enc.e_p.row(p);
            off += cfg.expr_dim;
        }
        sr.input_mu.row(v).segment(off, cfg.expr_dim) = enc.e_g.transpose();
        off += cfg.expr_dim;
        sr.input_view.row(v) = sr.input_mu.row(v);
        sr.input_mu.row(v).segment(off, 3) = model.anchors.mu[a].transpose();
        sr.input_view.row(v).segment(off, 3) = d_v.transpose();
        if (cfg.patch_color()) color_ids[v] = p;
    }

    MatX out_mu = mlp_forward(model.f_mu, sr.input_mu, &sr.cache_mu);
    MatX out_s = mlp_forward(model.f_scale, sr.input_view, &sr.cache_s);
    sr.out_q = mlp_forward(model.f_quat, sr.input_view, &sr.cache_q);
    MatX out_a = mlp_forward(model.f_alpha, sr.input_view, &sr.cache_a);
    MatX out_c = mlp_forward(model.f_color, sr.input_view, &sr.cache_c, &color_ids);

    sr.prims.resize(static_cast<size_t>(nv) * l);
    sr.mu_hat.resize(sr.prims.size());
    sr.local_offsets.resize(sr.prims.size());
    for (int v = 0; v < nv; ++v) {
        const int a = sr.visible_ids[v];
        bool finite = out_mu.row(v).allFinite() && out_s.row(v).allFinite() &&
                      sr.out_q.row(v).allFinite() && out_a.row(v).allFinite() &&
                      out_c.row(v).allFinite();
        if (!finite) fail("non-finite MLP output for anchor " + std::to_string(a));
        for (int g = 0; g < l; ++g) {
            const size_t gi = static_cast<size_t>(v) * l + g;
            GaussianPrimitive& prim = sr.prims[gi];
            const Vec3 mu_hat = out_mu.row(v).segment<3>(3 * g).transpose();
            const Vec3 s_hat = out_s.row(v).segment<3>(3 * g).transpose();
            const Vec4 q_raw = sr.out_q.row(v).segment<4>(4 * g).transpose();
            require(q_raw.norm() > 0, "zero quaternion output for anchor " + std::to_string(a));
            const Vec3 world_offset = sr.s_anchor[v].cwiseProduct(sr.rot[v] * mu_hat);
            prim.mean = sr.mu_glob[v] + world_offset;
            prim.scale = s_hat.cwiseProduct(sr.s_anchor[v]);
            prim.quat = q_raw.normalized();
            prim.opacity = out_a(v, g);
            prim.color = out_c.row(v).segment<3>(3 * g).transpose();
            sr.mu_hat[gi] = mu_hat;
            sr.local_offsets[gi] = sr.rot[v].transpose() * world_offset;
        }
    }
    return sr;
}

ModelGrads ModelGrads::zeros(const AvatarModel& model) {
    ModelGrads g;
    const int n = model.anchors.count();
    g.anchor_mu.assign(n, Vec3::Zero());
    g.anchor_scale_param.assign(n, Vec3::Zero());
    g.anchor_alpha.assign(n, 0.0);
    g.anchor_features = MatX::Zero(n, model.anchors.feature_dim);
    if (model.patch_encoders)
        g.patch_encoders.assign(model.patch_encoders->values.size(), 0.0);
    g.global_encoder.assign(model.global_encoder.values.size(), 0.0);
    g.f_mu.assign(model.f_mu.values.size(), 0.0);
    g.f_scale.assign(model.f_scale.values.size(), 0.0);
    g.f_quat.assign(model.f_quat.values.size(), 0.0);
    g.f_alpha.assign(model.f_alpha.values.size(), 0.0);
    g.f_color.assign(model.f_color.values.size(), 0.0);
    return g;
}

EncodingGrads spawn_backward(const AvatarModel& model, const SpawnResult& sr,
                             const std::vector<Vec3>& d_mean, const std::vector<Vec3>& d_scale,
                             const std::vector<Vec4>& d_quat,
                             const std::vector<double>& d_opacity,
                             const std::vector<Vec3>& d_color,
                             const std::vector<Vec3>& d_mu_hat_extra,
                             const std::vector<Vec3>& d_anchor_mu_extra, ModelGrads& grads) {
    const auto& cfg = model.cfg;
    const int l = cfg.gaussians_per_anchor;
    const int nv = static_cast<int>(sr.visible_ids.size());
    const size_t ng = sr.prims.size();
    require(d_mean.size() == ng && d_scale.size() == ng && d_quat.size() == ng &&
                d_opacity.size() == ng && d_color.size() == ng && d_mu_hat_extra.size() == ng,
            "per-gaussian gradient arrays must match spawn output");
    require(d_anchor_mu_extra.size() == static_cast<size_t>(nv),
            "per-anchor extra gradients must match visible anchors");

    EncodingGrads eg;
    eg.d_e_p = MatX::Zero(cfg.patch_count, cfg.expr_dim);
    eg.d_e_g = VecX::Zero(cfg.expr_dim);
    if (nv == 0) return eg;

    MatX d_out_mu = MatX::Zero(nv, 3 * l);
    MatX d_out_s = MatX::Zero(nv, 3 * l);
    MatX d_out_q = MatX::Zero(nv, 4 * l);
    MatX d_out_a = MatX::Zero(nv, l);
    MatX d_out_c = MatX::Zero(nv, 3 * l);
    std::vector<Vec3> d_mu_glob(nv, Vec3::Zero());
    std::vector<Vec3> d_s_anchor(nv, Vec3::Zero());

    for (int v = 0; v < nv; ++v) {
        for (int g = 0; g < l; ++g) {
            const size_t gi = static_cast<size_t>(v) * l + g;
            d_out_c.row(v).segment<3>(3 * g) += d_color[gi].transpose();
            d_out_a(v, g) += d_opacity[gi];

            // s_g = s_hat ⊙ s_anchor
            const Vec3 s_hat = sr.prims[gi].scale.cwiseQuotient(sr.s_anchor[v]);
            d_out_s.row(v).segment<3>(3 * g) +=
                d_scale[gi].cwiseProduct(sr.s_anchor[v]).transpose();
            d_s_anchor[v] += d_scale[gi].cwiseProduct(s_hat);

            // q = q_raw / ‖q_raw‖
            const Vec4 q_raw = sr.out_q.row(v).segment<4>(4 * g).transpose();
            const double qn = q_raw.norm();
            const Vec4 q = q_raw / qn;
            d_out_q.row(v).segment<4>(4 * g) +=
                ((d_quat[gi] - q * q.dot(d_quat[gi])) / qn).transpose();

            // mean = mu_glob + s_anchor ⊙ (R mu_hat)
            const Vec3 rmu = sr.rot[v] * sr.mu_hat[gi];
            d_mu_glob[v] += d_mean[gi];
            d_s_anchor[v] += d_mean[gi].cwiseProduct(rmu);
            Vec3 d_mu_hat = sr.rot[v].transpose() * d_mean[gi].cwiseProduct(sr.s_anchor[v]);
            d_mu_hat += d_mu_hat_extra[gi];
            d_out_mu.row(v).segment<3>(3 * g) += d_mu_hat.transpose();
        }
    }

    std::vector<int> color_ids(nv, 0);
    if (cfg.patch_color())
        for (int v = 0; v < nv; ++v)
            color_ids[v] = model.anchors.parent_patch[sr.visible_ids[v]];

    MatX d_in_mu = mlp_backward(model.f_mu, sr.cache_mu, d_out_mu, grads.f_mu);
    MatX d_in_view = mlp_backward(model.f_scale, sr.cache_s, d_out_s, grads.f_scale);
    d_in_view += mlp_backward(model.f_quat, sr.cache_q, d_out_q, grads.f_quat);
    d_in_view += mlp_backward(model.f_alpha, sr.cache_a, d_out_a, grads.f_alpha);
    d_in_view += mlp_backward(model.f_color, sr.cache_c, d_out_c, grads.f_color);

    const int fd = cfg.feature_dim, ed = cfg.expr_dim;
    const int pos_off = cfg.attr_input_dim() - 3;
    for (int v = 0; v < nv; ++v) {
        const int a = sr.visible_ids[v];
        const int p = model.anchors.parent_patch[a];

        // view direction d_v = u / ‖u‖ feeds back into the global position
        const Vec3 dd_v = d_in_view.row(v).segment<3>(pos_off).transpose();
        const Vec3 d = sr.view_u[v].normalized();
        d_mu_glob[v] += (dd_v - d * d.dot(dd_v)) / sr.view_u[v].norm();

        // mu_glob = R_p mu + v_p; plus the direct F_mu position input
        Vec3 d_anchor_mu = sr.rot[v].transpose() * d_mu_glob[v];
        d_anchor_mu += d_in_mu.row(v).segment<3>(pos_off).transpose();
        d_anchor_mu += d_anchor_mu_extra[v];
        grads.anchor_mu[a] += d_anchor_mu;

        // s_anchor = softplus(scale_param)
        for (int k = 0; k < 3; ++k)
            grads.anchor_scale_param[a][k] +=
                d_s_anchor[v][k] * sigmoid(model.anchors.scale_param[a][k]);

        grads.anchor_features.row(a) +=
            d_in_mu.row(v).segment(0, fd) + d_in_view.row(v).segment(0, fd);
        int off = fd;
        if (cfg.use_patch_expressions) {
            eg.d_e_p.row(p) +=
                d_in_mu.row(v).segment(off, ed) + d_in_view.row(v).segment(off, ed);
            off += ed;
        }
        eg.d_e_g += (d_in_mu.row(v).segment(off, ed) + d_in_view.row(v).segment(off, ed))
                        .transpose();
    }
    return eg;
}

void encode_backward(const AvatarModel& model, const ExprEncoding& enc,
                     const EncodingGrads& d_enc, ModelGrads& grads) {
    if (model.cfg.use_patch_expressions)
        mlp_backward(*model.patch_encoders, enc.cache_patch, d_enc.d_e_p, grads.patch_encoders);
    MatX dg = d_enc.d_e_g.transpose();
    mlp_backward(model.global_encoder, enc.cache_global, dg, grads.global_encoder);
}

void save_mlp(const MlpParams& params, const std::string& prefix) {
    save_f32(prefix + ".bin", params.values);
    nlohmann::json j;
    j["widths"] = params.spec.widths;
    std::vector<std::string> acts;
    for (auto a : params.spec.activations) acts.push_back(activation_to_string(a));
    j["activations"] = acts;
    j["instance_count"] = params.spec.instance_count;
    write_text_file(prefix + ".json", j.dump(2) + "\n");
}

MlpParams load_mlp(const std::string& prefix) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(prefix + ".json"));
    MlpSpec spec;
    spec.widths = j.at("widths").get<std::vector<int>>();
    for (const auto& a : j.at("activations").get<std::vector<std::string>>())
        spec.activations.push_back(activation_from_string(a));
    spec.instance_count = j.at("instance_count").get<int>();
    spec.validate();
    MlpParams p = MlpParams::zeros(spec);
    p.values = load_f32(prefix + ".bin", spec.param_count());
    return p;
}

void save_model(const AvatarModel& model, const std::string& dir) {
    model.validate();
    std::filesystem::create_directories(dir);
    save_anchors(model.anchors, dir + "/anchors");
    if (model.patch_encoders) save_mlp(*model.patch_encoders, dir + "/mlp_patch_enc");
    save_mlp(model.global_encoder, dir + "/mlp_global_enc");
    save_mlp(model.f_mu, dir + "/mlp_f_mu");
    save_mlp(model.f_scale, dir + "/mlp_f_scale");
    save_mlp(model.f_quat, dir + "/mlp_f_quat");
    save_mlp(model.f_alpha, dir + "/mlp_f_alpha");
    save_mlp(model.f_color, dir + "/mlp_f_color");

    nlohmann::json j;
    j["patch_count"] = model.cfg.patch_count;
    j["shape_count"] = model.cfg.shape_count;
    j["gaussians_per_anchor"] = model.cfg.gaussians_per_anchor;
    j["feature_dim"] = model.cfg.feature_dim;
    j["expr_dim"] = model.cfg.expr_dim;
    j["hidden"] = model.cfg.hidden;
    j["use_patch_expressions"] = model.cfg.use_patch_expressions;
    j["use_patch_color_mlp"] = model.cfg.use_patch_color_mlp;
    j["seed"] = model.cfg.seed;
    write_text_file(dir + "/model.json", j.dump(2) + "\n");
}

AvatarModel load_model(const std::string& dir) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(dir + "/model.json"));
    AvatarModel m;
    m.cfg.patch_count = j.at("patch_count").get<int>();
    m.cfg.shape_count = j.at("shape_count").get<int>();
    m.cfg.gaussians_per_anchor = j.at("gaussians_per_anchor").get<int>();
    m.cfg.feature_dim = j.at("feature_dim").get<int>();
    m.cfg.expr_dim = j.at("expr_dim").get<int>();
    m.cfg.hidden = j.at("hidden").get<int>();
    m.cfg.use_patch_expressions = j.at("use_patch_expressions").get<bool>();
    m.cfg.use_patch_color_mlp = j.at("use_patch_color_mlp").get<bool>();
    m.cfg.seed = j.at("seed").get<uint64_t>();

    m.anchors = load_anchors(dir + "/anchors");
    if (m.cfg.use_patch_expressions) m.patch_encoders = load_mlp(dir + "/mlp_patch_enc");
    m.global_encoder = load_mlp(dir + "/mlp_global_enc");
    m.f_mu = load_mlp(dir + "/mlp_f_mu");
    m.f_scale = load_mlp(dir + "/mlp_f_scale");
    m.f_quat = load_mlp(dir + "/mlp_f_quat");
    m.f_alpha = load_mlp(dir + "/mlp_f_alpha");
    m.f_color = load_mlp(dir + "/mlp_f_color");
    m.validate();
    return m;
}

}  // namespace avatar
