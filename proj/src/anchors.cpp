#include "avatar/anchors.hpp"

#include "avatar/rng.hpp"
#include "avatar/tensor_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace avatar {

std::vector<std::vector<int>> AnchorSet::patch_lists() const {
    std::vector<std::vector<int>> lists(patch_count);
    for (int i = 0; i < count(); ++i) lists[parent_patch[i]].push_back(i);
    return lists;
}

void AnchorSet::validate() const {
    const int n = count();
    require(static_cast<int>(parent_patch.size()) == n &&
                static_cast<int>(scale_param.size()) == n &&
                static_cast<int>(alpha.size()) == n && features.rows() == n &&
                features.cols() == feature_dim,
            "anchor arrays out of sync");
    std::vector<char> seen(patch_count, 0);
    for (int p : parent_patch) {
        require(p >= 0 && p < patch_count, "anchor parent patch out of range");
        seen[p] = 1;
    }
    for (int p = 0; p < patch_count; ++p)
        require(seen[p], "patch " + std::to_string(p) + " has no anchors");
}

AnchorSet init_anchors(const PatchLayout& layout, const Mesh& neutral, int per_patch,
                       uint64_t seed) {
    require(per_patch >= 1, "per_patch must be >= 1");
    const int p_count = static_cast<int>(layout.patches.size());
    require(p_count >= 1, "layout has no patches");

    // mean nearest-neighbor spacing of patch centers sets the initial scale
    std::vector<Vec3> centers(p_count);
    for (int p = 0; p < p_count; ++p) {
        int c = layout.patches[p].center;
        require(c >= 0 && c < static_cast<int>(neutral.vertices.size()),
                "layout is missing patch centers");
        centers[p] = neutral.vertices[c];
    }
    double spacing = 0.05;
    if (p_count > 1) {
        double total = 0;
        for (int p = 0; p < p_count; ++p) {
            double best = std::numeric_limits<double>::infinity();
            for (int q = 0; q < p_count; ++q)
                if (q != p) best = std::min(best, (centers[p] - centers[q]).norm());
            total += best;
        }
        spacing = total / p_count;
    }
    const double raw_scale = softplus_inverse(spacing);

    AnchorSet a;
    a.patch_count = p_count;
    const int n = p_count * per_patch;
    a.parent_patch.reserve(n);
    a.mu.reserve(n);
    a.features = MatX::Zero(n, a.feature_dim);
    Pcg32 rng(seed);
    for (int p = 0; p < p_count; ++p) {
        for (int j = 0; j < per_patch; ++j) {
            a.parent_patch.push_back(p);
            Vec3 mu = Vec3::Zero();
            if (j > 0)
                mu = {rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01),
                      rng.uniform(-0.01, 0.01)};
            a.mu.push_back(mu);
            a.scale_param.push_back(Vec3::Constant(raw_scale));
            a.alpha.push_back(1.0);
            int row = static_cast<int>(a.mu.size()) - 1;
            for (int k = 0; k < a.feature_dim; ++k)
                a.features(row, k) = rng.uniform(-0.01, 0.01);
        }
    }
    a.grad_acc.assign(n, 0.0);
    a.obs_count.assign(n, 0);
    a.opacity_sum.assign(n, 0.0);
    a.validate();
    return a;
}

std::vector<Vec3> anchors_to_global(const AnchorSet& anchors,
                                    const std::vector<TbnpFrame>& frames) {
    require(static_cast<int>(frames.size()) == anchors.patch_count,
            "one TBNP frame per patch required");
    std::vector<Vec3> out(anchors.count());
    for (int i = 0; i < anchors.count(); ++i)
        out[i] = to_global(frames[anchors.parent_patch[i]], anchors.mu[i]);
    return out;
}

std::vector<char> visible_anchors(const AnchorSet& anchors, const std::vector<TbnpFrame>& frames,
                                  const Camera& cam, double tau) {
    std::vector<Vec3> global = anchors_to_global(anchors, frames);
    std::vector<char> mask(anchors.count(), 0);
    const double mx = 0.1 * cam.width, my = 0.1 * cam.height;
    for (int i = 0; i < anchors.count(); ++i) {
        if (sigmoid(anchors.alpha[i]) <= tau) continue;
        Vec3 t = cam.to_camera(global[i]);
        if (t.z() <= cam.near) continue;
        double px = cam.fx * t.x() / t.z() + cam.cx;
        double py = cam.fy * t.y() / t.z() + cam.cy;
        if (px < -mx || px > cam.width + mx || py < -my || py > cam.height + my) continue;
        mask[i] = 1;
    }
    return mask;
}

void accumulate_color_gradient(AnchorSet& anchors, const std::vector<int>& visible_ids,
                               const std::vector<double>& per_gaussian_grad_norms,
                               const std::vector<Vec3>& local_offsets, int gaussians_per_anchor) {
    require(gaussians_per_anchor >= 1, "gaussians_per_anchor must be >= 1");
    require(per_gaussian_grad_norms.size() ==
                    visible_ids.size() * static_cast<size_t>(gaussians_per_anchor) &&
            local_offsets.size() == per_gaussian_grad_norms.size(),
            "per-gaussian stats must cover L entries per visible anchor");
    if (anchors.gaussians_per_anchor == 0) {
        anchors.gaussians_per_anchor = gaussians_per_anchor;
        anchors.per_gaussian_grad.assign(
            static_cast<size_t>(anchors.count()) * gaussians_per_anchor, 0.0);
        anchors.last_offsets.assign(
            static_cast<size_t>(anchors.count()) * gaussians_per_anchor, Vec3::Zero());
    }
    require(anchors.gaussians_per_anchor == gaussians_per_anchor,
            "gaussians_per_anchor changed between steps");

    for (size_t v = 0; v < visible_ids.size(); ++v) {
        const int i = visible_ids[v];
        double mean = 0;
        for (int l = 0; l < gaussians_per_anchor; ++l) {
            const double g = per_gaussian_grad_norms[v * gaussians_per_anchor + l];
            mean += g;
            anchors.per_gaussian_grad[static_cast<size_t>(i) * gaussians_per_anchor + l] += g;
            anchors.last_offsets[static_cast<size_t>(i) * gaussians_per_anchor + l] =
                local_offsets[v * gaussians_per_anchor + l];
        }
        anchors.grad_acc[i] += mean / gaussians_per_anchor;
        anchors.obs_count[i] += 1;
    }
    for (int i = 0; i < anchors.count(); ++i)
        anchors.opacity_sum[i] += sigmoid(anchors.alpha[i]);
    anchors.steps_since_reset += 1;
}

DensifyResult densify_and_prune(AnchorSet& anchors, double threshold_grow,
                                double threshold_prune, uint64_t seed, int max_grow) {
    const int n = anchors.count();
    const int l = anchors.gaussians_per_anchor;

    // children first: one per anchor whose normalized statistic is high,
    // strongest candidates when a growth budget applies
    std::vector<std::pair<double, int>> candidates;
    for (int i = 0; i < n; ++i) {
        if (anchors.obs_count[i] == 0) continue;
        double stat = anchors.grad_acc[i] / anchors.obs_count[i];
        if (stat > threshold_grow) candidates.emplace_back(stat, i);
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    if (max_grow >= 0 && static_cast<int>(candidates.size()) > max_grow)
        candidates.resize(max_grow);
    std::vector<int> grow_parents;
    for (const auto& c : candidates) grow_parents.push_back(c.second);

    // prune decision on the existing anchors; children are never newborn-pruned
    std::vector<char> prune(n, 0);
    const int steps = std::max(1, anchors.steps_since_reset);
    for (int i = 0; i < n; ++i)
        if (anchors.opacity_sum[i] / steps < threshold_prune) prune[i] = 1;

    // keep-alive: a patch must not end up empty
    std::vector<char> patch_has_child(anchors.patch_count, 0);
    for (int p : grow_parents) patch_has_child[anchors.parent_patch[p]] = 1;
    for (int p = 0; p < anchors.patch_count; ++p) {
        if (patch_has_child[p]) continue;
        int best = -1;
        double best_op = -1;
        bool any_survivor = false;
        for (int i = 0; i < n; ++i) {
            if (anchors.parent_patch[i] != p) continue;
            if (!prune[i]) {
                any_survivor = true;
                break;
            }
            double op = anchors.opacity_sum[i] / steps;
            if (op > best_op) {
                best_op = op;
                best = i;
            }
        }
        if (!any_survivor && best >= 0) prune[best] = 0;
    }

    DensifyResult res;
    AnchorSet out;
    out.patch_count = anchors.patch_count;
    out.feature_dim = anchors.feature_dim;
    std::vector<int> old_rows;
    for (int i = 0; i < n; ++i) {
        if (prune[i]) {
            ++res.pruned;
            continue;
        }
        out.parent_patch.push_back(anchors.parent_patch[i]);
        out.mu.push_back(anchors.mu[i]);
        out.scale_param.push_back(anchors.scale_param[i]);
        out.alpha.push_back(anchors.alpha[i]);
        old_rows.push_back(i);
        res.new_to_old.push_back(i);
    }
    Pcg32 rng(seed);
    for (size_t c = 0; c < grow_parents.size(); ++c) {
        const int parent = grow_parents[c];
        Vec3 offset = Vec3::Zero();
        if (l > 0) {
            // place the child at the parent's highest-gradient spawned offset
            int best_slot = 0;
            double best_g = -1;
            for (int slot = 0; slot < l; ++slot) {
                double g = anchors.per_gaussian_grad[static_cast<size_t>(parent) * l + slot];
                if (g > best_g) {
                    best_g = g;
                    best_slot = slot;
                }
            }
            offset = anchors.last_offsets[static_cast<size_t>(parent) * l + best_slot];
        }
        out.parent_patch.push_back(anchors.parent_patch[parent]);
        out.mu.push_back(anchors.mu[parent] + offset);
        // the child keeps the parent's scale so its spawned Gaussians start at
        // the sizes the parent already trained; shrinking it here (e.g. the
        // classic split-halving) would push whole cohorts below the scale
        // regularizer's free band whenever the scale head compensates with a
        // small multiplier, and each growth event would stall training while
        // the penalty unwinds
        out.scale_param.push_back(anchors.scale_param[parent]);
        out.alpha.push_back(anchors.alpha[parent]);
        old_rows.push_back(-1);
        res.new_to_old.push_back(-1);
        ++res.grown;
    }

    const int m = static_cast<int>(out.parent_patch.size());
    out.features = MatX::Zero(m, out.feature_dim);
    int child = 0;
    for (int i = 0; i < m; ++i) {
        if (old_rows[i] >= 0) {
            out.features.row(i) = anchors.features.row(old_rows[i]);
        } else {
            // children inherit the parent's trained features (plus a small
            // symmetry-breaking jitter); fresh random features would feed the
            // attribute heads inputs far off the training manifold and spawn
            // degenerate Gaussians
            out.features.row(i) = anchors.features.row(grow_parents[child++]);
            for (int k = 0; k < out.feature_dim; ++k)
                out.features(i, k) += rng.uniform(-0.01, 0.01);
        }
    }
    out.grad_acc.assign(m, 0.0);
    out.obs_count.assign(m, 0);
    out.opacity_sum.assign(m, 0.0);
    out.steps_since_reset = 0;
    out.gaussians_per_anchor = l;
    if (l > 0) {
        out.per_gaussian_grad.assign(static_cast<size_t>(m) * l, 0.0);
        out.last_offsets.assign(static_cast<size_t>(m) * l, Vec3::Zero());
    }
    out.validate();
    anchors = std::move(out);
    return res;
}

void save_anchors(const AnchorSet& anchors, const std::string& prefix) {
    anchors.validate();
    const int n = anchors.count();
    std::vector<double> mu(static_cast<size_t>(n) * 3), sc(static_cast<size_t>(n) * 3);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) {
            mu[static_cast<size_t>(i) * 3 + k] = anchors.mu[i][k];
            sc[static_cast<size_t>(i) * 3 + k] = anchors.scale_param[i][k];
        }
    std::vector<double> feat(static_cast<size_t>(n) * anchors.feature_dim);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < anchors.feature_dim; ++k)
            feat[static_cast<size_t>(i) * anchors.feature_dim + k] = anchors.features(i, k);
    std::vector<uint32_t> parents(anchors.parent_patch.begin(), anchors.parent_patch.end());

    save_f32(prefix + ".mu.bin", mu);
    save_f32(prefix + ".scale.bin", sc);
    save_f32(prefix + ".alpha.bin", anchors.alpha);
    save_f32(prefix + ".feat.bin", feat);
    save_u32(prefix + ".patch.bin", parents);

    nlohmann::json j;
    j["anchor_count"] = n;
    j["feature_dim"] = anchors.feature_dim;
    j["patch_count"] = anchors.patch_count;
    write_text_file(prefix + ".json", j.dump(2) + "\n");
}

AnchorSet load_anchors(const std::string& prefix) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(prefix + ".json"));
    const int n = j.at("anchor_count").get<int>();
    AnchorSet a;
    a.feature_dim = j.at("feature_dim").get<int>();
    a.patch_count = j.at("patch_count").get<int>();

    auto mu = load_f32(prefix + ".mu.bin", static_cast<size_t>(n) * 3);
    auto sc = load_f32(prefix + ".scale.bin", static_cast<size_t>(n) * 3);
    a.alpha = load_f32(prefix + ".alpha.bin", static_cast<size_t>(n));
    auto feat = load_f32(prefix + ".feat.bin", static_cast<size_t>(n) * a.feature_dim);
    auto parents = load_u32(prefix + ".patch.bin", static_cast<size_t>(n));

    a.mu.resize(n);
    a.scale_param.resize(n);
    a.features = MatX::Zero(n, a.feature_dim);
    a.parent_patch.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            a.mu[i][k] = mu[static_cast<size_t>(i) * 3 + k];
            a.scale_param[i][k] = sc[static_cast<size_t>(i) * 3 + k];
        }
        for (int k = 0; k < a.feature_dim; ++k)
            a.features(i, k) = feat[static_cast<size_t>(i) * a.feature_dim + k];
        a.parent_patch[i] = static_cast<int>(parents[i]);
    }
    a.grad_acc.assign(n, 0.0);
    a.obs_count.assign(n, 0);
    a.opacity_sum.assign(n, 0.0);
    a.validate();
    return a;
}

}  // namespace avatar
