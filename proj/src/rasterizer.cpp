#include "avatar/rasterizer.hpp"

#include "avatar/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace avatar {

namespace {

void validate_primitives(const std::vector<GaussianPrimitive>& prims) {
    for (size_t i = 0; i < prims.size(); ++i) {
        const auto& p = prims[i];
        bool ok = p.mean.allFinite() && p.scale.allFinite() && p.quat.allFinite() &&
                  p.color.allFinite() && std::isfinite(p.opacity);
        if (!ok) fail("non-finite attribute in primitive " + std::to_string(i));
        require((p.scale.array() > 0).all(),
                "non-positive scale in primitive " + std::to_string(i));
    }
}

// Inclusive tile range covered by the 3-sigma box of a footprint.
struct TileRange {
    int x0, x1, y0, y1;
    bool empty() const { return x0 > x1 || y0 > y1; }
};

TileRange tile_range(const ProjectedGaussian& pg, int tiles_x, int tiles_y) {
    double mid = 0.5 * (pg.cov2d(0, 0) + pg.cov2d(1, 1));
    double disc = std::sqrt(std::max(0.0, mid * mid - pg.cov2d.determinant()));
    double radius = kFootprintSigma * std::sqrt(std::max(1e-12, mid + disc));
    TileRange r;
    r.x0 = std::max(0, static_cast<int>(std::floor((pg.mean2d.x() - radius) / kTileSize)));
    r.x1 = std::min(tiles_x - 1, static_cast<int>(std::floor((pg.mean2d.x() + radius) / kTileSize)));
    r.y0 = std::max(0, static_cast<int>(std::floor((pg.mean2d.y() - radius) / kTileSize)));
    r.y1 = std::min(tiles_y - 1, static_cast<int>(std::floor((pg.mean2d.y() + radius) / kTileSize)));
    return r;
}

struct PixelHit {
    int prim;      // global primitive index
    double alpha;  // effective alpha after the footprint falloff
    double gauss;  // exp(-0.5 d^T conic d)
    Vec2 d;        // pixel center minus 2D mean
};

}  // namespace

RenderOutput rasterize(const std::vector<GaussianPrimitive>& prims, const Camera& cam,
                       const Vec3& background) {
    cam.validate();
    validate_primitives(prims);

    RenderOutput out;
    out.background = background;
    out.image = Image(cam.width, cam.height, 3);
    out.alpha = Image(cam.width, cam.height, 1);
    out.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
    out.tiles_y = (cam.height + kTileSize - 1) / kTileSize;

    out.projected.assign(prims.size(), ProjectedGaussian{});
    for (size_t i = 0; i < prims.size(); ++i) {
        Vec3 t = cam.to_camera(prims[i].mean);
        if (t.z() <= cam.near) continue;  // culled
        out.projected[i] = project(prims[i], cam);
    }

    out.tile_lists.assign(static_cast<size_t>(out.tiles_x) * out.tiles_y, {});
    for (size_t i = 0; i < prims.size(); ++i) {
        const auto& pg = out.projected[i];
        if (!pg.valid) continue;
        TileRange r = tile_range(pg, out.tiles_x, out.tiles_y);
        if (r.empty()) continue;
        for (int ty = r.y0; ty <= r.y1; ++ty)
            for (int tx = r.x0; tx <= r.x1; ++tx)
                out.tile_lists[static_cast<size_t>(ty) * out.tiles_x + tx].push_back(
                    static_cast<int>(i));
    }

    const int n_tiles = out.tiles_x * out.tiles_y;
    parallel_for(n_tiles, [&](int tile) {
        auto& list = out.tile_lists[tile];
        std::sort(list.begin(), list.end(), [&](int a, int b) {
            double da = out.projected[a].depth, db = out.projected[b].depth;
            return da < db || (da == db && a < b);
        });

        const int tx = tile % out.tiles_x, ty = tile / out.tiles_x;
        const int x0 = tx * kTileSize, y0 = ty * kTileSize;
        const int x1 = std::min(cam.width, x0 + kTileSize);
        const int y1 = std::min(cam.height, y0 + kTileSize);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const Vec2 pix(x + 0.5, y + 0.5);
                Vec3 c = Vec3::Zero();
                double transmittance = 1.0, acc_alpha = 0.0;
                for (int idx : list) {
                    const auto& pg = out.projected[idx];
                    const Vec2 d = pix - pg.mean2d;
                    const double power = 0.5 * d.dot(pg.conic * d);
                    const double a =
                        std::clamp(prims[idx].opacity, 0.0, 1.0) * std::exp(-power);
                    c += prims[idx].color.cwiseMax(0.0).cwiseMin(1.0) * a * transmittance;
                    acc_alpha += a * transmittance;
                    transmittance *= 1.0 - a;
                    if (transmittance < kTransmittanceFloor) break;
                }
                c += background * transmittance;
                for (int ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = c[ch];
                out.alpha.at(y, x, 0) = acc_alpha;
            }
        }
    });
    return out;
}

RenderGrads rasterize_backward(const std::vector<GaussianPrimitive>& prims, const Camera& cam,
                               const RenderOutput& fwd, const Image& image_grad) {
    require(!fwd.tile_lists.empty() || prims.empty(), "forward buffers missing");
    require(fwd.projected.size() == prims.size(), "forward buffers do not match primitives");
    require(image_grad.width == cam.width && image_grad.height == cam.height &&
                image_grad.channels == 3,
            "image gradient must be H x W x 3");

    const size_t n = prims.size();
    RenderGrads g;
    g.mean.assign(n, Vec3::Zero());
    g.scale.assign(n, Vec3::Zero());
    g.color.assign(n, Vec3::Zero());
    g.quat.assign(n, Vec4::Zero());
    g.opacity.assign(n, 0.0);
    g.color_grad_norm.assign(n, 0.0);
    g.mean2d_grad_norm.assign(n, 0.0);

    const int n_tiles = fwd.tiles_x * fwd.tiles_y;
    // Tile-local accumulators: gradients w.r.t. color, effective-alpha inputs
    // (2D mean, conic, opacity), keyed by position in the tile list. Reduced
    // in fixed tile order afterwards for determinism.
    struct TileGrads {
        std::vector<Vec3> color;
        std::vector<Vec2> mean2d;
        std::vector<Mat2> conic;
        std::vector<double> opacity;
    };
    std::vector<TileGrads> tile_grads(n_tiles);

    parallel_for(n_tiles, [&](int tile) {
        const auto& list = fwd.tile_lists[tile];
        auto& tg = tile_grads[tile];
        tg.color.assign(list.size(), Vec3::Zero());
        tg.mean2d.assign(list.size(), Vec2::Zero());
        tg.conic.assign(list.size(), Mat2::Zero());
        tg.opacity.assign(list.size(), 0.0);
        if (list.empty()) return;

        const int tx = tile % fwd.tiles_x, ty = tile / fwd.tiles_x;
        const int x0 = tx * kTileSize, y0 = ty * kTileSize;
        const int x1 = std::min(cam.width, x0 + kTileSize);
        const int y1 = std::min(cam.height, y0 + kTileSize);

        std::vector<PixelHit> hits;
        std::vector<double> trans;  // transmittance in front of each hit
        std::vector<int> list_pos;
        hits.reserve(list.size());
        trans.reserve(list.size());
        list_pos.reserve(list.size());

        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const Vec3 dpix(image_grad.at(y, x, 0), image_grad.at(y, x, 1),
                                image_grad.at(y, x, 2));
                if (dpix.isZero(0.0)) continue;
                const Vec2 pix(x + 0.5, y + 0.5);

                // Replay the forward walk to collect contributors in order.
                hits.clear();
                trans.clear();
                list_pos.clear();
                double transmittance = 1.0;
                for (size_t li = 0; li < list.size(); ++li) {
                    const int idx = list[li];
                    const auto& pg = fwd.projected[idx];
                    const Vec2 d = pix - pg.mean2d;
                    const double power = 0.5 * d.dot(pg.conic * d);
                    const double gauss = std::exp(-power);
                    const double a = std::clamp(prims[idx].opacity, 0.0, 1.0) * gauss;
                    hits.push_back({idx, a, gauss, d});
                    trans.push_back(transmittance);
                    list_pos.push_back(static_cast<int>(li));
                    transmittance *= 1.0 - a;
                    if (transmittance < kTransmittanceFloor) break;
                }

                // Back-to-front: `behind` is the color composited behind hit k,
                // so dC/dalpha_k = T_k (c_k - behind) with no division by
                // (1 - alpha), which stays exact even at alpha = 1.
                Vec3 behind = fwd.background;
                for (int k = static_cast<int>(hits.size()) - 1; k >= 0; --k) {
                    const auto& h = hits[k];
                    const Vec3 c = prims[h.prim].color.cwiseMax(0.0).cwiseMin(1.0);
                    const double t_k = trans[k];
                    tg.color[list_pos[k]] += dpix * h.alpha * t_k;
                    const double dalpha = t_k * (c - behind).dot(dpix);
                    const double opac = std::clamp(prims[h.prim].opacity, 0.0, 1.0);
                    tg.opacity[list_pos[k]] += dalpha * h.gauss;
                    // alpha = opac * exp(-0.5 d^T A d): chain to 2D mean and conic
                    const double dpower = -dalpha * opac * h.gauss;
                    const auto& pg = fwd.projected[h.prim];
                    const Vec2 ad = pg.conic * h.d;
                    tg.mean2d[list_pos[k]] += -dpower * ad;  // d = pix - mean2d
                    Mat2 dconic;
                    dconic << 0.5 * h.d.x() * h.d.x(), 0.5 * h.d.x() * h.d.y(),
                              0.5 * h.d.x() * h.d.y(), 0.5 * h.d.y() * h.d.y();
                    tg.conic[list_pos[k]] += dpower * dconic;
                    behind = c * h.alpha + (1.0 - h.alpha) * behind;
                }
            }
        }
    });

    // Deterministic reduction into per-primitive screen-space gradients.
    std::vector<Vec3> d_color(n, Vec3::Zero());
    std::vector<Vec2> d_mean2d(n, Vec2::Zero());
    std::vector<Mat2> d_conic(n, Mat2::Zero());
    std::vector<double> d_opacity(n, 0.0);
    for (int tile = 0; tile < n_tiles; ++tile) {
        const auto& list = fwd.tile_lists[tile];
        const auto& tg = tile_grads[tile];
        for (size_t li = 0; li < list.size(); ++li) {
            const int idx = list[li];
            d_color[idx] += tg.color[li];
            d_mean2d[idx] += tg.mean2d[li];
            d_conic[idx] += tg.conic[li];
            d_opacity[idx] += tg.opacity[li];
        }
    }

    // Geometry chain: conic -> 2D covariance -> (camera-space position,
    // world covariance) -> (mean, scale, quaternion).
    parallel_for(static_cast<int>(n), [&](int i) {
        const auto& pg = fwd.projected[i];
        g.color[i] = d_color[i];
        g.color_grad_norm[i] = d_color[i].norm();
        g.mean2d_grad_norm[i] = d_mean2d[i].norm();
        if (!pg.valid) return;
        g.opacity[i] = d_opacity[i];

        // conic = cov2d^-1  =>  dL/dcov2d = -conic dL/dconic conic
        Mat2 dconic_sym = 0.5 * (d_conic[i] + d_conic[i].transpose());
        Mat2 dcov2d = -pg.conic * dconic_sym * pg.conic;

        const Vec3 t = pg.t_cam;
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / t.z(), 0, -cam.fx * t.x() / (t.z() * t.z()),
               0, cam.fy / t.z(), -cam.fy * t.y() / (t.z() * t.z());
        const Mat3 w = cam.rotation();
        const Eigen::Matrix<double, 2, 3> u = jac * w;
        const Mat3 sigma = covariance(prims[i].scale, prims[i].quat);

        // cov2d = u sigma u^T + blur
        const Mat3 dsigma = u.transpose() * dcov2d * u;
        const Eigen::Matrix<double, 2, 3> du = 2.0 * dcov2d * u * sigma;
        const Eigen::Matrix<double, 2, 3> djac = du * w.transpose();

        // Jacobian entries depend on camera-space position t.
        Vec3 dt = Vec3::Zero();
        const double tz = t.z(), tz2 = tz * tz, tz3 = tz2 * tz;
        dt.x() += djac(0, 2) * (-cam.fx / tz2);
        dt.y() += djac(1, 2) * (-cam.fy / tz2);
        dt.z() += djac(0, 0) * (-cam.fx / tz2) + djac(1, 1) * (-cam.fy / tz2) +
                  djac(0, 2) * (2.0 * cam.fx * t.x() / tz3) +
                  djac(1, 2) * (2.0 * cam.fy * t.y() / tz3);

        // 2D mean = (fx tx/tz + cx, fy ty/tz + cy)
        dt.x() += d_mean2d[i].x() * cam.fx / tz;
        dt.y() += d_mean2d[i].y() * cam.fy / tz;
        dt.z() += -(d_mean2d[i].x() * cam.fx * t.x() + d_mean2d[i].y() * cam.fy * t.y()) / tz2;

        g.mean[i] = w.transpose() * dt;

        // sigma = R diag(s^2) R^T
        const Vec4 qn = prims[i].quat.normalized();
        const Mat3 rot = quat_to_rotation(qn);
        const Mat3 dsigma_sym = 0.5 * (dsigma + dsigma.transpose());
        for (int k = 0; k < 3; ++k)
            g.scale[i][k] =
                2.0 * prims[i].scale[k] * rot.col(k).dot(dsigma_sym * rot.col(k));
        const Mat3 drot =
            2.0 * dsigma_sym * rot * prims[i].scale.array().square().matrix().asDiagonal();
        const auto dr_dq = quat_rotation_jacobian(qn);
        Vec4 dq_unit;
        for (int k = 0; k < 4; ++k) dq_unit[k] = (drot.array() * dr_dq[k].array()).sum();
        // through the internal normalization q_hat = q / ‖q‖
        const double qnorm = prims[i].quat.norm();
        g.quat[i] = (dq_unit - qn * qn.dot(dq_unit)) / qnorm;
    });

    return g;
}

}  // namespace avatar
