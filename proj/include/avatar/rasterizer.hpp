#pragma once

#include "avatar/gaussian.hpp"
#include "avatar/image.hpp"

#include <vector>

namespace avatar {

inline constexpr int kTileSize = 16;
inline constexpr double kTransmittanceFloor = 1e-4;  // compositing stops below this
inline constexpr double kFootprintSigma = 3.0;       // tile-binning radius cutoff

// Forward result plus everything the backward pass needs.
struct RenderOutput {
    Image image;  // H x W x 3, [0,1] colors composited over background
    Image alpha;  // H x W x 1, accumulated alpha (1 - final transmittance)

    Vec3 background = Vec3::Zero();
    int tiles_x = 0, tiles_y = 0;
    std::vector<ProjectedGaussian> projected;     // per input primitive
    std::vector<std::vector<int>> tile_lists;     // per tile, depth-sorted, ties by index
};

struct RenderGrads {
    std::vector<Vec3> mean, scale, color;
    std::vector<Vec4> quat;
    std::vector<double> opacity;
    // per-primitive gradient magnitudes consumed by the densification logic
    std::vector<double> color_grad_norm;   // ‖dL/dc‖
    std::vector<double> mean2d_grad_norm;  // ‖dL/d(2D mean)‖, pixels
};

// Depth-sorted front-to-back alpha compositing over 16x16 tiles. Primitives
// behind the near plane are culled. Errors on any non-finite attribute.
RenderOutput rasterize(const std::vector<GaussianPrimitive>& prims, const Camera& cam,
                       const Vec3& background);

// Analytic gradients of a scalar loss with image gradient `image_grad`
// (H x W x 3) w.r.t. every primitive attribute. Requires the forward output
// for the same primitive array.
RenderGrads rasterize_backward(const std::vector<GaussianPrimitive>& prims, const Camera& cam,
                               const RenderOutput& fwd, const Image& image_grad);

}  // namespace avatar
