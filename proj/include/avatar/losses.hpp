#pragma once

#include "avatar/core.hpp"
#include "avatar/image.hpp"

#include <functional>
#include <vector>

namespace avatar {

struct LossWeights {
    double lambda_ssim = 0.2;    // SSIM share inside the image loss
    double lambda_patch = 0.01;
    double lambda_xyz = 0.001;
    double lambda_scale = 0.01;
};

// Structural similarity over an 11x11 Gaussian window (sigma = 1.5),
// zero-padded borders, standard constants for unit dynamic range.
double ssim(const Image& a, const Image& b);

// (1-lambda) L1 + lambda (1 - SSIM); returns the gradient w.r.t. `rendered`.
double loss_rgb(const Image& rendered, const Image& target, double lambda, Image* grad);

// Perceptual distance on a window pair; accumulates d(distance)/d(a) scaled by
// `grad_scale` into `grad_a` (same size as a) when grad_a is non-null.
using PerceptualDistance = std::function<double(const Image& a, const Image& b, Image* grad_a,
                                                double grad_scale)>;

// Default perceptual distance: L1 between gradient-magnitude maps at three
// dyadic scales.
double gradient_magnitude_distance(const Image& a, const Image& b, Image* grad_a,
                                   double grad_scale);

// Mean perceptual distance over `window_count` square windows whose centers
// are sampled uniformly from mask pixels (mask > 0.5). Falls back to one
// full-image distance when the image cannot fit a window.
double loss_patch(const Image& rendered, const Image& target, const Image& mask,
                  int window_count, int window_size, uint64_t seed, Image* grad,
                  const PerceptualDistance& distance = gradient_magnitude_distance);

// Sum of Euclidean norms of anchor-local positions and spawned offsets.
double loss_xyz(const std::vector<Vec3>& anchor_mu, const std::vector<Vec3>& gaussian_offsets,
                std::vector<Vec3>* grad_mu, std::vector<Vec3>* grad_offsets);

// Per scalar scale s: 1/max(s,1e-7) below 0.1, (s-10)^2 above 10, else 0.
double loss_scale(const std::vector<double>& scales, std::vector<double>* grad);

// Raw (unweighted) per-term values; the weighted sum is the training loss.
struct LossBreakdown {
    double rgb = 0, patch = 0, xyz = 0, scale = 0;
    double weighted_total(const LossWeights& w) const {
        return rgb + w.lambda_patch * patch + w.lambda_xyz * xyz + w.lambda_scale * scale;
    }
};

}  // namespace avatar
