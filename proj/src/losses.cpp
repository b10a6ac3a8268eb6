#include "avatar/losses.hpp"

#include "avatar/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace avatar {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow>& gaussian_window() {
    static const std::array<double, kWindow> w = [] {
        std::array<double, kWindow> k{};
        double sum = 0;
        for (int i = 0; i < kWindow; ++i) {
            double d = i - (kWindow - 1) / 2.0;
            k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return w;
}

// Separable zero-padded convolution with the SSIM window.
Image conv_window(const Image& img) {
    const auto& w = gaussian_window();
    const int half = kWindow / 2;
    Image tmp = Image(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0;
                for (int k = 0; k < kWindow; ++k) {
                    int xx = x + k - half;
                    if (xx < 0 || xx >= img.width) continue;
                    acc += w[k] * img.at(y, xx, c);
                }
                tmp.at(y, x, c) = acc;
            }
    Image out = Image(img.width, img.height, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0;
                for (int k = 0; k < kWindow; ++k) {
                    int yy = y + k - half;
                    if (yy < 0 || yy >= img.height) continue;
                    acc += w[k] * tmp.at(yy, x, c);
                }
                out.at(y, x, c) = acc;
            }
    return out;
}

Image elementwise_product(const Image& a, const Image& b) {
    Image out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

// SSIM mean; when grad is non-null, accumulates d(meanSSIM)/d(a) * grad_scale.
double ssim_internal(const Image& a, const Image& b, Image* grad, double grad_scale) {
    require(a.width == b.width && a.height == b.height && a.channels == b.channels,
            "ssim: image dimensions differ");
    Image mu_x = conv_window(a);
    Image mu_y = conv_window(b);
    Image sxx = conv_window(elementwise_product(a, a));
    Image syy = conv_window(elementwise_product(b, b));
    Image sxy = conv_window(elementwise_product(a, b));

    const size_t n = a.data.size();
    double mean_s = 0;
    Image g_mu, g_sxx, g_sxy;
    if (grad) {
        g_mu = Image(a.width, a.height, a.channels);
        g_sxx = g_mu;
        g_sxy = g_mu;
    }
    for (size_t i = 0; i < n; ++i) {
        const double mx = mu_x.data[i], my = mu_y.data[i];
        const double vx = sxx.data[i] - mx * mx;
        const double vy = syy.data[i] - my * my;
        const double cxy = sxy.data[i] - mx * my;
        const double a1 = 2 * mx * my + kC1, a2 = 2 * cxy + kC2;
        const double b1 = mx * mx + my * my + kC1, b2 = vx + vy + kC2;
        const double s = (a1 * a2) / (b1 * b2);
        mean_s += s;
        if (grad) {
            const double inv = 1.0 / (b1 * b2);
            g_mu.data[i] = 2 * my * (a2 - a1) * inv - 2 * mx * s / b1 + 2 * mx * s / b2;
            g_sxx.data[i] = -s / b2;
            g_sxy.data[i] = 2 * a1 * inv;
        }
    }
    mean_s /= static_cast<double>(n);
    if (grad) {
        const double scale = grad_scale / static_cast<double>(n);
        // correlate the map-level gradients back through the (symmetric) window
        Image c_mu = conv_window(g_mu);
        Image c_sxx = conv_window(g_sxx);
        Image c_sxy = conv_window(g_sxy);
        for (size_t i = 0; i < n; ++i)
            grad->data[i] += scale * (c_mu.data[i] + 2 * a.data[i] * c_sxx.data[i] +
                                      b.data[i] * c_sxy.data[i]);
    }
    return mean_s;
}

}  // namespace

double ssim(const Image& a, const Image& b) { return ssim_internal(a, b, nullptr, 0.0); }

double loss_rgb(const Image& rendered, const Image& target, double lambda, Image* grad) {
    require(rendered.width == target.width && rendered.height == target.height &&
                rendered.channels == target.channels,
            "loss_rgb: image dimensions differ");
    require(lambda >= 0 && lambda <= 1, "loss_rgb: lambda must be in [0,1]");
    if (grad) *grad = Image(rendered.width, rendered.height, rendered.channels);

    const size_t n = rendered.data.size();
    double l1 = 0;
    for (size_t i = 0; i < n; ++i) {
        double d = rendered.data[i] - target.data[i];
        l1 += std::abs(d);
        if (grad) grad->data[i] += (1.0 - lambda) * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) /
                                   static_cast<double>(n);
    }
    l1 /= static_cast<double>(n);

    // loss contribution lambda (1 - SSIM): gradient scale -lambda
    double s = ssim_internal(rendered, target, grad, grad ? -lambda : 0.0);
    return (1.0 - lambda) * l1 + lambda * (1.0 - s);
}

namespace {

// Gradient-magnitude map with forward differences; eps keeps it smooth at 0.
constexpr double kGradEps = 1e-12;

Image gradient_magnitude(const Image& img, Image* gx_out, Image* gy_out) {
    Image m = Image(img.width, img.height, img.channels);
    if (gx_out) *gx_out = m;
    if (gy_out) *gy_out = m;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double gx = (x + 1 < img.width) ? img.at(y, x + 1, c) - img.at(y, x, c) : 0.0;
                double gy = (y + 1 < img.height) ? img.at(y + 1, x, c) - img.at(y, x, c) : 0.0;
                m.at(y, x, c) = std::sqrt(gx * gx + gy * gy + kGradEps);
                if (gx_out) gx_out->at(y, x, c) = gx;
                if (gy_out) gy_out->at(y, x, c) = gy;
            }
    return m;
}

// Distributes a 2x-downsampled gradient back to the four source pixels.
void upsample2x_accumulate(const Image& grad_small, Image& grad_big) {
    for (int y = 0; y < grad_small.height; ++y)
        for (int x = 0; x < grad_small.width; ++x)
            for (int c = 0; c < grad_small.channels; ++c) {
                double g = grad_small.at(y, x, c) * 0.25;
                grad_big.at(2 * y, 2 * x, c) += g;
                grad_big.at(2 * y, 2 * x + 1, c) += g;
                grad_big.at(2 * y + 1, 2 * x, c) += g;
                grad_big.at(2 * y + 1, 2 * x + 1, c) += g;
            }
}

}  // namespace

double gradient_magnitude_distance(const Image& a, const Image& b, Image* grad_a,
                                   double grad_scale) {
    require(a.width == b.width && a.height == b.height && a.channels == b.channels,
            "gradient distance: image dimensions differ");
    constexpr int kScales = 3;
    std::vector<Image> pyr_a{a}, pyr_b{b};
    for (int s = 1; s < kScales; ++s) {
        if (pyr_a.back().width < 2 || pyr_a.back().height < 2) break;
        pyr_a.push_back(downsample2x(pyr_a.back()));
        pyr_b.push_back(downsample2x(pyr_b.back()));
    }

    double total = 0;
    std::vector<Image> grads;  // per-level gradient w.r.t. that level of a
    const int levels = static_cast<int>(pyr_a.size());
    for (int s = 0; s < levels; ++s) {
        Image gx, gy;
        Image ma = gradient_magnitude(pyr_a[s], &gx, &gy);
        Image mb = gradient_magnitude(pyr_b[s], nullptr, nullptr);
        const size_t n = ma.data.size();
        double l1 = 0;
        Image dm = Image(ma.width, ma.height, ma.channels);
        for (size_t i = 0; i < n; ++i) {
            double d = ma.data[i] - mb.data[i];
            l1 += std::abs(d);
            dm.data[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) /
                         (static_cast<double>(n) * levels);
        }
        total += l1 / static_cast<double>(n);
        if (grad_a) {
            // chain |.| -> magnitude -> forward differences -> pixels
            Image g = Image(ma.width, ma.height, ma.channels);
            for (int y = 0; y < ma.height; ++y)
                for (int x = 0; x < ma.width; ++x)
                    for (int c = 0; c < ma.channels; ++c) {
                        double w = dm.at(y, x, c) / ma.at(y, x, c);
                        double dgx = w * gx.at(y, x, c);
                        double dgy = w * gy.at(y, x, c);
                        if (x + 1 < ma.width) {
                            g.at(y, x + 1, c) += dgx;
                            g.at(y, x, c) -= dgx;
                        }
                        if (y + 1 < ma.height) {
                            g.at(y + 1, x, c) += dgy;
                            g.at(y, x, c) -= dgy;
                        }
                    }
            grads.push_back(std::move(g));
        }
    }
    total /= levels;

    if (grad_a) {
        // collapse the pyramid of gradients back to full resolution
        for (int s = levels - 1; s > 0; --s) upsample2x_accumulate(grads[s], grads[s - 1]);
        for (size_t i = 0; i < grad_a->data.size(); ++i)
            grad_a->data[i] += grad_scale * grads[0].data[i];
    }
    return total;
}

double loss_patch(const Image& rendered, const Image& target, const Image& mask,
                  int window_count, int window_size, uint64_t seed, Image* grad,
                  const PerceptualDistance& distance) {
    require(rendered.width == target.width && rendered.height == target.height &&
                rendered.channels == target.channels,
            "loss_patch: image dimensions differ");
    require(mask.width == rendered.width && mask.height == rendered.height &&
                mask.channels == 1,
            "loss_patch: mask must be H x W x 1");
    require(window_count >= 1 && window_size >= 2, "loss_patch: bad window configuration");
    if (grad) *grad = Image(rendered.width, rendered.height, rendered.channels);

    std::vector<std::pair<int, int>> mask_pixels;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x, 0) > 0.5) mask_pixels.emplace_back(y, x);
    require(!mask_pixels.empty(), "loss_patch: empty mask");

    if (rendered.width < window_size || rendered.height < window_size)
        return distance(rendered, target, grad, 1.0);

    Pcg32 rng(seed);
    double total = 0;
    for (int j = 0; j < window_count; ++j) {
        auto [cy, cx] = mask_pixels[rng.uniform_index(mask_pixels.size())];
        int x0 = std::clamp(cx - window_size / 2, 0, rendered.width - window_size);
        int y0 = std::clamp(cy - window_size / 2, 0, rendered.height - window_size);
        Image wa = crop(rendered, x0, y0, window_size, window_size);
        Image wb = crop(target, x0, y0, window_size, window_size);
        if (!grad) {
            total += distance(wa, wb, nullptr, 0.0);
            continue;
        }
        Image wg = Image(window_size, window_size, rendered.channels);
        total += distance(wa, wb, &wg, 1.0 / window_count);
        for (int y = 0; y < window_size; ++y)
            for (int x = 0; x < window_size; ++x)
                for (int c = 0; c < rendered.channels; ++c)
                    grad->at(y0 + y, x0 + x, c) += wg.at(y, x, c);
    }
    return total / window_count;
}

// Both regularizers average over their entries so the penalty magnitude does
// not grow with the anchor count (which densification changes by 40x over a
// run, and which would otherwise drown the image loss at a fixed weight).
double loss_xyz(const std::vector<Vec3>& anchor_mu, const std::vector<Vec3>& gaussian_offsets,
                std::vector<Vec3>* grad_mu, std::vector<Vec3>* grad_offsets) {
    double total = 0;
    if (grad_mu) grad_mu->assign(anchor_mu.size(), Vec3::Zero());
    if (grad_offsets) grad_offsets->assign(gaussian_offsets.size(), Vec3::Zero());
    if (!anchor_mu.empty()) {
        const double inv = 1.0 / static_cast<double>(anchor_mu.size());
        for (size_t i = 0; i < anchor_mu.size(); ++i) {
            double n = anchor_mu[i].norm();
            total += n * inv;
            if (grad_mu && n > 0) (*grad_mu)[i] = anchor_mu[i] * (inv / n);
        }
    }
    if (!gaussian_offsets.empty()) {
        const double inv = 1.0 / static_cast<double>(gaussian_offsets.size());
        for (size_t i = 0; i < gaussian_offsets.size(); ++i) {
            double n = gaussian_offsets[i].norm();
            total += n * inv;
            if (grad_offsets && n > 0) (*grad_offsets)[i] = gaussian_offsets[i] * (inv / n);
        }
    }
    return total;
}

double loss_scale(const std::vector<double>& scales, std::vector<double>* grad) {
    if (grad) grad->assign(scales.size(), 0.0);
    if (scales.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(scales.size());
    double total = 0;
    for (size_t i = 0; i < scales.size(); ++i) {
        const double s = scales[i];
        if (s < 0.1) {
            const double sc = std::max(s, 1e-7);
            total += inv / sc;
            if (grad && s > 1e-7) (*grad)[i] = -inv / (sc * sc);
        } else if (s > 10.0) {
            total += inv * (s - 10.0) * (s - 10.0);
            if (grad) (*grad)[i] = inv * 2.0 * (s - 10.0);
        }
    }
    return total;
}

}  // namespace avatar
