#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avatar {

// Row-major H x W x C image, values nominally in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Raw little-endian f32 dump, shape from the caller's manifest. Used for
// metric computation so PNG quantization never enters PSNR.
void save_image_f32(const std::string& path, const Image& img);
Image load_image_f32(const std::string& path, int width, int height, int channels);

// 8-bit PNG for viewing (RGB or gray). Values clamped to [0,1].
void save_image_png(const std::string& path, const Image& img);

// 2x box downsample, exact mean of each 2x2 block. Requires even dims.
Image downsample2x(const Image& img);

// Repeated 2x downsample by a power-of-two factor.
Image downsample_pow2(const Image& img, int factor);

// Extract a channel subset (e.g. RGB from RGBA).
Image slice_channels(const Image& img, int first, int count);

// Axis-aligned sub-image; the rectangle must lie inside the image.
Image crop(const Image& img, int x0, int y0, int w, int h);

// PSNR over masked pixels (mask: HxWx1, >0.5 means included). Peak = 1.
// Identical images report the 99 dB sentinel.
double psnr(const Image& a, const Image& b, const Image* mask = nullptr);

}  // namespace avatar
