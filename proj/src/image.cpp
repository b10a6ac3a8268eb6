#include "avatar/image.hpp"

#include "avatar/core.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace avatar {

void save_image_f32(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open for write: " + path);
    std::vector<float> buf(img.data.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(img.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(out.good(), "write failed: " + path);
}

Image load_image_f32(const std::string& path, int width, int height, int channels) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: " + path);
    Image img(width, height, channels);
    std::vector<float> buf(img.data.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(buf.size() * sizeof(float)),
            "short read (wrong shape?): " + path);
    for (size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
    return img;
}

void save_image_png(const std::string& path, const Image& img) {
    require(img.channels == 1 || img.channels == 3, "png write supports 1 or 3 channels");
    FILE* fp = std::fopen(path.c_str(), "wb");
    require(fp != nullptr, "cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        fail("libpng error writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double v = img.at(y, x, c);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                row[static_cast<size_t>(x) * img.channels + c] = static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Image downsample2x(const Image& img) {
    require(img.width % 2 == 0 && img.height % 2 == 0, "downsample2x needs even dimensions");
    Image out(img.width / 2, img.height / 2, img.channels);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = 0.25 * (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) +
                                          img.at(2 * y + 1, 2 * x, c) + img.at(2 * y + 1, 2 * x + 1, c));
    return out;
}

Image downsample_pow2(const Image& img, int factor) {
    require(factor >= 1 && (factor & (factor - 1)) == 0, "factor must be a power of two");
    Image out = img;
    for (int f = factor; f > 1; f /= 2) out = downsample2x(out);
    return out;
}

Image slice_channels(const Image& img, int first, int count) {
    require(first + count <= img.channels, "channel slice out of range");
    Image out(img.width, img.height, count);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < count; ++c) out.at(y, x, c) = img.at(y, x, first + c);
    return out;
}

Image crop(const Image& img, int x0, int y0, int w, int h) {
    require(x0 >= 0 && y0 >= 0 && w >= 1 && h >= 1 && x0 + w <= img.width && y0 + h <= img.height,
            "crop rectangle out of range");
    Image out(w, h, img.channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return out;
}

double psnr(const Image& a, const Image& b, const Image* mask) {
    require(a.same_shape(b), "psnr: shape mismatch");
    if (mask) require(mask->width == a.width && mask->height == a.height && mask->channels == 1, "psnr: bad mask");
    double se = 0.0;
    long n = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (mask && mask->at(y, x, 0) <= 0.5) continue;
            for (int c = 0; c < a.channels; ++c) {
                double d = a.at(y, x, c) - b.at(y, x, c);
                se += d * d;
                ++n;
            }
        }
    }
    if (n == 0) return 0.0;
    double mse = se / static_cast<double>(n);
    if (mse <= 0.0) return 99.0;
    double v = 10.0 * std::log10(1.0 / mse);
    return v > 99.0 ? 99.0 : v;
}

}  // namespace avatar
