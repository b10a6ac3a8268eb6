#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avatar {

// Little-endian f32 / u32 blobs. Shapes live in the JSON manifest owned by
// whichever module writes the container.
void save_f32(const std::string& path, const std::vector<double>& values);
std::vector<double> load_f32(const std::string& path, size_t expected_count);

void save_u32(const std::string& path, const std::vector<uint32_t>& values);
std::vector<uint32_t> load_u32(const std::string& path, size_t expected_count);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// Blendweight container: T x P x (K-1) f32 tensor + manifest {T,P,K}.
// `path` is the .bin; the manifest lands next to it as <path>.json.
struct BlendweightSequence {
    int frames = 0;      // T
    int patches = 0;     // P
    int shape_count = 0; // K
    std::vector<double> values;  // T*P*(K-1), frame-major then patch

    int coeffs() const { return shape_count - 1; }
    double at(int t, int p, int i) const {
        return values[(static_cast<size_t>(t) * patches + p) * coeffs() + i];
    }
    double& at(int t, int p, int i) {
        return values[(static_cast<size_t>(t) * patches + p) * coeffs() + i];
    }
};

void save_blendweights(const std::string& bin_path, const BlendweightSequence& bw);
BlendweightSequence load_blendweights(const std::string& bin_path);

}  // namespace avatar
