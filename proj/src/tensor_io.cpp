#include "avatar/tensor_io.hpp"

#include "avatar/core.hpp"

#include <json.hpp>

#include <fstream>

namespace avatar {

void save_f32(const std::string& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open for write: " + path);
    std::vector<float> buf(values.size());
    for (size_t i = 0; i < values.size(); ++i) buf[i] = static_cast<float>(values[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(out.good(), "write failed: " + path);
}

std::vector<double> load_f32(const std::string& path, size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: " + path);
    std::vector<float> buf(expected_count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected_count * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(expected_count * sizeof(float)),
            "short read: " + path);
    char extra;
    require(!in.read(&extra, 1), "trailing bytes in " + path);
    std::vector<double> out(expected_count);
    for (size_t i = 0; i < expected_count; ++i) out[i] = buf[i];
    return out;
}

void save_u32(const std::string& path, const std::vector<uint32_t>& values) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open for write: " + path);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(uint32_t)));
    require(out.good(), "write failed: " + path);
}

std::vector<uint32_t> load_u32(const std::string& path, size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: " + path);
    std::vector<uint32_t> buf(expected_count);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected_count * sizeof(uint32_t)));
    require(in.gcount() == static_cast<std::streamsize>(expected_count * sizeof(uint32_t)),
            "short read: " + path);
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open for write: " + path);
    out << text;
    require(out.good(), "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void save_blendweights(const std::string& bin_path, const BlendweightSequence& bw) {
    require(static_cast<int>(bw.values.size()) == bw.frames * bw.patches * bw.coeffs(),
            "blendweight tensor size does not match T*P*(K-1)");
    save_f32(bin_path, bw.values);
    nlohmann::json manifest;
    manifest["T"] = bw.frames;
    manifest["P"] = bw.patches;
    manifest["K"] = bw.shape_count;
    write_text_file(bin_path + ".json", manifest.dump(2) + "\n");
}

BlendweightSequence load_blendweights(const std::string& bin_path) {
    nlohmann::json manifest = nlohmann::json::parse(read_text_file(bin_path + ".json"));
    BlendweightSequence bw;
    bw.frames = manifest.at("T").get<int>();
    bw.patches = manifest.at("P").get<int>();
    bw.shape_count = manifest.at("K").get<int>();
    require(bw.frames >= 1 && bw.patches >= 1 && bw.shape_count >= 2, "bad blendweight manifest: " + bin_path);
    bw.values = load_f32(bin_path, static_cast<size_t>(bw.frames) * bw.patches * bw.coeffs());
    return bw;
}

}  // namespace avatar
