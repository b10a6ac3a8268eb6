#include "avatar/patch_layout.hpp"

#include "avatar/core.hpp"
#include "avatar/tensor_io.hpp"

#include <json.hpp>

#include <algorithm>

namespace avatar {

void validate_layout(const PatchLayout& layout, int vertex_count) {
    const int p_count = layout.patch_count();
    require(p_count > 0, "layout has no patches");
    for (int p = 0; p < p_count; ++p) {
        const auto& patch = layout.patches[p];
        require(!patch.vertices.empty(), "patch " + std::to_string(p) + " is empty");
        for (int v : patch.vertices)
            require(v >= 0 && v < vertex_count, "patch " + std::to_string(p) + " has invalid vertex index");
        for (int q : patch.neighbors) {
            require(q >= 0 && q < p_count && q != p, "patch " + std::to_string(p) + " has invalid neighbor");
            const auto& back = layout.patches[q].neighbors;
            require(std::find(back.begin(), back.end(), p) != back.end(),
                    "adjacency not symmetric between patches " + std::to_string(p) + " and " + std::to_string(q));
        }
        if (patch.center >= 0)
            require(std::find(patch.vertices.begin(), patch.vertices.end(), patch.center) != patch.vertices.end(),
                    "center of patch " + std::to_string(p) + " is not a member vertex");
    }
}

PatchLayout load_layout(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    PatchLayout layout;
    int declared = j.at("patch_count").get<int>();
    for (const auto& jp : j.at("patches")) {
        PatchLayout::Patch patch;
        patch.vertices = jp.at("vertices").get<std::vector<int>>();
        patch.neighbors = jp.at("neighbors").get<std::vector<int>>();
        if (jp.contains("center")) patch.center = jp.at("center").get<int>();
        layout.patches.push_back(std::move(patch));
    }
    require(declared == layout.patch_count(), "patch_count mismatch in " + path);
    return layout;
}

void save_layout(const std::string& path, const PatchLayout& layout) {
    nlohmann::json j;
    j["patch_count"] = layout.patch_count();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& patch : layout.patches) {
        nlohmann::json jp;
        jp["vertices"] = patch.vertices;
        jp["neighbors"] = patch.neighbors;
        if (patch.center >= 0) jp["center"] = patch.center;
        arr.push_back(std::move(jp));
    }
    j["patches"] = std::move(arr);
    write_text_file(path, j.dump() + "\n");
}

}  // namespace avatar
