#pragma once

#include <string>
#include <vector>

namespace avatar {

// Static vertex->patch assignment. Patches may overlap; the layout is shared
// by every frame of a sequence.
struct PatchLayout {
    struct Patch {
        std::vector<int> vertices;   // member vertex indices
        std::vector<int> neighbors;  // adjacent patch indices, symmetric
        int center = -1;             // designated center vertex, -1 until assigned
    };
    std::vector<Patch> patches;

    int patch_count() const { return static_cast<int>(patches.size()); }
};

// Checks: nonempty members, symmetric adjacency, center (when set) is a member,
// all vertex indices within [0, vertex_count).
void validate_layout(const PatchLayout& layout, int vertex_count);

PatchLayout load_layout(const std::string& path);
void save_layout(const std::string& path, const PatchLayout& layout);

}  // namespace avatar
