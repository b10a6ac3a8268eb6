#pragma once

#include "avatar/core.hpp"
#include "avatar/mesh.hpp"
#include "avatar/patch_layout.hpp"

#include <vector>

namespace avatar {

// Per-patch coordinate frame: columns tangent, bitangent, normal, position.
// The rotation block is orthonormal with determinant +1.
struct TbnpFrame {
    Mat4 matrix = Mat4::Identity();

    Mat3 rotation() const { return matrix.topLeftCorner<3, 3>(); }
    Vec3 position() const { return matrix.topRightCorner<3, 1>(); }
};

// Picks each patch's center vertex: the member closest to the member mean,
// ties broken by lowest vertex index. Centers are chosen once on the
// reference frame and stay fixed for the sequence.
void compute_patch_centers(const Mesh& mesh, PatchLayout& layout);

// One frame per patch for the given mesh pose. Requires centers assigned.
// Tangent: edge toward the center's lowest-index 1-ring neighbor with the
// normal component projected out (falls back to the next neighbor if the
// edge is parallel to the normal); bitangent = n x t.
std::vector<TbnpFrame> compute_tbnp(const Mesh& mesh, const PatchLayout& layout);

inline Vec3 to_global(const TbnpFrame& frame, const Vec3& point_local) {
    return frame.rotation() * point_local + frame.position();
}

// Sorted unique 1-ring adjacency, one list per vertex.
std::vector<std::vector<int>> vertex_adjacency(const Mesh& mesh);

}  // namespace avatar
