#pragma once

#include "avatar/core.hpp"

#include <array>
#include <string>
#include <vector>

namespace avatar {

// Triangle mesh in world space (meters). Normals are derived data and are
// recomputed per frame, never loaded.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3> normals;  // per-vertex, unit length, area-weighted

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
};

// Validates indices and rejects zero-area faces, then computes normals.
void finalize_mesh(Mesh& mesh);

// Area-weighted vertex normals (cross-product accumulation).
void compute_vertex_normals(Mesh& mesh);

Mesh load_obj(const std::string& path);
void save_obj(const std::string& path, const Mesh& mesh);

// Topology-consistent frames; every frame shares the vertex count of the first.
std::vector<Mesh> load_obj_sequence(const std::vector<std::string>& paths);

}  // namespace avatar
