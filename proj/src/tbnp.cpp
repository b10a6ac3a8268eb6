#include "avatar/tbnp.hpp"

#include <algorithm>

namespace avatar {

void compute_patch_centers(const Mesh& mesh, PatchLayout& layout) {
    for (int p = 0; p < layout.patch_count(); ++p) {
        auto& patch = layout.patches[p];
        require(!patch.vertices.empty(), "patch " + std::to_string(p) + " is empty");
        Vec3 mean = Vec3::Zero();
        for (int v : patch.vertices) mean += mesh.vertices[v];
        mean /= static_cast<double>(patch.vertices.size());
        int best = -1;
        double best_d = 0.0;
        for (int v : patch.vertices) {
            double d = (mesh.vertices[v] - mean).squaredNorm();
            if (best < 0 || d < best_d || (d == best_d && v < best)) {
                best = v;
                best_d = d;
            }
        }
        patch.center = best;
    }
}

std::vector<std::vector<int>> vertex_adjacency(const Mesh& mesh) {
    std::vector<std::vector<int>> adj(mesh.vertices.size());
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
    }
    for (auto& list : adj) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return adj;
}

std::vector<TbnpFrame> compute_tbnp(const Mesh& mesh, const PatchLayout& layout) {
    require(mesh.normals.size() == mesh.vertices.size(), "mesh normals missing");
    const auto adj = vertex_adjacency(mesh);
    std::vector<TbnpFrame> frames(layout.patch_count());
    for (int p = 0; p < layout.patch_count(); ++p) {
        int vp = layout.patches[p].center;
        require(vp >= 0, "patch " + std::to_string(p) + " has no center; run compute_patch_centers");
        const Vec3 n = mesh.normals[vp];
        require(n.norm() > 1e-12, "zero-length normal at patch " + std::to_string(p) + " center");
        Vec3 t = Vec3::Zero();
        bool found = false;
        for (int nb : adj[vp]) {
            Vec3 e = mesh.vertices[nb] - mesh.vertices[vp];
            Vec3 proj = e - e.dot(n) * n;
            if (proj.norm() > 1e-10 * std::max(e.norm(), 1e-300)) {
                t = proj.normalized();
                found = true;
                break;
            }
        }
        require(found, "cannot build tangent at patch " + std::to_string(p) + " (isolated or degenerate center)");
        Vec3 b = n.cross(t);
        Mat4 m = Mat4::Identity();
        m.block<3, 1>(0, 0) = t;
        m.block<3, 1>(0, 1) = b;
        m.block<3, 1>(0, 2) = n;
        m.block<3, 1>(0, 3) = mesh.vertices[vp];
        frames[p].matrix = m;
    }
    return frames;
}

}  // namespace avatar
