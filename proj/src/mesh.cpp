#include "avatar/mesh.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace avatar {

void compute_vertex_normals(Mesh& mesh) {
    mesh.normals.assign(mesh.vertices.size(), Vec3::Zero());
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        Vec3 n = (b - a).cross(c - a);  // length = 2*area, so accumulation is area-weighted
        mesh.normals[f[0]] += n;
        mesh.normals[f[1]] += n;
        mesh.normals[f[2]] += n;
    }
    for (size_t i = 0; i < mesh.normals.size(); ++i) {
        double len = mesh.normals[i].norm();
        if (len > 0.0) mesh.normals[i] /= len;
    }
}

void finalize_mesh(Mesh& mesh) {
    const int nv = mesh.vertex_count();
    for (size_t fi = 0; fi < mesh.faces.size(); ++fi) {
        const auto& f = mesh.faces[fi];
        for (int k = 0; k < 3; ++k)
            require(f[k] >= 0 && f[k] < nv, "face " + std::to_string(fi) + " references invalid vertex index");
        Vec3 n = (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
        require(n.squaredNorm() > 0.0, "degenerate (zero-area) face " + std::to_string(fi));
    }
    compute_vertex_normals(mesh);
}

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open OBJ: " + path);
    Mesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        if (line.size() < 2) continue;
        if (line[0] == 'v' && line[1] == ' ') {
            std::istringstream ss(line.substr(2));
            Vec3 v;
            ss >> v.x() >> v.y() >> v.z();
            require(!ss.fail(), "malformed vertex line in " + path);
            mesh.vertices.push_back(v);
        } else if (line[0] == 'f' && line[1] == ' ') {
            std::istringstream ss(line.substr(2));
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                // take the position index of "v", "v/vt", "v//vn", "v/vt/vn"
                size_t slash = tok.find('/');
                int vi = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
                require(vi > 0, "non-positive OBJ indices unsupported in " + path);
                idx.push_back(vi - 1);
            }
            require(idx.size() >= 3, "face with <3 vertices in " + path);
            for (size_t k = 2; k < idx.size(); ++k)
                mesh.faces.push_back({idx[0], idx[k - 1], idx[k]});
        }
    }
    require(!mesh.vertices.empty(), "no vertices in " + path);
    finalize_mesh(mesh);
    return mesh;
}

void save_obj(const std::string& path, const Mesh& mesh) {
    std::ofstream out(path);
    require(out.good(), "cannot open for write: " + path);
    char buf[128];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    require(out.good(), "write failed: " + path);
}

std::vector<Mesh> load_obj_sequence(const std::vector<std::string>& paths) {
    std::vector<Mesh> frames;
    frames.reserve(paths.size());
    for (const auto& p : paths) frames.push_back(load_obj(p));
    for (size_t t = 1; t < frames.size(); ++t)
        require(frames[t].vertex_count() == frames[0].vertex_count(),
                "vertex count changes at frame " + std::to_string(t));
    return frames;
}

}  // namespace avatar
