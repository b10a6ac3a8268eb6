#include "avatar/mesh.hpp"
#include "avatar/patch_layout.hpp"
#include "avatar/rng.hpp"
#include "avatar/synthetic.hpp"
#include "avatar/tbnp.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace avatar;

namespace {

Mesh square_fan() {
    // unit square corners plus its center, four triangles around the center
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0.5, 0.5, 0}};
    m.faces = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
    finalize_mesh(m);
    return m;
}

Mat3 random_rotation(Pcg32& rng) {
    const Vec3 axis =
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    return Eigen::AngleAxisd(rng.uniform(0.0, 2.0 * M_PI), axis).toRotationMatrix();
}

}  // namespace

TEST_CASE("patch center lands on the member nearest the member mean") {
    Mesh m = square_fan();
    PatchLayout layout;
    layout.patches.resize(1);
    layout.patches[0].vertices = {0, 1, 2, 3, 4};
    compute_patch_centers(m, layout);
    CHECK(layout.patches[0].center == 4);  // mean (0.5,0.5,0) is vertex 4 itself
}

TEST_CASE("patch center matches a brute-force scan on a random patch") {
    Mesh m = make_icosphere(1);
    Pcg32 rng(11);
    PatchLayout layout;
    layout.patches.resize(1);
    auto& members = layout.patches[0].vertices;
    while (members.size() < 20) {
        int v = static_cast<int>(rng.uniform_index(static_cast<uint32_t>(m.vertex_count())));
        if (std::find(members.begin(), members.end(), v) == members.end()) members.push_back(v);
    }
    compute_patch_centers(m, layout);

    Vec3 mean = Vec3::Zero();
    for (int v : members) mean += m.vertices[v];
    mean /= static_cast<double>(members.size());
    int best = members[0];
    for (int v : members)
        if ((m.vertices[v] - mean).squaredNorm() < (m.vertices[best] - mean).squaredNorm())
            best = v;
    CHECK(layout.patches[0].center == best);
}

TEST_CASE("432 patches yield 432 centers") {
    Mesh m = make_icosphere(3);
    REQUIRE(m.vertex_count() >= 432);
    PatchLayout layout;
    layout.patches.resize(432);
    for (int v = 0; v < m.vertex_count(); ++v)
        layout.patches[v % 432].vertices.push_back(v);
    compute_patch_centers(m, layout);
    int assigned = 0;
    for (const auto& p : layout.patches) assigned += p.center >= 0 ? 1 : 0;
    CHECK(assigned == 432);
}

TEST_CASE("TBNP of a flat patch is the plane frame") {
    Mesh m = square_fan();
    PatchLayout layout;
    layout.patches.resize(1);
    layout.patches[0].vertices = {0, 1, 2, 3, 4};
    compute_patch_centers(m, layout);
    auto frames = compute_tbnp(m, layout);
    REQUIRE(frames.size() == 1);
    const Mat3 r = frames[0].rotation();
    CHECK((r.col(2) - Vec3(0, 0, 1)).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-12);
    // position column is the center vertex: T * (0,0,0,1) = (v_p, 1)
    Eigen::Vector4d h = frames[0].matrix * Eigen::Vector4d(0, 0, 0, 1);
    CHECK((h.head<3>() - m.vertices[4]).norm() < 1e-15);
    CHECK(h[3] == 1.0);
}

TEST_CASE("TBNP frames rotate with the mesh") {
    Mesh m = make_icosphere(1);
    PatchLayout layout = make_overlapping_patches(m, 5, 3);
    compute_patch_centers(m, layout);
    auto base = compute_tbnp(m, layout);

    Pcg32 rng(17);
    const Mat3 q = random_rotation(rng);
    Mesh rotated = m;
    for (auto& v : rotated.vertices) v = q * v;
    finalize_mesh(rotated);
    auto turned = compute_tbnp(rotated, layout);

    for (size_t p = 0; p < base.size(); ++p) {
        CHECK((turned[p].rotation() - q * base[p].rotation()).norm() < 1e-9);
        CHECK((turned[p].position() - q * base[p].position()).norm() < 1e-9);
    }
}

TEST_CASE("to_global matches the homogeneous matrix oracle") {
    Mesh m = make_icosphere(1);
    PatchLayout layout = make_overlapping_patches(m, 4, 9);
    compute_patch_centers(m, layout);
    auto frames = compute_tbnp(m, layout);

    CHECK((to_global(frames[0], Vec3::Zero()) - frames[0].position()).norm() < 1e-15);

    TbnpFrame identity;
    const Vec3 p(0.3, -0.2, 0.9);
    CHECK((to_global(identity, p) - p).norm() == 0.0);

    Pcg32 rng(23);
    for (const auto& f : frames) {
        const Vec3 local(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        Eigen::Vector4d h = f.matrix * Eigen::Vector4d(local[0], local[1], local[2], 1.0);
        CHECK((to_global(f, local) - h.head<3>()).norm() < 1e-14);
    }
}

TEST_CASE("vertex normals are unit length and area weighted") {
    Mesh m = make_icosphere(2);
    // independent accumulation oracle
    std::vector<Vec3> acc(m.vertices.size(), Vec3::Zero());
    for (const auto& f : m.faces) {
        const Vec3 e1 = m.vertices[f[1]] - m.vertices[f[0]];
        const Vec3 e2 = m.vertices[f[2]] - m.vertices[f[0]];
        const Vec3 cross = e1.cross(e2);  // magnitude = 2x area
        for (int k = 0; k < 3; ++k) acc[f[k]] += cross;
    }
    for (size_t v = 0; v < m.vertices.size(); ++v) {
        CHECK(m.normals[v].norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK((m.normals[v] - acc[v].normalized()).norm() < 1e-12);
    }
}

TEST_CASE("finalize_mesh rejects bad topology") {
    Mesh m = square_fan();
    SUBCASE("out-of-range index") {
        m.faces.push_back({0, 1, 99});
        CHECK_THROWS(finalize_mesh(m));
    }
    SUBCASE("zero-area face") {
        m.faces.push_back({0, 1, 1});
        CHECK_THROWS(finalize_mesh(m));
    }
}

TEST_CASE("OBJ round trip preserves every bit") {
    Mesh m = make_icosphere(1);
    for (auto& v : m.vertices) v *= 1.2345678901234567;
    finalize_mesh(m);
    const std::string path = "/tmp/avatar_test_mesh.obj";
    save_obj(path, m);
    Mesh back = load_obj(path);
    REQUIRE(back.vertex_count() == m.vertex_count());
    REQUIRE(back.face_count() == m.face_count());
    for (int v = 0; v < m.vertex_count(); ++v) CHECK(back.vertices[v] == m.vertices[v]);
    for (int f = 0; f < m.face_count(); ++f) CHECK(back.faces[f] == m.faces[f]);
    std::filesystem::remove(path);
}

TEST_CASE("vertex adjacency is sorted, unique, symmetric") {
    Mesh m = make_icosphere(1);
    auto adj = vertex_adjacency(m);
    REQUIRE(adj.size() == m.vertices.size());
    for (size_t v = 0; v < adj.size(); ++v) {
        CHECK(std::is_sorted(adj[v].begin(), adj[v].end()));
        CHECK(std::adjacent_find(adj[v].begin(), adj[v].end()) == adj[v].end());
        for (int u : adj[v]) {
            CHECK(std::binary_search(adj[u].begin(), adj[u].end(), static_cast<int>(v)));
        }
    }
}

TEST_CASE("layout validation catches structural errors") {
    Mesh m = square_fan();
    PatchLayout good;
    good.patches.resize(2);
    good.patches[0].vertices = {0, 1, 4};
    good.patches[1].vertices = {2, 3, 4};
    good.patches[0].neighbors = {1};
    good.patches[1].neighbors = {0};
    CHECK_NOTHROW(validate_layout(good, m.vertex_count()));

    SUBCASE("empty patch") {
        good.patches[1].vertices.clear();
        CHECK_THROWS(validate_layout(good, m.vertex_count()));
    }
    SUBCASE("asymmetric adjacency") {
        good.patches[1].neighbors.clear();
        CHECK_THROWS(validate_layout(good, m.vertex_count()));
    }
    SUBCASE("center outside the member list") {
        good.patches[0].center = 2;
        CHECK_THROWS(validate_layout(good, m.vertex_count()));
    }
    SUBCASE("vertex index out of range") {
        good.patches[0].vertices.push_back(99);
        CHECK_THROWS(validate_layout(good, m.vertex_count()));
    }
}

TEST_CASE("layout JSON round trip") {
    Mesh m = make_icosphere(1);
    PatchLayout layout = make_overlapping_patches(m, 6, 21);
    compute_patch_centers(m, layout);
    const std::string path = "/tmp/avatar_test_layout.json";
    save_layout(path, layout);
    PatchLayout back = load_layout(path);
    REQUIRE(back.patches.size() == layout.patches.size());
    for (size_t p = 0; p < layout.patches.size(); ++p) {
        CHECK(back.patches[p].vertices == layout.patches[p].vertices);
        CHECK(back.patches[p].neighbors == layout.patches[p].neighbors);
        CHECK(back.patches[p].center == layout.patches[p].center);
    }
    std::filesystem::remove(path);
}

TEST_CASE("overlapping patch construction covers the mesh with shared borders") {
    Mesh m = make_icosphere(2);
    PatchLayout layout = make_overlapping_patches(m, 12, 5);
    std::vector<int> cover(m.vertex_count(), 0);
    for (const auto& p : layout.patches)
        for (int v : p.vertices) cover[v]++;
    int shared = 0;
    for (int c : cover) {
        CHECK(c >= 1);
        shared += c > 1 ? 1 : 0;
    }
    CHECK(shared > 0);  // dilation must create overlap
    for (const auto& p : layout.patches) CHECK(!p.neighbors.empty());
}
