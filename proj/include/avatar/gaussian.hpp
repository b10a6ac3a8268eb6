#pragma once

#include "avatar/camera.hpp"
#include "avatar/core.hpp"

#include <array>
#include <vector>

namespace avatar {

// Anisotropic 3D Gaussian with opacity and RGB color.
struct GaussianPrimitive {
    Vec3 mean = Vec3::Zero();      // world, meters
    Vec3 scale = Vec3::Ones();     // per-axis std dev, positive
    Vec4 quat{1, 0, 0, 0};         // (w, x, y, z), unit
    double opacity = 1.0;          // [0, 1]
    Vec3 color = Vec3::Zero();     // [0, 1]^3
};

// Rotation from a quaternion; normalizes internally so scaled quaternions map
// to the same rotation.
Mat3 quat_to_rotation(const Vec4& q);

// The four partial derivative matrices dR/dq evaluated at a unit quaternion.
std::array<Mat3, 4> quat_rotation_jacobian(const Vec4& unit_q);

// Sigma = R S S^T R^T; symmetric PSD with eigenvalues scale^2.
Mat3 covariance(const Vec3& scale, const Vec4& quat);

struct ProjectedGaussian {
    bool valid = false;   // in front of the near plane with usable footprint
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();  // includes the low-pass blur
    Mat2 conic = Mat2::Zero();  // cov2d inverse
    double depth = 0.0;         // camera-space z
    Vec3 t_cam = Vec3::Zero();  // camera-space position
};

// Screen-space blur floor added to every projected covariance (standard
// anti-aliasing practice for splatting).
inline constexpr double kScreenBlur = 0.3;

// First-order (EWA) perspective projection of the Gaussian footprint.
// Errors if the primitive is at or behind the near plane; callers that sweep
// whole scenes should cull first (rasterize does).
ProjectedGaussian project(const GaussianPrimitive& prim, const Camera& cam);

}  // namespace avatar
