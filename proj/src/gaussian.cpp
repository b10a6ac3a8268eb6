#include "avatar/gaussian.hpp"

namespace avatar {

Mat3 quat_to_rotation(const Vec4& q) {
    double n = q.norm();
    require(n > 0, "zero quaternion");
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

std::array<Mat3, 4> quat_rotation_jacobian(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d;
    d[0] << 0, -z, y,
            z, 0, -x,
            -y, x, 0;
    d[1] << 0, y, z,
            y, -2 * x, -w,
            z, w, -2 * x;
    d[2] << -2 * y, x, w,
            x, 0, z,
            -w, z, -2 * y;
    d[3] << -2 * z, -w, x,
            w, -2 * z, y,
            x, y, 0;
    for (auto& m : d) m *= 2.0;
    return d;
}

Mat3 covariance(const Vec3& scale, const Vec4& quat) {
    require((scale.array() > 0).all(), "gaussian scale must be positive");
    Mat3 r = quat_to_rotation(quat);
    return r * scale.array().square().matrix().asDiagonal() * r.transpose();
}

ProjectedGaussian project(const GaussianPrimitive& prim, const Camera& cam) {
    Vec3 t = cam.to_camera(prim.mean);
    require(t.z() > cam.near, "cannot project primitive at or behind the near plane");

    ProjectedGaussian out;
    out.t_cam = t;
    out.depth = t.z();
    out.mean2d = {cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy};

    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / t.z(), 0, -cam.fx * t.x() / (t.z() * t.z()),
           0, cam.fy / t.z(), -cam.fy * t.y() / (t.z() * t.z());
    Eigen::Matrix<double, 2, 3> u = jac * cam.rotation();
    out.cov2d = u * covariance(prim.scale, prim.quat) * u.transpose() +
                kScreenBlur * Mat2::Identity();

    double det = out.cov2d.determinant();
    require(det > 0, "projected covariance is degenerate");
    out.conic << out.cov2d(1, 1) / det, -out.cov2d(0, 1) / det,
                 -out.cov2d(1, 0) / det, out.cov2d(0, 0) / det;
    out.valid = true;
    return out;
}

}  // namespace avatar
