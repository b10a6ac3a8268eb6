#pragma once

#include "avatar/core.hpp"

#include <string>

namespace avatar {

// Pinhole camera, +z looking forward in camera space.
struct Camera {
    Mat4 w2c = Mat4::Identity();  // rigid world-to-camera
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    double near = 0.01;  // meters

    Mat3 rotation() const { return w2c.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return w2c.topRightCorner<3, 1>(); }
    Vec3 to_camera(const Vec3& p) const { return rotation() * p + translation(); }
    Vec3 position() const { return -rotation().transpose() * translation(); }

    void validate() const;
};

Camera load_camera(const std::string& path);
void save_camera(const Camera& cam, const std::string& path);

// Build a camera at `eye` looking at `target` (camera-space +z toward the
// target, +y chosen opposite `up` so world-up maps to up in the image).
Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                      int width, int height, double near = 0.01);

}  // namespace avatar
