#include "avatar/camera.hpp"

#include "avatar/tensor_io.hpp"

#include <json.hpp>

namespace avatar {

void Camera::validate() const {
    require(fx > 0 && fy > 0, "camera focal lengths must be positive");
    require(width >= 4 && height >= 4, "camera image must be at least 4x4");
    require(near > 0, "camera near plane must be positive");
    Mat3 r = rotation();
    require((r * r.transpose() - Mat3::Identity()).norm() < 1e-6, "camera w2c must be rigid");
    require((w2c.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).norm() == 0,
            "camera w2c bottom row must be 0 0 0 1");
}

Camera load_camera(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    Camera cam;
    auto w2c = j.at("w2c").get<std::vector<double>>();
    require(w2c.size() == 16, "camera w2c must have 16 entries");
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) cam.w2c(r, c) = w2c[r * 4 + c];
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.near = j.at("near").get<double>();
    cam.validate();
    return cam;
}

void save_camera(const Camera& cam, const std::string& path) {
    cam.validate();
    nlohmann::json j;
    std::vector<double> w2c(16);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) w2c[r * 4 + c] = cam.w2c(r, c);
    j["w2c"] = w2c;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["near"] = cam.near;
    write_text_file(path, j.dump(2) + "\n");
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
                      int width, int height, double near) {
    Vec3 z = (target - eye).normalized();
    Vec3 x = (-up).cross(z).normalized();  // image y runs downward
    Vec3 y = z.cross(x);
    Mat3 c2w;
    c2w.col(0) = x;
    c2w.col(1) = y;
    c2w.col(2) = z;
    Camera cam;
    cam.w2c.topLeftCorner<3, 3>() = c2w.transpose();
    cam.w2c.topRightCorner<3, 1>() = -c2w.transpose() * eye;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    cam.near = near;
    cam.validate();
    return cam;
}

}  // namespace avatar
