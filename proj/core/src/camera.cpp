#include "msplat/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace msplat {

void CameraView::finalize() {
    if (width < 1 || height < 1)
        throw std::invalid_argument("CameraView: width and height must be >= 1");
    if (!(fx > 0) || !(fy > 0))
        throw std::invalid_argument("CameraView: focal lengths must be positive");
    const Mat3 should_be_identity = R_cam_to_world.transpose() * R_cam_to_world;
    if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw std::invalid_argument("CameraView: rotation is not orthonormal (tol 1e-6)");
    if (std::abs(R_cam_to_world.determinant() - 1.0) > 1e-6)
        throw std::invalid_argument("CameraView: rotation determinant is not +1 (tol 1e-6)");

    R_world_to_cam = R_cam_to_world.transpose();
    t_world_to_cam = -(R_world_to_cam * t_cam_to_world);
}

CameraView make_camera(Scalar fx, Scalar fy, Scalar cx, Scalar cy, int width, int height,
                       const Mat3& R_cam_to_world, const Vec3& t_cam_to_world) {
    CameraView view;
    view.fx = fx;
    view.fy = fy;
    view.cx = cx;
    view.cy = cy;
    view.width = width;
    view.height = height;
    view.R_cam_to_world = R_cam_to_world;
    view.t_cam_to_world = t_cam_to_world;
    view.finalize();
    return view;
}

CameraView make_lookat_camera(Scalar fx, Scalar fy, Scalar cx, Scalar cy, int width, int height,
                              const Vec3& eye, const Vec3& target, const Vec3& up_hint) {
    Vec3 forward = target - eye;
    const Scalar norm = forward.norm();
    if (norm < 1e-12)
        throw std::invalid_argument("make_lookat_camera: eye and target coincide");
    forward /= norm;
    Vec3 right = forward.cross(up_hint);
    if (right.norm() < 1e-9) {
        right = forward.cross(Vec3(1, 0, 0));
        if (right.norm() < 1e-9)
            right = forward.cross(Vec3(0, 0, 1));
    }
    right.normalize();
    const Vec3 down = forward.cross(right);

    Mat3 R;
    R.col(0) = right;
    R.col(1) = down;
    R.col(2) = forward;
    return make_camera(fx, fy, cx, cy, width, height, R, eye);
}

} // namespace msplat
