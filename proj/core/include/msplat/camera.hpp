#pragma once

#include "msplat/types.hpp"

namespace msplat {

/// Pinhole camera with a camera-to-world rigid pose.
struct CameraView {
    Scalar fx = 0, fy = 0;
    Scalar cx = 0, cy = 0;
    int width = 0, height = 0;
    Mat3 R_cam_to_world = Mat3::Identity();
    Vec3 t_cam_to_world = Vec3::Zero();

    Mat3 R_world_to_cam = Mat3::Identity();
    Vec3 t_world_to_cam = Vec3::Zero();

    /// Recomputes the inverse pose and checks the invariants
    /// (orthonormal R with det +1, positive focal lengths, W,H >= 1).
    void finalize();

    Vec3 world_to_cam(const Vec3& p_world) const {
        return R_world_to_cam * p_world + t_world_to_cam;
    }
    Vec3 cam_to_world(const Vec3& p_cam) const {
        return R_cam_to_world * p_cam + t_cam_to_world;
    }
    /// Camera-frame z of a world point.
    Scalar cam_depth(const Vec3& p_world) const {
        return R_world_to_cam.row(2).dot(p_world) + t_world_to_cam.z();
    }
};

CameraView make_camera(Scalar fx, Scalar fy, Scalar cx, Scalar cy, int width, int height,
                       const Mat3& R_cam_to_world, const Vec3& t_cam_to_world);

/// Camera at `eye` looking toward `target` (+z forward, y down, x right).
CameraView make_lookat_camera(Scalar fx, Scalar fy, Scalar cx, Scalar cy, int width, int height,
                              const Vec3& eye, const Vec3& target,
                              const Vec3& up_hint = Vec3(0, -1, 0));

} // namespace msplat
