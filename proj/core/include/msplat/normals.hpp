#pragma once

#include "msplat/camera.hpp"
#include "msplat/types.hpp"

#include <vector>

namespace msplat {

struct NormalConfig {
    int step1 = 1;
    int step2 = 4;
    Scalar fuse_lambda = 0.5;       // weight of the fine-scale estimate
    Scalar mask_threshold = 0.5;    // pixel participates when T_final < threshold
};

/// Forward cache of estimate_normals, consumed by normals_backward.
struct NormalState {
    int width = 0, height = 0;
    NormalConfig cfg;
    std::vector<Vec3> p_world;    // backprojected points, row-major
    Grid<std::uint8_t> valid;     // W x H
    std::vector<Vec3> vx1, vy1, vx2, vy2;
    std::vector<Vec3> n1, n2;     // n2 stored after sign alignment
    std::vector<Scalar> sign2;    // sign(n1 . n2) applied to n2
    std::vector<Vec3> n_fused;    // pre-normalization
    std::vector<Scalar> fused_norm;
    Grid<std::uint8_t> flipped;
};

/// World-space point per pixel: backprojection of the depth map through the
/// pixel-center ray.
std::vector<Vec3> backproject(const GridF& depth, const CameraView& view);

/// Multi-scale cross-product normal estimation from a rendered depth map.
/// Writes unit normals into `normals` (W x H x 3; zero on invalid pixels).
NormalState estimate_normals(const GridF& depth, const GridF& transmittance,
                             const CameraView& view, const NormalConfig& cfg, GridF& normals);

/// Adjoint of estimate_normals: scatters normal-map gradients back onto the
/// depth map. Accumulation order is fixed (single pass over pixels).
GridF normals_backward(const GridF& dL_dnormals, const NormalState& state,
                       const CameraView& view);

} // namespace msplat
