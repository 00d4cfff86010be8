#pragma once

#include "msplat/dataset.hpp"
#include "msplat/rasterizer.hpp"

#include <functional>

namespace msplat {

/// Untiled per-pixel reference renderer: every gaussian is tested at every
/// pixel in global (center depth, index) order with the same blend math as the
/// tile rasterizer. Single-threaded, double precision.
MultimodalFrame brute_force_render(const Scene& scene, const CameraView& view,
                                   const RenderConfig& cfg);

/// Central finite differences of a scalar function.
VecX finite_diff(const std::function<Scalar(const VecX&)>& f, const VecX& theta, Scalar eps);

enum class SyntheticKind { Plane, SpheresRoom };

struct SyntheticOptions {
    int width = 64, height = 64;
    int n_views = 24;
    int n_test = 4;
    int n_points = 1600;
};

struct SyntheticSphere {
    Vec3 center = Vec3::Zero();
    Scalar radius = 1;
    int label = 0;
};

/// Analytically ray-castable scene (textured backdrop plane plus sphere bumps)
/// with its rendered ground-truth dataset.
struct SyntheticScene {
    SceneDataset dataset;

    Scalar wall_z = 0;
    Vec3 plane_normal = Vec3(0, 0, -1); // outward, toward the cameras
    std::vector<SyntheticSphere> spheres;

    struct Hit {
        Scalar t = 0;
        Vec3 point = Vec3::Zero();
        Vec3 normal = Vec3::Zero(); // outward geometric normal
        int label = 0;
        Vec3 rgb = Vec3::Zero();
    };
    /// First surface along the ray; the backdrop plane guarantees a hit.
    Hit trace(const Vec3& origin, const Vec3& dir) const;
};

SyntheticScene make_synthetic_scene(SyntheticKind kind, std::uint64_t seed,
                                    const SyntheticOptions& opts = {});

} // namespace msplat
