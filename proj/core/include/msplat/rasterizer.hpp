#pragma once

#include "msplat/camera.hpp"
#include "msplat/geometry.hpp"
#include "msplat/scene.hpp"
#include "msplat/sh.hpp"

#include <optional>
#include <vector>

namespace msplat {

struct RenderConfig {
    Scalar sigma_scale = 1.0;        // ellipsoid semi-axes = sigma_scale * s
    Vec3 background = Vec3::Zero();  // applied to color only
    Scalar early_stop_transmittance = 1e-4;
    bool early_termination = true;
    int threads = 1; // 0 = hardware concurrency
};

/// Per-pixel rendered buffers of one forward pass.
struct MultimodalFrame {
    int width = 0, height = 0, num_classes = 0;
    GridF color;         // W x H x 3, background composited
    GridF depth;         // W x H, pure blend (no background)
    GridF semantics;     // W x H x C_o logits
    GridF kmap;          // W x H gradient-factor map
    GridF transmittance; // W x H final T
    GridF normals;       // W x H x 3, filled by the normal pipeline
    Grid<int> contributors; // per-pixel blended splat count
};

struct TileBins {
    static constexpr int kTileSize = 16;
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<int>> bins; // per tile: splat indices, ascending (sort_depth, index)

    const std::vector<int>& tile(int tx, int ty) const { return bins[size_t(ty) * tiles_x + tx]; }
};

/// Inclusive pixel-index support rectangle of a splat (empty when off-screen).
/// A splat contributes to exactly the pixels of this rectangle that pass the
/// alpha threshold; tiling only accelerates the traversal.
struct PixelRect {
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
    bool empty() const { return x1 < x0 || y1 < y0; }
    bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

PixelRect splat_pixel_rect(const Splat2D& splat, int width, int height);

TileBins bin_and_sort(const std::vector<std::optional<Splat2D>>& splats, int width, int height);

/// Everything the backward pass needs to re-traverse the forward blend.
struct ReplayState {
    std::vector<ActivatedGaussian> activated;
    std::vector<std::optional<Splat2D>> splats;
    std::vector<ShColor> colors; // per-primitive view-dependent color
    TileBins bins;
    Grid<int> terminus;               // per pixel: one past the last blended list position
    std::vector<Scalar> weight_sums;  // per primitive, sum of blending weights over pixels
    size_t num_gaussians = 0;
    int sh_degree = 0, num_classes = 0;
    RenderConfig cfg;
};

MultimodalFrame rasterize(const Scene& scene, const CameraView& view, const RenderConfig& cfg,
                          ReplayState* replay = nullptr);

/// Loss gradients w.r.t. the rendered maps. ddepth must already include the
/// normal-chain contribution.
struct PixelGradients {
    GridF dcolor;     // W x H x 3
    GridF ddepth;     // W x H
    GridF dsemantics; // W x H x C_o
    GridF dkmap;      // W x H

    static PixelGradients zero(int width, int height, int num_classes);
};

GradientBuffer rasterize_backward(const Scene& scene, const CameraView& view,
                                  const MultimodalFrame& frame, const ReplayState& replay,
                                  const PixelGradients& pix);

} // namespace msplat
