#pragma once

#include "msplat/dataset.hpp"
#include "msplat/losses.hpp"
#include "msplat/normals.hpp"
#include "msplat/rasterizer.hpp"
#include "msplat/scene.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace msplat {

struct TrainConfig {
    int iterations = 2000;

    Scalar lr_position = 1.6e-4;
    Scalar lr_rotation = 1e-3;
    Scalar lr_scale = 5e-3;
    Scalar lr_opacity = 5e-2;
    Scalar lr_sh = 2.5e-3;
    Scalar lr_semantics = 2.5e-2;
    Scalar lr_k = 5e-2;

    // (l1, ssim, normal, depth, seg, k); a zero disables the modality.
    std::array<Scalar, 6> lambdas = {1.0, 0.1, 0.1, 0.1, 0.1, 0.1};

    int prune_interval = 3000; // K_p, iterations between prune passes
    Scalar prune_threshold = 0.5;
    bool prune_enabled = true;
    bool prune_keep_small = false; // flipped rule: remove |k-1| < T_k instead
    Scalar k_reset = 0.9;

    int step1 = 1, step2 = 4;
    Scalar lambda_fuse = 0.5;
    Scalar mask_threshold = 0.5;

    Scalar sigma_scale = 1.0;
    Scalar early_stop_transmittance = 1e-4;
    Vec3 background = Vec3::Zero();
    int sh_degree = 2;

    std::uint64_t seed = 0;
    int threads = 0;          // 0 = hardware concurrency
    bool deterministic = false;

    RenderConfig render_config() const {
        RenderConfig rc;
        rc.sigma_scale = sigma_scale;
        rc.background = background;
        rc.early_stop_transmittance = early_stop_transmittance;
        rc.threads = deterministic ? 1 : threads;
        return rc;
    }
    NormalConfig normal_config() const {
        NormalConfig nc;
        nc.step1 = step1;
        nc.step2 = step2;
        nc.fuse_lambda = lambda_fuse;
        nc.mask_threshold = mask_threshold;
        return nc;
    }
    void validate() const;
};

struct OptimizerState {
    // First/second Adam moments, shaped like a gradient buffer.
    GradientBuffer m, v;
    std::int64_t step = 0;

    static OptimizerState init(const Scene& scene);
};

constexpr Scalar kAdamBeta1 = 0.9;
constexpr Scalar kAdamBeta2 = 0.999;
constexpr Scalar kAdamEps = 1e-15;

/// One Gaussian per input point; isotropic scale from the mean distance to the
/// three nearest neighbors, opacity 0.1, DC-only color, zero semantics, k=0.9.
Scene init_scene(const std::vector<Vec3>& points, const std::vector<Vec3>& colors,
                 int num_classes, const TrainConfig& cfg);

/// Adam update on raw parameters; grads must already be chained to raw space.
void adam_step(Scene& scene, const GradientBuffer& grads, OptimizerState& state,
               const TrainConfig& cfg);

/// Removes gaussians with |k-1| > threshold (or < threshold with
/// prune_keep_small), keeps surviving parameters and moments, resets k.
size_t prune(Scene& scene, OptimizerState& state, const TrainConfig& cfg);

struct IterationLog {
    int iteration = 0;
    int view_index = 0;
    LossReport losses;
    size_t gaussian_count = 0;
    double wall_ms = 0; // pinned to 0 in deterministic mode
};

struct TrainResult {
    Scene scene;
    std::vector<IterationLog> log;
    bool halted_non_finite = false;
    int completed_iterations = 0;
};

/// Losses plus assembled pixel gradients (normal chain merged into ddepth)
/// for one rendered frame against one ground-truth frame.
struct FrameLossResult {
    LossReport report;
    PixelGradients pixel_grads;
    Grid<std::uint8_t> normal_mask;
};

FrameLossResult evaluate_frame_losses(const MultimodalFrame& frame, const NormalState& nstate,
                                      const FrameRecord& gt, const CameraView& view,
                                      const TrainConfig& cfg);

TrainResult train(const SceneDataset& dataset, const TrainConfig& cfg);

} // namespace msplat
