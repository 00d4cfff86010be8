#pragma once

#include "msplat/types.hpp"

#include <array>

namespace msplat {

struct ScalarLoss {
    Scalar value = 0;
    GridF grad; // same shape as the differentiated input
};

/// Mean absolute error over all pixels and channels.
ScalarLoss l1_rgb(const GridF& rendered, const GridF& target);

/// 1 - mean SSIM with an 11x11 Gaussian window (sigma 1.5, K1=0.01, K2=0.03,
/// dynamic range 1), evaluated on fully valid windows only.
ScalarLoss ssim_loss(const GridF& rendered, const GridF& target);

/// Mean absolute depth error over masked pixels.
ScalarLoss depth_l1(const GridF& rendered, const GridF& target, const Grid<std::uint8_t>& mask);

/// 1 - mean cosine similarity over masked pixels; the gradient is the
/// -target/|Omega| seed of the normal backward chain.
ScalarLoss normal_cosine(const GridF& rendered, const GridF& target,
                         const Grid<std::uint8_t>& mask);

/// Per-pixel softmax cross-entropy over masked pixels.
ScalarLoss cross_entropy_seg(const GridF& logits, const GridU8& labels,
                             const Grid<std::uint8_t>& mask);

/// Mean |K - 1| pulling the rendered gradient-factor map toward one.
ScalarLoss gradient_factor_loss(const GridF& kmap);

struct LossReport {
    Scalar l1 = 0, ssim = 0, depth = 0, normal = 0, seg = 0, k = 0;
    Scalar combined = 0;
    // |L_l1| / |L_x| magnitude-normalization ratios, frozen per iteration.
    Scalar ratio_ssim = 0, ratio_normal = 0, ratio_depth = 0, ratio_seg = 0, ratio_k = 0;
    // Effective gradient-seed scales: lambda_1 for the L1 term, lambda_x * ratio_x
    // for the normalized terms (zero when a term is disabled or vanishes).
    Scalar seed_l1 = 0, seed_ssim = 0, seed_depth = 0, seed_normal = 0, seed_seg = 0,
           seed_k = 0;
};

/// Magnitude-normalized total loss. lambdas = (l1, ssim, normal, depth, seg, k).
/// The ratios are treated as constants (not differentiated); terms with
/// |L_x| < 1e-12 contribute zero.
LossReport combine(Scalar l1, Scalar ssim, Scalar normal, Scalar depth, Scalar seg, Scalar k,
                   const std::array<Scalar, 6>& lambdas);

} // namespace msplat
