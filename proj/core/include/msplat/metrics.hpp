#pragma once

#include "msplat/scene.hpp"
#include "msplat/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace msplat {

struct MetricReport {
    std::optional<Scalar> psnr, ssim, abs_rel, rmse, cos_simi, miou;
    size_t count = 0; // gaussians
    std::optional<Scalar> fps;
};

struct OutlierReport {
    Scalar radio = 0;     // fraction of z-score outliers
    Scalar mean = 0;      // mean nearest-neighbor distance, meters
    Scalar stddev = 0;
    Scalar hausdorff = 0; // symmetric Hausdorff distance, meters
    Scalar tau = 0;       // z-score threshold used
};

/// Peak signal-to-noise ratio for unit-range images, capped at 100 dB.
Scalar psnr(const GridF& a, const GridF& b);

/// Mean SSIM over fully valid 11x11 windows.
Scalar ssim_metric(const GridF& a, const GridF& b);

/// mean(|d - gt| / gt) over masked pixels with gt > 1e-3; empty -> nullopt.
std::optional<Scalar> abs_rel(const GridF& depth, const GridF& gt, const Grid<std::uint8_t>& mask);

std::optional<Scalar> rmse(const GridF& depth, const GridF& gt, const Grid<std::uint8_t>& mask);

/// Mean dot product between unit normal fields over masked pixels.
std::optional<Scalar> cos_simi(const GridF& normals, const GridF& gt,
                               const Grid<std::uint8_t>& mask);

/// Mean IoU over classes present in prediction or truth (argmax label maps).
std::optional<Scalar> miou(const GridU8& pred, const GridU8& gt, const Grid<std::uint8_t>& mask,
                           int num_classes);

GridU8 argmax_labels(const GridF& logits);

/// Z-score outlier statistics of pred against gt (nearest-neighbor distances),
/// plus the symmetric Hausdorff distance.
OutlierReport zscore_outliers(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                              Scalar tau);

Scalar hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();
    bool contains(const Vec3& p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
};

/// Draws ~n points from the scene: the budget is split across gaussians
/// proportionally to activated opacity, each drawn uniformly inside the
/// primitive's 1-sigma ellipsoid; points outside `region` (when given) are
/// dropped. Deterministic for a fixed seed.
std::vector<Vec3> sample_scene_points(const Scene& scene, size_t n,
                                      const std::optional<Aabb>& region, std::uint64_t seed);

} // namespace msplat
