#include "msplat/rasterizer.hpp"

#include "msplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace msplat {

TileBins bin_and_sort(const std::vector<std::optional<Splat2D>>& splats, int width, int height) {
    TileBins out;
    out.tiles_x = (width + TileBins::kTileSize - 1) / TileBins::kTileSize;
    out.tiles_y = (height + TileBins::kTileSize - 1) / TileBins::kTileSize;
    out.bins.assign(size_t(out.tiles_x) * out.tiles_y, {});

    std::vector<int> order;
    order.reserve(splats.size());
    for (int i = 0; i < int(splats.size()); ++i)
        if (splats[i])
            order.push_back(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const Scalar da = splats[a]->sort_depth, db = splats[b]->sort_depth;
        return da != db ? da < db : a < b;
    });

    for (int idx : order) {
        const Splat2D& s = *splats[idx];
        const int x0 = std::max(0, int(std::floor(s.center.x() - s.radius)));
        const int x1 = std::min(width - 1, int(std::floor(s.center.x() + s.radius)));
        const int y0 = std::max(0, int(std::floor(s.center.y() - s.radius)));
        const int y1 = std::min(height - 1, int(std::floor(s.center.y() + s.radius)));
        if (x1 < x0 || y1 < y0)
            continue;
        const int tx0 = x0 / TileBins::kTileSize, tx1 = x1 / TileBins::kTileSize;
        const int ty0 = y0 / TileBins::kTileSize, ty1 = y1 / TileBins::kTileSize;
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                out.bins[size_t(ty) * out.tiles_x + tx].push_back(idx);
    }
    return out;
}

namespace {

struct ViewData {
    std::vector<ActivatedGaussian> activated;
    std::vector<std::optional<Splat2D>> splats;
    std::vector<ShColor> colors;
};

ViewData prepare_view(const Scene& scene, const CameraView& view, bool warn_degenerate) {
    ViewData vd;
    vd.activated = activate_scene(scene);
    vd.splats.resize(scene.size());
    vd.colors.resize(scene.size());
    for (size_t i = 0; i < scene.size(); ++i) {
        const auto& act = vd.activated[i];
        if (warn_degenerate && act.scale.minCoeff() < kDegenerateScale)
            std::cerr << "msplat: primitive " << i << " has a degenerate scale component ("
                      << act.scale.minCoeff() << "), rays will not intersect it\n";
        vd.splats[i] = project_gaussian(act, view);
        if (vd.splats[i]) {
            const Vec3 to_g = act.position - view.t_cam_to_world;
            const Scalar norm = to_g.norm();
            const Vec3 dir = norm > 1e-12 ? Vec3(to_g / norm) : Vec3(0, 0, 1);
            vd.colors[i] = eval_sh_color(*act.sh, scene.sh_degree, dir);
        }
    }
    return vd;
}

} // namespace

PixelGradients PixelGradients::zero(int width, int height, int num_classes) {
    PixelGradients pg;
    pg.dcolor = GridF(width, height, 3, 0.0);
    pg.ddepth = GridF(width, height, 1, 0.0);
    pg.dsemantics = GridF(width, height, num_classes, 0.0);
    pg.dkmap = GridF(width, height, 1, 0.0);
    return pg;
}

MultimodalFrame rasterize(const Scene& scene, const CameraView& view, const RenderConfig& cfg,
                          ReplayState* replay) {
    scene.validate();
    const int W = view.width, H = view.height, C = scene.num_classes;

    MultimodalFrame frame;
    frame.width = W;
    frame.height = H;
    frame.num_classes = C;
    frame.color = GridF(W, H, 3, 0.0);
    frame.depth = GridF(W, H, 1, 0.0);
    frame.semantics = GridF(W, H, C, 0.0);
    frame.kmap = GridF(W, H, 1, 0.0);
    frame.transmittance = GridF(W, H, 1, 1.0);
    frame.normals = GridF(W, H, 3, 0.0);
    frame.contributors = Grid<int>(W, H, 1, 0);

    ViewData vd = prepare_view(scene, view, /*warn_degenerate=*/true);
    TileBins bins = bin_and_sort(vd.splats, W, H);

    Grid<int> terminus(W, H, 1, 0);
    const int threads = resolve_threads(cfg.threads);
    std::vector<std::vector<Scalar>> weight_sums(threads, std::vector<Scalar>(scene.size(), 0.0));

    const size_t n_tiles = bins.bins.size();
    parallel_for_chunks(n_tiles, threads, [&](int tid, size_t begin, size_t end) {
        std::vector<Scalar> sem_accum(C);
        std::vector<Scalar>& wsum = weight_sums[tid];
        for (size_t tile = begin; tile < end; ++tile) {
            const int tx = int(tile) % bins.tiles_x;
            const int ty = int(tile) / bins.tiles_x;
            const auto& list = bins.bins[tile];
            const int px0 = tx * TileBins::kTileSize;
            const int py0 = ty * TileBins::kTileSize;
            const int px1 = std::min(W, px0 + TileBins::kTileSize);
            const int py1 = std::min(H, py0 + TileBins::kTileSize);

            for (int y = py0; y < py1; ++y) {
                for (int x = px0; x < px1; ++x) {
                    Vec3 origin, dir;
                    compute_ray(view, x + 0.5, y + 0.5, origin, dir);

                    Vec3 color_accum = Vec3::Zero();
                    Scalar depth_accum = 0, k_accum = 0, T = 1.0;
                    std::fill(sem_accum.begin(), sem_accum.end(), 0.0);
                    int count = 0, last_pos = 0;

                    for (size_t pos = 0; pos < list.size(); ++pos) {
                        const int idx = list[pos];
                        const Splat2D& splat = *vd.splats[idx];
                        const ActivatedGaussian& act = vd.activated[idx];
                        const Scalar alpha = eval_alpha(splat, act.alpha, x + 0.5, y + 0.5);
                        if (alpha < kMinAlpha)
                            continue;

                        Scalar d;
                        const auto hit = intersect(act, origin, dir, cfg.sigma_scale);
                        if (hit)
                            d = midpoint_depth(view, origin, dir, hit->t_mid);
                        else
                            d = splat.sort_depth; // no ellipsoid hit: fall back to center depth
                        if (!std::isfinite(alpha) || !std::isfinite(d))
                            throw std::runtime_error(
                                "rasterize: non-finite blend at pixel (" + std::to_string(x) +
                                "," + std::to_string(y) + "), primitive " + std::to_string(idx));

                        const Scalar w = alpha * T;
                        color_accum += w * vd.colors[idx].rgb;
                        depth_accum += w * d;
                        for (int ch = 0; ch < C; ++ch)
                            sem_accum[ch] += w * (*act.semantic_logits)[ch];
                        k_accum += w * act.k;
                        wsum[idx] += w;

                        T *= (1.0 - alpha);
                        ++count;
                        last_pos = int(pos) + 1;
                        if (cfg.early_termination && T < cfg.early_stop_transmittance)
                            break;
                    }

                    color_accum += T * cfg.background;
                    for (int ch = 0; ch < 3; ++ch)
                        frame.color.at(x, y, ch) = color_accum[ch];
                    frame.depth.at(x, y) = depth_accum;
                    for (int ch = 0; ch < C; ++ch)
                        frame.semantics.at(x, y, ch) = sem_accum[ch];
                    frame.kmap.at(x, y) = k_accum;
                    frame.transmittance.at(x, y) = T;
                    frame.contributors.at(x, y) = count;
                    terminus.at(x, y) = last_pos;

                    if (!color_accum.allFinite() || !std::isfinite(depth_accum) ||
                        !std::isfinite(T))
                        throw std::runtime_error("rasterize: non-finite output at pixel (" +
                                                 std::to_string(x) + "," + std::to_string(y) +
                                                 ")");
                }
            }
        }
    });

    if (replay) {
        replay->activated = std::move(vd.activated);
        replay->splats = std::move(vd.splats);
        replay->colors = std::move(vd.colors);
        replay->bins = std::move(bins);
        replay->terminus = std::move(terminus);
        replay->weight_sums.assign(scene.size(), 0.0);
        for (int t = 0; t < threads; ++t)
            for (size_t i = 0; i < scene.size(); ++i)
                replay->weight_sums[i] += weight_sums[t][i];
        replay->num_gaussians = scene.size();
        replay->sh_degree = scene.sh_degree;
        replay->num_classes = scene.num_classes;
        replay->cfg = cfg;
    }
    return frame;
}

} // namespace msplat
