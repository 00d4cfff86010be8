#include "msplat/rasterizer.hpp"

#include "msplat/parallel.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace msplat {

namespace {

struct ThreadAccum {
    GradientBuffer buf;
    std::vector<Vec3> dcolor;  // per-primitive dL/d(view color)
    std::vector<Vec2> dmean;   // per-primitive dL/d(2D center)
    std::vector<Vec3> dconic;  // full-matrix symmetric gradient (xx, xy, yy)

    void init(const Scene& scene) {
        buf.resize_zero(scene);
        dcolor.assign(scene.size(), Vec3::Zero());
        dmean.assign(scene.size(), Vec2::Zero());
        dconic.assign(scene.size(), Vec3::Zero());
    }
    void add(const ThreadAccum& o) {
        buf.add(o.buf);
        for (size_t i = 0; i < dcolor.size(); ++i) {
            dcolor[i] += o.dcolor[i];
            dmean[i] += o.dmean[i];
            dconic[i] += o.dconic[i];
        }
    }
};

void check_replay(const Scene& scene, const CameraView& view, const MultimodalFrame& frame,
                  const ReplayState& replay, const PixelGradients& pix) {
    if (replay.num_gaussians != scene.size() || replay.sh_degree != scene.sh_degree ||
        replay.num_classes != scene.num_classes)
        throw std::runtime_error("rasterize_backward: replay state does not match the scene");
    for (size_t i = 0; i < scene.size(); ++i)
        if ((replay.activated[i].position.array() != scene.gaussians[i].position.array()).any() ||
            replay.activated[i].k != scene.gaussians[i].gradient_factor)
            throw std::runtime_error("rasterize_backward: scene modified since forward (primitive " +
                                     std::to_string(i) + ")");
    if (frame.width != view.width || frame.height != view.height)
        throw std::runtime_error("rasterize_backward: frame/view size mismatch");
    const bool grids_ok = pix.dcolor.width() == frame.width && pix.dcolor.height() == frame.height &&
                          pix.dcolor.channels() == 3 && pix.ddepth.same_shape(frame.depth) &&
                          pix.dsemantics.same_shape(frame.semantics) &&
                          pix.dkmap.same_shape(frame.kmap);
    if (!grids_ok)
        throw std::runtime_error("rasterize_backward: pixel-gradient shape mismatch");
}

/// Converts the per-splat screen-space gradients (2D center, conic, view color)
/// into gradients on position, unit quaternion, scale, and SH coefficients.
void projection_backward(const Scene& scene, const CameraView& view, const ReplayState& replay,
                         const ThreadAccum& acc, GradientBuffer& buf, int threads) {
    parallel_for_chunks(scene.size(), threads, [&](int, size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            if (!replay.splats[i])
                continue;
            const ActivatedGaussian& act = replay.activated[i];
            const Splat2D& splat = *replay.splats[i];

            // 2D covariance gradient from the conic (inverse-matrix pullback).
            Mat2 Gc;
            Gc << acc.dconic[i][0], acc.dconic[i][1], acc.dconic[i][1], acc.dconic[i][2];
            const Mat2 dcov2d = -splat.conic * Gc * splat.conic;

            const Vec3 p_cam = view.world_to_cam(act.position);
            const Scalar x = p_cam.x(), y = p_cam.y(), z = p_cam.z();
            Mat23 J;
            J << view.fx / z, 0, -view.fx * x / (z * z),
                 0, view.fy / z, -view.fy * y / (z * z);
            const Mat23 T = J * view.R_world_to_cam;
            const Mat3 V = act.R * act.scale.cwiseProduct(act.scale).asDiagonal() *
                           act.R.transpose();

            // cov2d = T V T^T (+ floor): pull back to V and to J.
            const Mat3 dV = T.transpose() * dcov2d * T;
            const Mat23 dT = 2.0 * dcov2d * T * V;
            const Mat23 dJ = dT * view.R_world_to_cam.transpose();

            Vec3 dp_cam = Vec3::Zero();
            dp_cam.x() += dJ(0, 2) * (-view.fx / (z * z));
            dp_cam.y() += dJ(1, 2) * (-view.fy / (z * z));
            dp_cam.z() += dJ(0, 0) * (-view.fx / (z * z)) + dJ(1, 1) * (-view.fy / (z * z)) +
                          dJ(0, 2) * (2 * view.fx * x / (z * z * z)) +
                          dJ(1, 2) * (2 * view.fy * y / (z * z * z));

            // 2D center gradient through the perspective division.
            const Vec2 dm = acc.dmean[i];
            dp_cam.x() += dm.x() * view.fx / z;
            dp_cam.y() += dm.y() * view.fy / z;
            dp_cam.z() += -dm.x() * view.fx * x / (z * z) - dm.y() * view.fy * y / (z * z);

            buf.dposition[i] += view.R_cam_to_world * dp_cam;

            // V = M M^T with M = R diag(s).
            const Mat3 M = act.R * act.scale.asDiagonal();
            const Mat3 dM = 2.0 * dV * M;
            const Mat3 dR = dM * act.scale.asDiagonal();
            buf.drotation[i] += quat_rotation_backward(act.unit_q, dR);
            const Mat3 RtdM = act.R.transpose() * dM;
            buf.dscale[i] += RtdM.diagonal();

            // View-dependent color: SH pullback plus the view-direction chain.
            if (acc.dcolor[i].squaredNorm() != 0) {
                const Vec3 to_g = act.position - view.t_cam_to_world;
                const Scalar norm = to_g.norm();
                if (norm > 1e-12) {
                    const Vec3 dir = to_g / norm;
                    const auto grads = eval_sh_color_backward(*act.sh, scene.sh_degree, dir,
                                                              replay.colors[i], acc.dcolor[i]);
                    buf.dsh[i] += grads.dsh;
                    buf.dposition[i] +=
                        (grads.ddir - dir * dir.dot(grads.ddir)) / norm;
                }
            }
        }
    });
}

} // namespace

GradientBuffer rasterize_backward(const Scene& scene, const CameraView& view,
                                  const MultimodalFrame& frame, const ReplayState& replay,
                                  const PixelGradients& pix) {
    check_replay(scene, view, frame, replay, pix);
    const int W = frame.width, H = frame.height, C = frame.num_classes;
    const RenderConfig& cfg = replay.cfg;
    const int threads = resolve_threads(cfg.threads);

    std::vector<ThreadAccum> accums(threads);
    for (auto& a : accums)
        a.init(scene);

    const size_t n_tiles = replay.bins.bins.size();
    parallel_for_chunks(n_tiles, threads, [&](int tid, size_t begin, size_t end) {
        ThreadAccum& acc = accums[tid];
        std::vector<Scalar> accum_sem(C), last_sem(C), dO(C);
        for (size_t tile = begin; tile < end; ++tile) {
            const int tx = int(tile) % replay.bins.tiles_x;
            const int ty = int(tile) / replay.bins.tiles_x;
            const auto& list = replay.bins.bins[tile];
            if (list.empty())
                continue;
            const int px0 = tx * TileBins::kTileSize;
            const int py0 = ty * TileBins::kTileSize;
            const int px1 = std::min(W, px0 + TileBins::kTileSize);
            const int py1 = std::min(H, py0 + TileBins::kTileSize);

            for (int y = py0; y < py1; ++y) {
                for (int x = px0; x < px1; ++x) {
                    const int last_pos = replay.terminus.at(x, y);
                    if (last_pos == 0)
                        continue;

                    const Vec3 dC(pix.dcolor.at(x, y, 0), pix.dcolor.at(x, y, 1),
                                  pix.dcolor.at(x, y, 2));
                    const Scalar dD = pix.ddepth.at(x, y);
                    for (int ch = 0; ch < C; ++ch)
                        dO[ch] = pix.dsemantics.at(x, y, ch);
                    const Scalar dK = pix.dkmap.at(x, y);

                    bool any = dD != 0 || dK != 0 || dC.squaredNorm() != 0;
                    for (int ch = 0; ch < C && !any; ++ch)
                        any = dO[ch] != 0;
                    if (!any)
                        continue;

                    Vec3 origin, dir;
                    compute_ray(view, x + 0.5, y + 0.5, origin, dir);

                    const Scalar T_final = frame.transmittance.at(x, y);
                    const Scalar bg_dot = cfg.background.dot(dC);
                    Scalar T = T_final;

                    Vec3 accum_color = Vec3::Zero(), last_color = Vec3::Zero();
                    std::fill(accum_sem.begin(), accum_sem.end(), 0.0);
                    std::fill(last_sem.begin(), last_sem.end(), 0.0);
                    Scalar accum_k = 0, last_k = 0, last_alpha = 0;

                    for (int pos = last_pos - 1; pos >= 0; --pos) {
                        const int idx = list[pos];
                        const Splat2D& splat = *replay.splats[idx];
                        const ActivatedGaussian& act = replay.activated[idx];
                        const AlphaEval ae =
                            eval_alpha_full(splat, act.alpha, x + 0.5, y + 0.5);
                        if (ae.alpha < kMinAlpha)
                            continue;

                        T /= (1.0 - ae.alpha);
                        const Scalar w = ae.alpha * T;

                        // Blended-attribute gradients.
                        acc.dcolor[idx] += w * dC;
                        for (int ch = 0; ch < C; ++ch)
                            acc.buf.dsemantics[idx][ch] += w * dO[ch];
                        acc.buf.dk[idx] += w * dK;

                        // Depth chain: through the ray-ellipsoid intersection when
                        // the ray hits, through the center depth otherwise.
                        const Scalar dd = dD * w;
                        if (dd != 0) {
                            const auto hit = intersect(act, origin, dir, cfg.sigma_scale);
                            if (hit) {
                                const auto g = intersection_backward(*hit, dd, view, origin,
                                                                     dir, act);
                                acc.buf.dposition[idx] += g.dposition;
                                acc.buf.drotation[idx] += g.dq;
                                acc.buf.dscale[idx] += g.dscale;
                            } else {
                                acc.buf.dposition[idx] +=
                                    dd * view.R_world_to_cam.row(2).transpose();
                            }
                        }

                        // Alpha gradient from the color/semantic/k blends; the depth
                        // channel deliberately contributes nothing here.
                        accum_color = last_alpha * last_color + (1.0 - last_alpha) * accum_color;
                        accum_k = last_alpha * last_k + (1.0 - last_alpha) * accum_k;
                        for (int ch = 0; ch < C; ++ch)
                            accum_sem[ch] =
                                last_alpha * last_sem[ch] + (1.0 - last_alpha) * accum_sem[ch];

                        Scalar dalpha = (replay.colors[idx].rgb - accum_color).dot(dC) * T;
                        dalpha += (act.k - accum_k) * dK * T;
                        for (int ch = 0; ch < C; ++ch)
                            dalpha += ((*act.semantic_logits)[ch] - accum_sem[ch]) * dO[ch] * T;
                        dalpha -= (T_final / (1.0 - ae.alpha)) * bg_dot;

                        if (!ae.clamped) {
                            acc.buf.dopacity[idx] += ae.gauss * dalpha;
                            const Scalar dpower = ae.alpha * dalpha;
                            const Scalar cxx = splat.conic(0, 0), cxy = splat.conic(0, 1),
                                         cyy = splat.conic(1, 1);
                            acc.dmean[idx] += dpower * Vec2(cxx * ae.dx + cxy * ae.dy,
                                                            cxy * ae.dx + cyy * ae.dy);
                            acc.dconic[idx] += dpower * Vec3(-0.5 * ae.dx * ae.dx,
                                                             -0.5 * ae.dx * ae.dy,
                                                             -0.5 * ae.dy * ae.dy);
                        }

                        last_color = replay.colors[idx].rgb;
                        for (int ch = 0; ch < C; ++ch)
                            last_sem[ch] = (*act.semantic_logits)[ch];
                        last_k = act.k;
                        last_alpha = ae.alpha;
                    }
                }
            }
        }
    });

    for (int t = 1; t < threads; ++t)
        accums[0].add(accums[t]);

    GradientBuffer& buf = accums[0].buf;
    projection_backward(scene, view, replay, accums[0], buf, threads);
    buf.check_finite("rasterize_backward");
    return std::move(buf);
}

} // namespace msplat
