#include "msplat/trainer.hpp"

#include "msplat/sh.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace msplat {

void TrainConfig::validate() const {
    if (iterations < 0)
        throw std::invalid_argument("TrainConfig: iterations must be >= 0");
    for (Scalar lr : {lr_position, lr_rotation, lr_scale, lr_opacity, lr_sh, lr_semantics, lr_k})
        if (!(lr > 0))
            throw std::invalid_argument("TrainConfig: learning rates must be positive");
    if (prune_interval < 1)
        throw std::invalid_argument("TrainConfig: prune_interval must be >= 1");
    if (!(prune_threshold > 0))
        throw std::invalid_argument("TrainConfig: prune_threshold must be positive");
    if (step1 >= step2 || step1 < 1)
        throw std::invalid_argument("TrainConfig: need 1 <= step1 < step2");
    if (lambda_fuse < 0 || lambda_fuse > 1)
        throw std::invalid_argument("TrainConfig: lambda_fuse must be in [0,1]");
    if (sh_degree < 0 || sh_degree > 3)
        throw std::invalid_argument("TrainConfig: sh_degree must be in [0,3]");
    if (!(sigma_scale > 0))
        throw std::invalid_argument("TrainConfig: sigma_scale must be positive");
}

OptimizerState OptimizerState::init(const Scene& scene) {
    OptimizerState st;
    st.m.resize_zero(scene);
    st.v.resize_zero(scene);
    st.step = 0;
    return st;
}

Scene init_scene(const std::vector<Vec3>& points, const std::vector<Vec3>& colors,
                 int num_classes, const TrainConfig& cfg) {
    if (points.empty())
        throw std::invalid_argument("init_scene: empty point list");
    if (colors.size() != points.size())
        throw std::invalid_argument("init_scene: point/color count mismatch");

    const size_t n = points.size();
    const Scalar opacity_logit = std::log(0.1 / 0.9);
    const int coeffs = (cfg.sh_degree + 1) * (cfg.sh_degree + 1);

    Scene scene;
    scene.num_classes = num_classes;
    scene.sh_degree = cfg.sh_degree;
    scene.gaussians.resize(n);

    std::vector<Scalar> d2(n > 1 ? n - 1 : 1);
    for (size_t i = 0; i < n; ++i) {
        auto& g = scene.gaussians[i];
        g.position = points[i];
        g.rotation = Vec4(1, 0, 0, 0);
        g.opacity_logit = opacity_logit;
        g.sh = ShMatrix::Zero(3, coeffs);
        g.sh.col(0) = rgb_to_sh_dc(colors[i]);
        g.semantic_logits = VecX::Zero(num_classes);
        g.gradient_factor = cfg.k_reset;

        // Isotropic scale from the mean distance to the three nearest neighbors.
        Scalar mean_dist = 0.1;
        if (n > 1) {
            size_t m = 0;
            for (size_t j = 0; j < n; ++j)
                if (j != i)
                    d2[m++] = (points[j] - points[i]).squaredNorm();
            const size_t kn = std::min<size_t>(3, m);
            std::partial_sort(d2.begin(), d2.begin() + kn, d2.begin() + m);
            Scalar acc = 0;
            for (size_t j = 0; j < kn; ++j)
                acc += std::sqrt(d2[j]);
            mean_dist = std::max(acc / Scalar(kn), Scalar(1e-4));
        }
        g.log_scale = Vec3::Constant(std::log(mean_dist));
    }
    return scene;
}

namespace {

inline Scalar adam_update(Scalar grad, Scalar& m, Scalar& v, Scalar lr, Scalar bc1, Scalar bc2) {
    m = kAdamBeta1 * m + (1 - kAdamBeta1) * grad;
    v = kAdamBeta2 * v + (1 - kAdamBeta2) * grad * grad;
    return lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
}

} // namespace

void adam_step(Scene& scene, const GradientBuffer& grads, OptimizerState& state,
               const TrainConfig& cfg) {
    if (!grads.raw_space)
        throw std::logic_error("adam_step: gradients not chained to raw parameters");
    if (grads.size() != scene.size() || state.m.size() != scene.size())
        throw std::invalid_argument("adam_step: size mismatch");

    state.step += 1;
    const Scalar bc1 = 1 - std::pow(kAdamBeta1, Scalar(state.step));
    const Scalar bc2 = 1 - std::pow(kAdamBeta2, Scalar(state.step));

    for (size_t i = 0; i < scene.size(); ++i) {
        auto& g = scene.gaussians[i];
        for (int c = 0; c < 3; ++c)
            g.position[c] -= adam_update(grads.dposition[i][c], state.m.dposition[i][c],
                                         state.v.dposition[i][c], cfg.lr_position, bc1, bc2);
        for (int c = 0; c < 4; ++c)
            g.rotation[c] -= adam_update(grads.drotation[i][c], state.m.drotation[i][c],
                                         state.v.drotation[i][c], cfg.lr_rotation, bc1, bc2);
        for (int c = 0; c < 3; ++c)
            g.log_scale[c] -= adam_update(grads.dscale[i][c], state.m.dscale[i][c],
                                          state.v.dscale[i][c], cfg.lr_scale, bc1, bc2);
        g.opacity_logit -= adam_update(grads.dopacity[i], state.m.dopacity[i],
                                       state.v.dopacity[i], cfg.lr_opacity, bc1, bc2);
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < g.sh.cols(); ++j)
                g.sh(c, j) -= adam_update(grads.dsh[i](c, j), state.m.dsh[i](c, j),
                                          state.v.dsh[i](c, j), cfg.lr_sh, bc1, bc2);
        for (int c = 0; c < g.semantic_logits.size(); ++c)
            g.semantic_logits[c] -=
                adam_update(grads.dsemantics[i][c], state.m.dsemantics[i][c],
                            state.v.dsemantics[i][c], cfg.lr_semantics, bc1, bc2);
        g.gradient_factor -= adam_update(grads.dk[i], state.m.dk[i], state.v.dk[i], cfg.lr_k,
                                         bc1, bc2);
    }
}

size_t prune(Scene& scene, OptimizerState& state, const TrainConfig& cfg) {
    std::vector<size_t> keep;
    keep.reserve(scene.size());
    for (size_t i = 0; i < scene.size(); ++i) {
        const Scalar dev = std::abs(scene.gaussians[i].gradient_factor - 1.0);
        const bool anomalous = cfg.prune_keep_small ? dev < cfg.prune_threshold
                                                    : dev > cfg.prune_threshold;
        if (!anomalous)
            keep.push_back(i);
    }
    if (keep.empty())
        throw std::runtime_error("prune: threshold " + std::to_string(cfg.prune_threshold) +
                                 " would remove every gaussian");
    const size_t removed = scene.size() - keep.size();

    auto compact = [&](auto& vec) {
        for (size_t j = 0; j < keep.size(); ++j)
            if (keep[j] != j)
                vec[j] = std::move(vec[keep[j]]);
        vec.resize(keep.size());
    };
    compact(scene.gaussians);
    for (auto* buf : {&state.m, &state.v}) {
        compact(buf->dposition);
        compact(buf->drotation);
        compact(buf->dscale);
        compact(buf->dopacity);
        compact(buf->dsh);
        compact(buf->dsemantics);
        compact(buf->dk);
    }
    for (auto& g : scene.gaussians)
        g.gradient_factor = cfg.k_reset;
    return removed;
}

FrameLossResult evaluate_frame_losses(const MultimodalFrame& frame, const NormalState& nstate,
                                      const FrameRecord& gt, const CameraView& view,
                                      const TrainConfig& cfg) {
    const int W = frame.width, H = frame.height;
    FrameLossResult out;
    out.pixel_grads = PixelGradients::zero(W, H, frame.num_classes);

    auto enabled = [&](int i) { return cfg.lambdas[i] > 0; };

    ScalarLoss l1, ssim, normal_l, depth_l, seg, k_l;
    if (enabled(0) || enabled(1)) {
        if (gt.rgb.empty())
            throw std::runtime_error("rgb loss enabled but the frame has no rgb ground truth (" +
                                     (gt.rgb_path.empty() ? std::string("<missing>") : gt.rgb_path) +
                                     ")");
        if (enabled(0))
            l1 = l1_rgb(frame.color, gt.rgb);
        if (enabled(1))
            ssim = ssim_loss(frame.color, gt.rgb);
    }

    out.normal_mask = Grid<std::uint8_t>(W, H, 1, 0);
    if (enabled(2)) {
        if (gt.normal.empty())
            throw std::runtime_error("normal loss enabled but the frame has no normal ground "
                                     "truth (" +
                                     (gt.normal_path.empty() ? std::string("<missing>")
                                                             : gt.normal_path) +
                                     ")");
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const bool gt_ok = gt.normal.at(x, y, 0) != 0 || gt.normal.at(x, y, 1) != 0 ||
                                   gt.normal.at(x, y, 2) != 0;
                out.normal_mask.at(x, y) = nstate.valid.at(x, y) && gt_ok;
            }
        normal_l = normal_cosine(frame.normals, gt.normal, out.normal_mask);
    }

    Grid<std::uint8_t> depth_mask(W, H, 1, 0);
    if (enabled(3)) {
        if (gt.depth.empty())
            throw std::runtime_error("depth loss enabled but the frame has no depth ground "
                                     "truth (" +
                                     (gt.depth_path.empty() ? std::string("<missing>")
                                                            : gt.depth_path) +
                                     ")");
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                depth_mask.at(x, y) = gt.depth.at(x, y) > 0;
        depth_l = depth_l1(frame.depth, gt.depth, depth_mask);
    }

    if (enabled(4)) {
        if (gt.labels.empty())
            throw std::runtime_error("segmentation loss enabled but the frame has no label "
                                     "ground truth (" +
                                     (gt.sem_path.empty() ? std::string("<missing>") : gt.sem_path) +
                                     ")");
        Grid<std::uint8_t> all(W, H, 1, 1);
        seg = cross_entropy_seg(frame.semantics, gt.labels, all);
    }

    if (enabled(5))
        k_l = gradient_factor_loss(frame.kmap);

    out.report = combine(l1.value, ssim.value, normal_l.value, depth_l.value, seg.value,
                         k_l.value, cfg.lambdas);

    // Assemble the per-map gradient seeds, each scaled by its effective weight.
    auto& pg = out.pixel_grads;
    if (enabled(0))
        for (size_t i = 0; i < pg.dcolor.size(); ++i)
            pg.dcolor.storage()[i] += out.report.seed_l1 * l1.grad.storage()[i];
    if (enabled(1) && out.report.seed_ssim != 0)
        for (size_t i = 0; i < pg.dcolor.size(); ++i)
            pg.dcolor.storage()[i] += out.report.seed_ssim * ssim.grad.storage()[i];
    if (enabled(3) && out.report.seed_depth != 0)
        for (size_t i = 0; i < pg.ddepth.size(); ++i)
            pg.ddepth.storage()[i] += out.report.seed_depth * depth_l.grad.storage()[i];
    if (enabled(4) && out.report.seed_seg != 0)
        for (size_t i = 0; i < pg.dsemantics.size(); ++i)
            pg.dsemantics.storage()[i] += out.report.seed_seg * seg.grad.storage()[i];
    if (enabled(5) && out.report.seed_k != 0)
        for (size_t i = 0; i < pg.dkmap.size(); ++i)
            pg.dkmap.storage()[i] += out.report.seed_k * k_l.grad.storage()[i];

    // Normal loss reaches the gaussians through the depth map.
    if (enabled(2) && out.report.seed_normal != 0) {
        GridF dD = normals_backward(normal_l.grad, nstate, view);
        for (size_t i = 0; i < pg.ddepth.size(); ++i)
            pg.ddepth.storage()[i] += out.report.seed_normal * dD.storage()[i];
    }
    return out;
}

TrainResult train(const SceneDataset& dataset, const TrainConfig& cfg) {
    cfg.validate();
    const auto train_views = dataset.train_indices();
    if (train_views.size() < 2)
        throw std::invalid_argument("train: need at least 2 training views");
    if (dataset.points.empty())
        throw std::invalid_argument("train: dataset has no initial points");

    TrainResult result;
    result.scene = init_scene(dataset.points, dataset.point_colors, dataset.num_classes, cfg);
    OptimizerState opt = OptimizerState::init(result.scene);

    // Round-robin over a seed-shuffled view order.
    std::vector<int> order = train_views;
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng);

    const RenderConfig render_cfg = cfg.render_config();
    const NormalConfig normal_cfg = cfg.normal_config();

    Scene last_good = result.scene;
    result.log.reserve(cfg.iterations);

    for (int it = 1; it <= cfg.iterations; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        const int view_index = order[size_t(it - 1) % order.size()];
        const FrameRecord& gt = dataset.frames[view_index];

        ReplayState replay;
        MultimodalFrame frame = rasterize(result.scene, gt.view, render_cfg, &replay);
        NormalState nstate = estimate_normals(frame.depth, frame.transmittance, gt.view,
                                              normal_cfg, frame.normals);
        FrameLossResult losses = evaluate_frame_losses(frame, nstate, gt, gt.view, cfg);

        if (!std::isfinite(losses.report.combined)) {
            result.scene = last_good;
            result.halted_non_finite = true;
            break;
        }
        last_good = result.scene;

        GradientBuffer grads =
            rasterize_backward(result.scene, gt.view, frame, replay, losses.pixel_grads);
        chain_activations(grads, result.scene);
        adam_step(result.scene, grads, opt, cfg);

        size_t removed = 0;
        if (cfg.prune_enabled && it % cfg.prune_interval == 0)
            removed = prune(result.scene, opt, cfg);
        (void)removed;

        IterationLog entry;
        entry.iteration = it;
        entry.view_index = view_index;
        entry.losses = losses.report;
        entry.gaussian_count = result.scene.size();
        entry.wall_ms =
            cfg.deterministic
                ? 0.0
                : std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
        result.log.push_back(entry);
        result.completed_iterations = it;
    }
    return result;
}

} // namespace msplat
