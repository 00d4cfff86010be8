#include "msplat/rasterizer.hpp"

#include "msplat/oracle.hpp"
#include "test_common.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace msplat;
using namespace msplat::testing;

namespace {

GaussianPrimitive axis_gaussian(Scalar z, Scalar scale, int num_classes, Scalar k = 1.0) {
    GaussianPrimitive g;
    g.position = Vec3(0, 0, z);
    g.rotation = Vec4(1, 0, 0, 0);
    g.log_scale = Vec3::Constant(std::log(scale));
    g.opacity_logit = 0; // alpha 0.5
    g.sh = ShMatrix::Zero(3, 1);
    g.semantic_logits = VecX::Zero(num_classes);
    g.gradient_factor = k;
    return g;
}

// Camera whose pixel (7,7) center coincides with the principal point.
CameraView centered_camera(int w = 16, int h = 16, Scalar f = 20.0) {
    return make_camera(f, f, 7.5, 7.5, w, h, Mat3::Identity(), Vec3::Zero());
}

} // namespace

TEST_CASE("bin_and_sort assigns splats to overlapped tiles in depth order") {
    std::vector<std::optional<Splat2D>> splats(2);
    Splat2D wide;
    wide.center = Vec2(16, 16);
    wide.radius = 100;
    wide.sort_depth = 2.0;
    Splat2D narrow;
    narrow.center = Vec2(4, 4);
    narrow.radius = 2;
    narrow.sort_depth = 1.0;
    splats[0] = wide;
    splats[1] = narrow;

    const TileBins bins = bin_and_sort(splats, 32, 32);
    CHECK(bins.tiles_x == 2);
    CHECK(bins.tiles_y == 2);
    for (const auto& bin : bins.bins)
        CHECK(std::find(bin.begin(), bin.end(), 0) != bin.end()); // wide covers everything
    // Shared tile lists the nearer splat first.
    CHECK(bins.tile(0, 0) == std::vector<int>{1, 0});

    // Random layouts match a brute-force overlap test.
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<Scalar> u(0, 1);
    std::vector<std::optional<Splat2D>> random_splats(100);
    for (auto& s : random_splats) {
        Splat2D sp;
        sp.center = Vec2(40 * u(rng) - 4, 40 * u(rng) - 4);
        sp.radius = 6 * u(rng);
        sp.sort_depth = u(rng);
        s = sp;
    }
    const TileBins rb = bin_and_sort(random_splats, 32, 32);
    for (int ty = 0; ty < rb.tiles_y; ++ty)
        for (int tx = 0; tx < rb.tiles_x; ++tx) {
            std::vector<int> expected;
            for (int i = 0; i < 100; ++i) {
                const auto& s = *random_splats[i];
                const int x0 = std::max(0, int(std::floor(s.center.x() - s.radius)));
                const int x1 = std::min(31, int(std::floor(s.center.x() + s.radius)));
                const int y0 = std::max(0, int(std::floor(s.center.y() - s.radius)));
                const int y1 = std::min(31, int(std::floor(s.center.y() + s.radius)));
                if (x1 < x0 || y1 < y0)
                    continue;
                if (tx >= x0 / 16 && tx <= x1 / 16 && ty >= y0 / 16 && ty <= y1 / 16)
                    expected.push_back(i);
            }
            std::sort(expected.begin(), expected.end(), [&](int a, int b) {
                const Scalar da = random_splats[a]->sort_depth, db = random_splats[b]->sort_depth;
                return da != db ? da < db : a < b;
            });
            CHECK(rb.tile(tx, ty) == expected);
        }
}

TEST_CASE("two-contributor blend matches the closed form") {
    Scene scene;
    scene.sh_degree = 0;
    scene.num_classes = 1;
    scene.gaussians.push_back(axis_gaussian(1.0, 0.2, 1));
    scene.gaussians.push_back(axis_gaussian(2.0, 0.4, 1));
    const CameraView view = centered_camera();
    RenderConfig cfg;

    const MultimodalFrame frame = rasterize(scene, view, cfg);
    // Pixel (7,7) lies exactly at both splat centers: alpha = 0.5 each, and the
    // axial rays hit sphere midpoints at the center depths.
    CHECK(frame.depth.at(7, 7) == doctest::Approx(0.5 * 1.0 + 0.25 * 2.0).epsilon(1e-12));
    CHECK(frame.kmap.at(7, 7) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(frame.transmittance.at(7, 7) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(frame.contributors.at(7, 7) == 2);
}

TEST_CASE("empty scene renders background only") {
    Scene scene;
    scene.sh_degree = 0;
    scene.num_classes = 2;
    const CameraView view = centered_camera();
    RenderConfig cfg;
    cfg.background = Vec3(0.2, 0.4, 0.6);
    const MultimodalFrame frame = rasterize(scene, view, cfg);
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) {
            CHECK(frame.color.at(x, y, 0) == doctest::Approx(0.2));
            CHECK(frame.color.at(x, y, 2) == doctest::Approx(0.6));
            CHECK(frame.depth.at(x, y) == 0);
            CHECK(frame.kmap.at(x, y) == 0);
            CHECK(frame.semantics.at(x, y, 0) == 0);
            CHECK(frame.transmittance.at(x, y) == 1);
        }
}

TEST_CASE("tile rasterizer equals the brute-force oracle") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 4; ++trial) {
        const Scene scene = random_scene(rng, 150, 1, 3);
        const CameraView view = make_camera(30, 30, 16, 16, 32, 32, Mat3::Identity(),
                                            Vec3(0.1 * trial, 0, -0.5));
        RenderConfig cfg;
        cfg.background = Vec3(0.1, 0.2, 0.3);
        cfg.threads = 2;
        const MultimodalFrame tiled = rasterize(scene, view, cfg);
        const MultimodalFrame brute = brute_force_render(scene, view, cfg);

        Scalar worst = 0;
        for (size_t i = 0; i < tiled.color.size(); ++i)
            worst = std::max(worst,
                             std::abs(tiled.color.storage()[i] - brute.color.storage()[i]));
        for (size_t i = 0; i < tiled.depth.size(); ++i) {
            worst = std::max(worst,
                             std::abs(tiled.depth.storage()[i] - brute.depth.storage()[i]));
            worst = std::max(worst,
                             std::abs(tiled.kmap.storage()[i] - brute.kmap.storage()[i]));
            worst = std::max(worst, std::abs(tiled.transmittance.storage()[i] -
                                             brute.transmittance.storage()[i]));
        }
        for (size_t i = 0; i < tiled.semantics.size(); ++i)
            worst = std::max(worst, std::abs(tiled.semantics.storage()[i] -
                                             brute.semantics.storage()[i]));
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("per-pixel blending weights sum to 1 - T_final") {
    std::mt19937_64 rng(103);
    const Scene scene = random_scene(rng, 60, 0, 2);
    const CameraView view = simple_camera(16, 16, 18.0);
    RenderConfig cfg;
    const MultimodalFrame frame = rasterize(scene, view, cfg);
    const auto lists = frozen_contributors(scene, view, cfg);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            Scalar wsum = 0;
            for (const auto& c : lists[size_t(y) * 16 + x])
                wsum += c.weight;
            CHECK(wsum + frame.transmittance.at(x, y) == doctest::Approx(1.0).epsilon(1e-6));
        }
}

TEST_CASE("gradient-factor map is linear in k") {
    std::mt19937_64 rng(107);
    Scene scene = random_scene(rng, 40, 0, 1);
    const CameraView view = simple_camera(16, 16, 18.0);
    RenderConfig cfg;
    const MultimodalFrame base = rasterize(scene, view, cfg);
    const Scalar c = 3.7;
    for (auto& g : scene.gaussians)
        g.gradient_factor *= c;
    const MultimodalFrame scaled = rasterize(scene, view, cfg);
    for (size_t i = 0; i < base.kmap.size(); ++i)
        CHECK(scaled.kmap.storage()[i] == doctest::Approx(c * base.kmap.storage()[i]));
}

TEST_CASE("early termination changes outputs by at most 1e-4") {
    std::mt19937_64 rng(109);
    Scene scene = random_scene(rng, 120, 0, 1);
    for (auto& g : scene.gaussians)
        g.opacity_logit = 2.5; // opaque scene so termination actually kicks in
    const CameraView view = simple_camera(16, 16, 18.0);
    RenderConfig with;
    RenderConfig without;
    without.early_termination = false;
    const MultimodalFrame a = rasterize(scene, view, with);
    const MultimodalFrame b = rasterize(scene, view, without);
    bool terminated_somewhere = false;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            terminated_somewhere =
                terminated_somewhere || a.contributors.at(x, y) != b.contributors.at(x, y);
            CHECK(std::abs(a.depth.at(x, y) - b.depth.at(x, y)) < 1e-4);
            CHECK(std::abs(a.kmap.at(x, y) - b.kmap.at(x, y)) < 1e-4);
            for (int ch = 0; ch < 3; ++ch)
                CHECK(std::abs(a.color.at(x, y, ch) - b.color.at(x, y, ch)) < 1e-4);
        }
    CHECK(terminated_somewhere);
}

TEST_CASE("backward trivial cases for k and semantics") {
    Scene scene;
    scene.sh_degree = 0;
    scene.num_classes = 3;
    scene.gaussians.push_back(axis_gaussian(1.0, 0.3, 3, 0.9));
    scene.gaussians.back().opacity_logit = 12.0; // alpha ~ 1, clamped at 0.99
    scene.gaussians.back().semantic_logits = Eigen::Vector3d(0.3, -0.2, 1.1);
    scene.gaussians.push_back(axis_gaussian(2.5, 0.3, 3, 0.4));
    const CameraView view = centered_camera();
    RenderConfig cfg;

    ReplayState replay;
    const MultimodalFrame frame = rasterize(scene, view, cfg, &replay);

    SUBCASE("dk equals the blending weight of the covering gaussian") {
        PixelGradients pix = PixelGradients::zero(16, 16, 3);
        pix.dkmap.at(7, 7) = 1.0;
        const GradientBuffer buf = rasterize_backward(scene, view, frame, replay, pix);
        const Scalar w_front = 0.99; // alpha clamp at the covering pixel
        CHECK(buf.dk[0] == doctest::Approx(w_front).epsilon(1e-12));
        CHECK(buf.dk[1] == doctest::Approx(0.01 * eval_alpha(*replay.splats[1],
                                                             replay.activated[1].alpha, 7.5,
                                                             7.5))
                               .epsilon(1e-9));
    }
    SUBCASE("zero semantic seeds give zero semantic gradients") {
        PixelGradients pix = PixelGradients::zero(16, 16, 3);
        pix.dkmap.at(3, 3) = 0.5; // unrelated channel
        const GradientBuffer buf = rasterize_backward(scene, view, frame, replay, pix);
        for (size_t i = 0; i < scene.size(); ++i)
            CHECK(buf.dsemantics[i].norm() == 0);
    }
    SUBCASE("single-contributor semantic gradient follows the chain rule") {
        // Cross-entropy seed at one pixel; the front gaussian receives
        // weight * (softmax(O) - onehot).
        const int label = 1;
        VecX logits(3);
        for (int ch = 0; ch < 3; ++ch)
            logits[ch] = frame.semantics.at(7, 7, ch);
        VecX soft = (logits.array() - logits.maxCoeff()).exp();
        soft /= soft.sum();
        PixelGradients pix = PixelGradients::zero(16, 16, 3);
        for (int ch = 0; ch < 3; ++ch)
            pix.dsemantics.at(7, 7, ch) = soft[ch] - (ch == label ? 1.0 : 0.0);
        const GradientBuffer buf = rasterize_backward(scene, view, frame, replay, pix);
        for (int ch = 0; ch < 3; ++ch)
            CHECK(buf.dsemantics[0][ch] ==
                  doctest::Approx(0.99 * (soft[ch] - (ch == label ? 1.0 : 0.0)))
                      .epsilon(1e-6));
    }
}

TEST_CASE("dk against dL/dK=1 reproduces recorded per-gaussian weight sums") {
    std::mt19937_64 rng(113);
    const Scene scene = random_scene(rng, 50, 0, 2);
    const CameraView view = simple_camera(16, 16, 18.0);
    RenderConfig cfg;
    ReplayState replay;
    const MultimodalFrame frame = rasterize(scene, view, cfg, &replay);
    PixelGradients pix = PixelGradients::zero(16, 16, 2);
    pix.dkmap.fill(1.0);
    const GradientBuffer buf = rasterize_backward(scene, view, frame, replay, pix);
    for (size_t i = 0; i < scene.size(); ++i)
        CHECK(buf.dk[i] == doctest::Approx(replay.weight_sums[i]).epsilon(1e-5));
}

TEST_CASE("backward detects scene changes since the forward pass") {
    std::mt19937_64 rng(117);
    Scene scene = random_scene(rng, 5, 0, 1);
    const CameraView view = simple_camera();
    RenderConfig cfg;
    ReplayState replay;
    const MultimodalFrame frame = rasterize(scene, view, cfg, &replay);
    scene.gaussians[2].position.x() += 0.5;
    PixelGradients pix = PixelGradients::zero(16, 16, 1);
    CHECK_THROWS_WITH_AS(rasterize_backward(scene, view, frame, replay, pix),
                         doctest::Contains("modified"), std::runtime_error);
}

TEST_CASE("depth-loss gradients match frozen-weight finite differences") {
    // The depth channel routes dd_i only through the intersection chain (the
    // blending weights receive no depth gradient), so the oracle freezes the
    // forward weights and differentiates only the per-contributor depths.
    std::mt19937_64 rng(131);
    Scalar worst = 0;
    for (int trial = 0; trial < 5; ++trial) {
        Scene scene = random_scene(rng, 8, 0, 1);
        const CameraView view = simple_camera(16, 16, 18.0);
        RenderConfig cfg;
        ReplayState replay;
        const MultimodalFrame frame = rasterize(scene, view, cfg, &replay);
        const auto lists = frozen_contributors(scene, view, cfg);

        GridF gt(16, 16, 1, 0.0);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                gt.at(x, y) = frame.depth.at(x, y) + 0.3; // keep |.| away from its kink

        const Scalar n_pix = 16.0 * 16.0;
        auto loss_of = [&](const Scene& s) {
            const auto activated = activate_scene(s);
            Scalar loss = 0;
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    Vec3 origin, dir;
                    compute_ray(view, x + 0.5, y + 0.5, origin, dir);
                    Scalar depth = 0;
                    for (const auto& c : lists[size_t(y) * 16 + x]) {
                        const auto hit = intersect(activated[c.index], origin, dir,
                                                   cfg.sigma_scale);
                        Scalar d;
                        if (hit)
                            d = midpoint_depth(view, origin, dir, hit->t_mid);
                        else
                            d = view.cam_depth(activated[c.index].position);
                        depth += c.weight * d;
                    }
                    loss += std::abs(depth - gt.at(x, y));
                }
            return loss / n_pix;
        };

        PixelGradients pix = PixelGradients::zero(16, 16, 1);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const Scalar diff = frame.depth.at(x, y) - gt.at(x, y);
                pix.ddepth.at(x, y) = (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) / n_pix;
            }
        GradientBuffer grads = rasterize_backward(scene, view, frame, replay, pix);
        chain_activations(grads, scene);

        // Gaussians with any near-tangent ray are excluded from comparison.
        std::vector<bool> skip(scene.size(), false);
        for (const auto& pixel : lists)
            for (const auto& c : pixel)
                if (std::abs(c.disc) < 1e-5)
                    skip[c.index] = true;

        const Scalar eps = 1e-4;
        for (size_t i = 0; i < scene.size(); ++i) {
            if (skip[i])
                continue;
            VecX analytic(10), numeric(10);
            int col = 0;
            auto fd = [&](auto&& setter, Scalar base) {
                Scene hi = scene, lo = scene;
                setter(hi.gaussians[i], base + eps);
                setter(lo.gaussians[i], base - eps);
                return (loss_of(hi) - loss_of(lo)) / (2 * eps);
            };
            for (int c = 0; c < 3; ++c, ++col) {
                analytic[col] = grads.dposition[i][c];
                numeric[col] =
                    fd([c](GaussianPrimitive& g, Scalar v) { g.position[c] = v; },
                       scene.gaussians[i].position[c]);
            }
            for (int c = 0; c < 4; ++c, ++col) {
                analytic[col] = grads.drotation[i][c];
                numeric[col] =
                    fd([c](GaussianPrimitive& g, Scalar v) { g.rotation[c] = v; },
                       scene.gaussians[i].rotation[c]);
            }
            for (int c = 0; c < 3; ++c, ++col) {
                analytic[col] = grads.dscale[i][c];
                numeric[col] =
                    fd([c](GaussianPrimitive& g, Scalar v) { g.log_scale[c] = v; },
                       scene.gaussians[i].log_scale[c]);
            }
            worst = std::max(worst, max_rel_error(analytic, numeric, 1e-5));
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("backward accumulation is reproducible across runs and thread counts") {
    std::mt19937_64 rng(137);
    const Scene scene = random_scene(rng, 64, 1, 2);
    const CameraView view = simple_camera(32, 32, 30.0);

    auto run = [&](int threads) {
        RenderConfig cfg;
        cfg.threads = threads;
        ReplayState replay;
        const MultimodalFrame frame = rasterize(scene, view, cfg, &replay);
        PixelGradients pix = PixelGradients::zero(32, 32, 2);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                pix.dcolor.at(x, y, 0) = 0.01 * x;
                pix.ddepth.at(x, y) = 0.02;
                pix.dsemantics.at(x, y, 1) = -0.01 * y;
                pix.dkmap.at(x, y) = 0.005;
            }
        return rasterize_backward(scene, view, frame, replay, pix);
    };

    const GradientBuffer a = run(2);
    const GradientBuffer b = run(2);
    const GradientBuffer c = run(1);
    for (size_t i = 0; i < scene.size(); ++i) {
        CHECK((a.dposition[i].array() == b.dposition[i].array()).all());
        CHECK((a.drotation[i].array() == b.drotation[i].array()).all());
        CHECK((a.dscale[i].array() == b.dscale[i].array()).all());
        CHECK(a.dopacity[i] == b.dopacity[i]);
        CHECK(a.dk[i] == b.dk[i]);
        // Same totals from the single-threaded accumulator (order differs).
        CHECK(c.dposition[i].isApprox(a.dposition[i], 1e-12));
    }
}
