#pragma once

#include "msplat/camera.hpp"
#include "msplat/rasterizer.hpp"
#include "msplat/scene.hpp"

#include <random>

namespace msplat::testing {

inline Mat3 rotation_about(const Vec3& axis, Scalar angle) {
    return Eigen::AngleAxis<Scalar>(angle, axis.normalized()).toRotationMatrix();
}

inline Vec4 random_unit_quat(std::mt19937_64& rng) {
    std::normal_distribution<Scalar> g(0, 1);
    Vec4 q(g(rng), g(rng), g(rng), g(rng));
    while (q.norm() < 1e-6)
        q = Vec4(g(rng), g(rng), g(rng), g(rng));
    return q / q.norm();
}

inline GaussianPrimitive random_primitive(std::mt19937_64& rng, int sh_coeffs, int num_classes) {
    std::uniform_real_distribution<Scalar> u(-1, 1);
    std::normal_distribution<Scalar> g(0, 1);
    GaussianPrimitive p;
    p.position = Vec3(1.5 * u(rng), 1.5 * u(rng), 2.2 + 1.2 * u(rng));
    p.rotation = random_unit_quat(rng);
    p.log_scale = Vec3(u(rng), u(rng), u(rng)) * 0.7 - Vec3::Constant(1.3);
    p.opacity_logit = 0.8 * u(rng) + 0.3;
    p.sh = ShMatrix::Zero(3, sh_coeffs);
    for (int c = 0; c < 3; ++c)
        for (int j = 0; j < sh_coeffs; ++j)
            p.sh(c, j) = (j == 0 ? 0.4 * u(rng) : 0.1 * u(rng));
    p.semantic_logits = VecX::Zero(num_classes);
    for (int j = 0; j < num_classes; ++j)
        p.semantic_logits[j] = u(rng);
    p.gradient_factor = 0.9 + 0.2 * u(rng);
    return p;
}

inline Scene random_scene(std::mt19937_64& rng, size_t n, int sh_degree = 1,
                          int num_classes = 3) {
    Scene scene;
    scene.sh_degree = sh_degree;
    scene.num_classes = num_classes;
    const int coeffs = scene.sh_coeff_count();
    for (size_t i = 0; i < n; ++i)
        scene.gaussians.push_back(random_primitive(rng, coeffs, num_classes));
    return scene;
}

inline CameraView simple_camera(int w = 16, int h = 16, Scalar f = 20.0) {
    return make_camera(f, f, w / 2.0, h / 2.0, w, h, Mat3::Identity(), Vec3::Zero());
}

inline Scalar max_rel_error(const VecX& a, const VecX& b, Scalar floor = 1e-7) {
    Scalar worst = 0;
    for (int i = 0; i < a.size(); ++i) {
        const Scalar denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

struct Contributor {
    int index;
    Scalar weight;
    Scalar disc; // ray-ellipsoid discriminant (finite even without a hit)
};

/// Test-side replication of the forward blend: freezes per-pixel contributor
/// lists, weights, and discriminants for the depth-chain oracle.
inline std::vector<std::vector<Contributor>> frozen_contributors(const Scene& scene,
                                                                 const CameraView& view,
                                                                 const RenderConfig& cfg) {
    const auto activated = activate_scene(scene);
    std::vector<std::optional<Splat2D>> splats(scene.size());
    for (size_t i = 0; i < scene.size(); ++i)
        splats[i] = project_gaussian(activated[i], view);
    const TileBins bins = bin_and_sort(splats, view.width, view.height);

    std::vector<std::vector<Contributor>> out(size_t(view.width) * view.height);
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) {
            const auto& list = bins.tile(x / TileBins::kTileSize, y / TileBins::kTileSize);
            Scalar T = 1;
            for (int idx : list) {
                const Scalar alpha =
                    eval_alpha(*splats[idx], activated[idx].alpha, x + 0.5, y + 0.5);
                if (alpha < kMinAlpha)
                    continue;
                Vec3 origin, dir;
                compute_ray(view, x + 0.5, y + 0.5, origin, dir);
                const auto& act = activated[idx];
                const Vec3 axes = cfg.sigma_scale * act.scale;
                const Vec3 v_s = (act.R.transpose() * (origin - act.position)).cwiseQuotient(axes);
                const Vec3 d_s = (act.R.transpose() * dir).cwiseQuotient(axes);
                const Scalar qa = d_s.squaredNorm();
                const Scalar qb = 2 * v_s.dot(d_s);
                const Scalar disc = qb * qb - 4 * qa * (v_s.squaredNorm() - 1.0);
                out[size_t(y) * view.width + x].push_back({idx, alpha * T, disc});
                T *= (1 - alpha);
                if (cfg.early_termination && T < cfg.early_stop_transmittance)
                    break;
            }
        }
    return out;
}

} // namespace msplat::testing
