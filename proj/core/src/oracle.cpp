#include "msplat/oracle.hpp"

#include "msplat/geometry.hpp"
#include "msplat/sh.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace msplat {

MultimodalFrame brute_force_render(const Scene& scene, const CameraView& view,
                                   const RenderConfig& cfg) {
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

    const auto activated = activate_scene(scene);
    std::vector<std::optional<Splat2D>> splats(scene.size());
    std::vector<Vec3> colors(scene.size(), Vec3::Zero());
    std::vector<int> order;
    for (size_t i = 0; i < scene.size(); ++i) {
        splats[i] = project_gaussian(activated[i], view);
        if (!splats[i])
            continue;
        order.push_back(int(i));
        const Vec3 to_g = activated[i].position - view.t_cam_to_world;
        const Scalar norm = to_g.norm();
        const Vec3 dir = norm > 1e-12 ? Vec3(to_g / norm) : Vec3(0, 0, 1);
        colors[i] = eval_sh_color(*activated[i].sh, scene.sh_degree, dir).rgb;
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const Scalar da = splats[a]->sort_depth, db = splats[b]->sort_depth;
        return da != db ? da < db : a < b;
    });

    std::vector<Scalar> sem(C);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            Vec3 origin, dir;
            compute_ray(view, x + 0.5, y + 0.5, origin, dir);

            Vec3 color = Vec3::Zero();
            Scalar depth = 0, k = 0, T = 1.0;
            std::fill(sem.begin(), sem.end(), 0.0);
            int count = 0;
            for (const int idx : order) {
                const Scalar alpha = eval_alpha(*splats[idx], activated[idx].alpha, x + 0.5,
                                                y + 0.5);
                if (alpha < kMinAlpha)
                    continue;
                Scalar d;
                const auto hit = intersect(activated[idx], origin, dir, cfg.sigma_scale);
                d = hit ? midpoint_depth(view, origin, dir, hit->t_mid)
                        : splats[idx]->sort_depth;

                const Scalar w = alpha * T;
                color += w * colors[idx];
                depth += w * d;
                for (int ch = 0; ch < C; ++ch)
                    sem[ch] += w * (*activated[idx].semantic_logits)[ch];
                k += w * activated[idx].k;
                T *= (1.0 - alpha);
                ++count;
                if (cfg.early_termination && T < cfg.early_stop_transmittance)
                    break;
            }
            color += T * cfg.background;
            for (int ch = 0; ch < 3; ++ch)
                frame.color.at(x, y, ch) = color[ch];
            frame.depth.at(x, y) = depth;
            for (int ch = 0; ch < C; ++ch)
                frame.semantics.at(x, y, ch) = sem[ch];
            frame.kmap.at(x, y) = k;
            frame.transmittance.at(x, y) = T;
            frame.contributors.at(x, y) = count;
        }
    return frame;
}

VecX finite_diff(const std::function<Scalar(const VecX&)>& f, const VecX& theta, Scalar eps) {
    VecX grad(theta.size());
    VecX probe = theta;
    for (int i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + eps;
        const Scalar hi = f(probe);
        probe[i] = theta[i] - eps;
        const Scalar lo = f(probe);
        probe[i] = theta[i];
        grad[i] = (hi - lo) / (2 * eps);
    }
    return grad;
}

namespace {

Vec3 plane_albedo(const Vec3& p) {
    return Vec3(0.55 + 0.25 * std::sin(1.3 * p.x() + 0.7),
                0.55 + 0.25 * std::sin(1.1 * p.y() + 2.0),
                0.55 + 0.22 * std::sin(0.9 * (p.x() + p.y())));
}

Vec3 sphere_albedo(int label, const Vec3& local) {
    static const Vec3 base[3] = {Vec3(0.75, 0.35, 0.30), Vec3(0.30, 0.65, 0.35),
                                 Vec3(0.30, 0.40, 0.75)};
    const Vec3 b = base[(label - 1) % 3];
    const Scalar wobble = 0.12 * std::sin(3.0 * local.x() + 2.0 * local.y() + 4.0 * local.z());
    return (b + Vec3::Constant(wobble)).cwiseMax(0.05).cwiseMin(0.95);
}

Vec3 shade(const Vec3& albedo, const Vec3& outward_normal) {
    const Vec3 light = Vec3(-0.25, -0.55, -0.80).normalized();
    const Scalar lambert = std::max(Scalar(0), outward_normal.dot(light));
    return albedo * (0.65 + 0.35 * lambert);
}

} // namespace

SyntheticScene::Hit SyntheticScene::trace(const Vec3& origin, const Vec3& dir) const {
    Hit hit;
    // Backdrop plane z = wall_z.
    hit.t = (wall_z - origin.z()) / dir.z();
    hit.point = origin + hit.t * dir;
    hit.normal = plane_normal;
    hit.label = 0;
    hit.rgb = shade(plane_albedo(hit.point), hit.normal);

    for (const auto& s : spheres) {
        const Vec3 oc = origin - s.center;
        const Scalar b = 2.0 * oc.dot(dir);
        const Scalar c = oc.squaredNorm() - s.radius * s.radius;
        const Scalar disc = b * b - 4 * c; // dir is unit, a = 1
        if (disc < 0)
            continue;
        const Scalar t = (-b - std::sqrt(disc)) / 2.0;
        if (t <= 0 || t >= hit.t)
            continue;
        hit.t = t;
        hit.point = origin + t * dir;
        hit.normal = (hit.point - s.center) / s.radius;
        hit.label = s.label;
        hit.rgb = shade(sphere_albedo(s.label, hit.normal), hit.normal);
    }
    return hit;
}

SyntheticScene make_synthetic_scene(SyntheticKind kind, std::uint64_t seed,
                                    const SyntheticOptions& opts) {
    if (opts.n_views < 2 || opts.n_test >= opts.n_views)
        throw std::invalid_argument("make_synthetic_scene: need n_test < n_views, n_views >= 2");

    SyntheticScene scene;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Scalar> uni(0.0, 1.0);

    const Scalar wall_z = kind == SyntheticKind::Plane ? 2.0 : 4.0;
    scene.wall_z = wall_z;
    if (kind == SyntheticKind::SpheresRoom) {
        // Sphere bumps protruding from the wall; contact circles keep the
        // depth map free of jumps.
        const Scalar radii[3] = {0.62, 0.58, 0.66};
        const Vec2 centers_xy[3] = {Vec2(-0.95, -0.40), Vec2(0.98, -0.45), Vec2(0.05, 0.80)};
        for (int i = 0; i < 3; ++i) {
            SyntheticSphere s;
            s.radius = radii[i];
            s.center = Vec3(centers_xy[i].x(), centers_xy[i].y(), wall_z + 0.45 * radii[i]);
            s.label = i + 1;
            scene.spheres.push_back(s);
        }
    }

    auto& ds = scene.dataset;
    ds.width = opts.width;
    ds.height = opts.height;
    ds.num_classes = kind == SyntheticKind::SpheresRoom ? 4 : 1;

    const Scalar fx = 0.9 * opts.width, fy = 0.9 * opts.width;
    const Scalar cx = opts.width / 2.0, cy = opts.height / 2.0;
    const Vec3 target(0, 0, wall_z);

    for (int v = 0; v < opts.n_views; ++v) {
        const Scalar golden = 2.399963229728653;
        const Scalar ring = 0.08 + 0.30 * (Scalar(v % 5) / 4.0); // max polar angle ~22 deg
        const Scalar theta = golden * v + 0.35 * uni(rng);
        const Scalar dist = 3.6 + 0.4 * uni(rng);
        const Vec3 offset(std::sin(ring) * std::cos(theta), 0.6 * std::sin(ring) * std::sin(theta),
                          -std::cos(ring));
        const Vec3 eye = target + dist * offset;

        FrameRecord rec;
        rec.view = make_lookat_camera(fx, fy, cx, cy, opts.width, opts.height, eye, target);
        rec.split = (v % (opts.n_views / std::max(1, opts.n_test)) == 0 && opts.n_test > 0)
                        ? "test"
                        : "train";

        rec.rgb = GridF(opts.width, opts.height, 3);
        rec.depth = GridF(opts.width, opts.height, 1);
        rec.normal = GridF(opts.width, opts.height, 3);
        rec.labels = GridU8(opts.width, opts.height, 1);
        for (int y = 0; y < opts.height; ++y)
            for (int x = 0; x < opts.width; ++x) {
                Vec3 origin, dir;
                compute_ray(rec.view, x + 0.5, y + 0.5, origin, dir);
                const auto hit = scene.trace(origin, dir);
                for (int ch = 0; ch < 3; ++ch)
                    rec.rgb.at(x, y, ch) = std::clamp(hit.rgb[ch], Scalar(0), Scalar(1));
                rec.depth.at(x, y) = rec.view.cam_depth(hit.point);
                // Store normals in the renderer's orientation convention
                // (n . (camera - point) <= 0).
                Vec3 n = hit.normal;
                if (n.dot(eye - hit.point) > 0)
                    n = -n;
                for (int ch = 0; ch < 3; ++ch)
                    rec.normal.at(x, y, ch) = n[ch];
                rec.labels.at(x, y) = std::uint8_t(hit.label);
            }
        ds.frames.push_back(std::move(rec));
    }

    // Initial points: surface samples with ground-truth colors.
    const int n_points = opts.n_points;
    const int per_sphere = kind == SyntheticKind::SpheresRoom ? n_points / 6 : 0;
    const int n_plane = n_points - per_sphere * int(scene.spheres.size());
    const Scalar extent = kind == SyntheticKind::Plane ? 1.4 : 2.3;
    for (int i = 0; i < n_plane; ++i) {
        const Vec3 p(extent * (2 * uni(rng) - 1), extent * (2 * uni(rng) - 1), wall_z);
        bool inside_bump = false;
        for (const auto& s : scene.spheres)
            inside_bump = inside_bump || (p - s.center).norm() < s.radius;
        if (inside_bump) {
            --i;
            continue;
        }
        ds.points.push_back(p);
        ds.point_colors.push_back(shade(plane_albedo(p), scene.plane_normal));
    }
    std::normal_distribution<Scalar> gauss(0.0, 1.0);
    for (const auto& s : scene.spheres) {
        for (int i = 0; i < per_sphere; ++i) {
            Vec3 d(gauss(rng), gauss(rng), gauss(rng));
            if (d.norm() < 1e-9) {
                --i;
                continue;
            }
            d.normalize();
            const Vec3 p = s.center + s.radius * d;
            if (p.z() > wall_z) { // hidden behind the wall
                --i;
                continue;
            }
            ds.points.push_back(p);
            ds.point_colors.push_back(shade(sphere_albedo(s.label, d), d));
        }
    }
    return scene;
}

} // namespace msplat
