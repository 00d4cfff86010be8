#include "msplat/geometry.hpp"

#include "msplat/oracle.hpp"
#include "test_common.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace msplat;
using namespace msplat::testing;

namespace {

ActivatedGaussian make_activated(const Vec3& pos, const Vec4& q, const Vec3& scale,
                                 Scalar alpha = 0.8) {
    static ShMatrix sh = ShMatrix::Zero(3, 1);
    static VecX sem = VecX::Zero(0);
    ActivatedGaussian a;
    a.position = pos;
    a.unit_q = q.normalized();
    a.R = quat_to_rotation(a.unit_q);
    a.scale = scale;
    a.alpha = alpha;
    a.sh = &sh;
    a.semantic_logits = &sem;
    a.k = 0.9;
    return a;
}

} // namespace

TEST_CASE("compute_ray unprojects pixel coordinates") {
    const CameraView view = simple_camera(16, 16, 20.0);
    Vec3 origin, dir;

    compute_ray(view, view.cx, view.cy, origin, dir);
    CHECK(origin == Vec3::Zero());
    CHECK(dir.isApprox(Vec3(0, 0, 1), 1e-12));

    const CameraView unit_f = make_camera(1, 1, 8, 8, 16, 16, Mat3::Identity(), Vec3::Zero());
    compute_ray(unit_f, 9.0, 8.0, origin, dir); // u - cx = 1, v - cy = 0
    CHECK(dir.isApprox(Vec3(1, 0, 1).normalized(), 1e-12));

    const Mat3 flip = rotation_about(Vec3(0, 1, 0), M_PI);
    const CameraView rotated = make_camera(20, 20, 8, 8, 16, 16, flip, Vec3::Zero());
    compute_ray(rotated, 8, 8, origin, dir);
    CHECK(dir.isApprox(Vec3(0, 0, -1), 1e-12));
}

TEST_CASE("ray-ellipsoid intersection on canonical shapes") {
    const Vec3 forward(0, 0, 1);

    SUBCASE("unit sphere from z = -2") {
        const auto g = make_activated(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(1, 1, 1));
        const auto hit = intersect(g, Vec3(0, 0, -2), forward, 1.0);
        REQUIRE(hit);
        CHECK(hit->t1 == doctest::Approx(1.0));
        CHECK(hit->t2 == doctest::Approx(3.0));
        CHECK(hit->t_mid == doctest::Approx(2.0));
    }
    SUBCASE("ellipsoid with semi-axis 2 along x") {
        const auto g = make_activated(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(2, 1, 1));
        const auto hit = intersect(g, Vec3(-4, 0, 0), Vec3(1, 0, 0), 1.0);
        REQUIRE(hit);
        CHECK(hit->t1 == doctest::Approx(2.0));
        CHECK(hit->t2 == doctest::Approx(6.0));
        CHECK(hit->t_mid == doctest::Approx(4.0));
    }
    SUBCASE("ray misses") {
        const auto g = make_activated(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(1, 1, 1));
        CHECK_FALSE(intersect(g, Vec3(0, 5, -2), forward, 1.0));
    }
    SUBCASE("camera inside the ellipsoid reports no hit") {
        const auto g = make_activated(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(1, 1, 1));
        CHECK_FALSE(intersect(g, Vec3(0, 0, 0.5), forward, 1.0));
    }
    SUBCASE("degenerate scale component reports no hit") {
        const auto g = make_activated(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(1e-9, 1, 1));
        CHECK_FALSE(intersect(g, Vec3(0, 0, -2), forward, 1.0));
    }
}

TEST_CASE("midpoint depth is the camera-frame z of the ray point") {
    Vec3 origin(0, 0, 0), dir(0, 0, 1);
    const CameraView identity = simple_camera();
    CHECK(midpoint_depth(identity, origin, dir, 2.0) == doctest::Approx(2.0));

    const CameraView shifted =
        make_camera(20, 20, 8, 8, 16, 16, Mat3::Identity(), Vec3(0, 0, -1));
    CHECK(midpoint_depth(shifted, Vec3(0, 0, -1), dir, 3.0) == doctest::Approx(3.0));

    // Rotated camera, checked against an explicit homogeneous transform.
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        const Vec4 q = random_unit_quat(rng);
        std::uniform_real_distribution<Scalar> u(-1, 1);
        const Vec3 t(u(rng), u(rng), u(rng));
        const CameraView view = make_camera(20, 20, 8, 8, 16, 16, quat_to_rotation(q), t);
        const Vec3 o(u(rng), u(rng), u(rng));
        Vec3 d(u(rng), u(rng), u(rng));
        if (d.norm() < 1e-3)
            continue;
        d.normalize();
        const Scalar t_mid = 1.0 + std::abs(u(rng));

        Eigen::Matrix4d world_from_cam = Eigen::Matrix4d::Identity();
        world_from_cam.block<3, 3>(0, 0) = view.R_cam_to_world;
        world_from_cam.block<3, 1>(0, 3) = view.t_cam_to_world;
        const Eigen::Matrix4d cam_from_world = world_from_cam.inverse();
        const Eigen::Vector4d p = cam_from_world * (o + t_mid * d).homogeneous();
        CHECK(midpoint_depth(view, o, d, t_mid) == doctest::Approx(p.z()).epsilon(1e-9));
    }
}

TEST_CASE("intersection caches satisfy the unit-sphere identity") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<Scalar> u(-1, 1);
    int hits = 0;
    while (hits < 1000) {
        const Vec3 pos(2 * u(rng), 2 * u(rng), 2 * u(rng));
        const auto g = make_activated(pos, random_unit_quat(rng),
                                      Vec3(std::exp(u(rng)), std::exp(u(rng)), std::exp(u(rng))) *
                                          0.6);
        const Vec3 origin = pos + Vec3(4 * u(rng), 4 * u(rng), -4 - std::abs(u(rng)));
        Vec3 dir = (pos - origin + 0.3 * Vec3(u(rng), u(rng), u(rng))).normalized();
        const auto hit = intersect(g, origin, dir, 1.0);
        if (!hit)
            continue;
        ++hits;
        CHECK(std::abs((hit->v_s + hit->t1 * hit->d_s).norm() - 1.0) < 1e-9);
        CHECK(std::abs((hit->v_s + hit->t2 * hit->d_s).norm() - 1.0) < 1e-9);
        CHECK(hit->t_mid == -hit->b / (2 * hit->a));
    }
}

TEST_CASE("intersection depth is invariant under shared rigid motion") {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<Scalar> u(-1, 1);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3 pos(u(rng), u(rng), 3 + u(rng));
        const auto g = make_activated(pos, random_unit_quat(rng), Vec3(0.8, 0.5, 0.3));
        const CameraView view = simple_camera();
        Vec3 origin, dir;
        compute_ray(view, 7.5 + u(rng), 8.5 + u(rng), origin, dir);
        const auto hit = intersect(g, origin, dir, 1.0);
        if (!hit)
            continue;
        const Scalar d0 = midpoint_depth(view, origin, dir, hit->t_mid);

        const Mat3 Q = quat_to_rotation(random_unit_quat(rng));
        const Vec3 shift(u(rng), u(rng), u(rng));
        const CameraView moved = make_camera(view.fx, view.fy, view.cx, view.cy, view.width,
                                             view.height, Q * view.R_cam_to_world,
                                             Q * view.t_cam_to_world + shift);
        auto moved_g = g;
        moved_g.position = Q * g.position + shift;
        moved_g.R = Q * g.R;
        Vec3 origin_m, dir_m;
        compute_ray(moved, 0, 0, origin_m, dir_m); // origin only
        origin_m = moved.t_cam_to_world;
        dir_m = Q * dir;
        const auto hit_m = intersect(moved_g, origin_m, dir_m, 1.0);
        REQUIRE(hit_m);
        CHECK(std::abs(midpoint_depth(moved, origin_m, dir_m, hit_m->t_mid) - d0) < 1e-9);
    }
}

TEST_CASE("intersection backward matches finite differences") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<Scalar> u(-1, 1);
    const CameraView view = simple_camera();

    int checked = 0;
    Scalar worst = 0;
    while (checked < 300) {
        GaussianPrimitive prim;
        prim.position = Vec3(1.2 * u(rng), 1.2 * u(rng), 2.5 + u(rng));
        prim.rotation = random_unit_quat(rng);
        prim.log_scale = Vec3(u(rng), u(rng), u(rng)) * 0.5 - Vec3::Constant(0.7);
        prim.sh = ShMatrix::Zero(3, 1);
        prim.semantic_logits = VecX::Zero(0);

        Vec3 origin, dir;
        compute_ray(view, 7.5 + 4 * u(rng), 8.5 + 4 * u(rng), origin, dir);

        auto depth_of = [&](const GaussianPrimitive& p) -> std::optional<Scalar> {
            const auto act = activate(p, 0);
            const auto hit = intersect(act, origin, dir, 1.0);
            if (!hit)
                return std::nullopt;
            return midpoint_depth(view, origin, dir, hit->t_mid);
        };

        const auto act = activate(prim, 0);
        const auto hit = intersect(act, origin, dir, 1.0);
        if (!hit)
            continue;
        const Scalar c = hit->v_s.squaredNorm() - 1.0;
        if (hit->b * hit->b - 4 * hit->a * c < 1e-6) // grazing hit, derivative blows up
            continue;
        ++checked;

        const Scalar dL_dd = 1.0;
        const auto grads = intersection_backward(*hit, dL_dd, view, origin, dir, act);

        const Scalar eps = 1e-5;
        auto fd_param = [&](auto&& set, Scalar base) {
            GaussianPrimitive hi = prim, lo = prim;
            set(hi, base + eps);
            set(lo, base - eps);
            const auto dhi = depth_of(hi), dlo = depth_of(lo);
            if (!dhi || !dlo)
                return std::numeric_limits<Scalar>::quiet_NaN();
            return (*dhi - *dlo) / (2 * eps);
        };

        VecX analytic(10), numeric(10);
        int col = 0;
        for (int cix = 0; cix < 3; ++cix, ++col) {
            analytic[col] = grads.dposition[cix];
            numeric[col] = fd_param(
                [cix](GaussianPrimitive& p, Scalar v) { p.position[cix] = v; },
                prim.position[cix]);
        }
        const Vec4 q_hat = prim.rotation.normalized();
        const Vec4 dq_tangent = grads.dq - q_hat * q_hat.dot(grads.dq);
        for (int cix = 0; cix < 4; ++cix, ++col) {
            analytic[col] = dq_tangent[cix];
            numeric[col] = fd_param(
                [cix](GaussianPrimitive& p, Scalar v) { p.rotation[cix] = v; },
                prim.rotation[cix]);
        }
        const Vec3 s = act.scale;
        for (int cix = 0; cix < 3; ++cix, ++col) {
            // d/d(log s) = d/ds * s
            analytic[col] = grads.dscale[cix] * s[cix];
            numeric[col] = fd_param(
                [cix](GaussianPrimitive& p, Scalar v) { p.log_scale[cix] = v; },
                prim.log_scale[cix]);
        }
        if (!numeric.allFinite())
            continue;
        worst = std::max(worst, max_rel_error(analytic, numeric, 1e-6));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("intersection backward trivial cases") {
    const auto g = make_activated(Vec3::Zero(), Vec4(1, 0, 0, 0), Vec3(1, 1, 1));
    const CameraView view = simple_camera();
    const Vec3 origin(0, 0, -2), dir(0, 0, 1);
    const auto hit = intersect(g, origin, dir, 1.0);
    REQUIRE(hit);

    const auto zero = intersection_backward(*hit, 0.0, view, origin, dir, g);
    CHECK(zero.dposition.norm() == 0);
    CHECK(zero.dq.norm() == 0);
    CHECK(zero.dscale.norm() == 0);

    // Axial ray through a unit sphere: midpoint depth shifts one-for-one with
    // the center's z.
    const auto grads = intersection_backward(*hit, 1.0, view, origin, dir, g);
    CHECK(grads.dposition.z() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(grads.dposition.x() == doctest::Approx(0.0));
}

TEST_CASE("projection places on-axis gaussians at the principal point") {
    const CameraView view = simple_camera(16, 16, 20.0);
    const auto g = make_activated(Vec3(0, 0, 1), Vec4(1, 0, 0, 0), Vec3(0.1, 0.1, 0.1));
    const auto splat = project_gaussian(g, view);
    REQUIRE(splat);
    CHECK(splat->center.x() == doctest::Approx(view.cx));
    CHECK(splat->center.y() == doctest::Approx(view.cy));
    CHECK(splat->sort_depth == doctest::Approx(1.0));

    // Isotropic scale, axis-aligned pose: isotropic 2D covariance before floor.
    CHECK(splat->cov(0, 0) == doctest::Approx(splat->cov(1, 1)));
    CHECK(splat->cov(0, 1) == doctest::Approx(0.0));

    const auto behind = make_activated(Vec3(0, 0, -0.5), Vec4(1, 0, 0, 0), Vec3(0.1, 0.1, 0.1));
    CHECK_FALSE(project_gaussian(behind, view));
}

TEST_CASE("projected covariance matches a dense-matrix oracle") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<Scalar> u(-1, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec4 q = random_unit_quat(rng);
        const CameraView view = make_camera(24, 18, 8, 8, 16, 16,
                                            quat_to_rotation(random_unit_quat(rng)),
                                            Vec3(u(rng), u(rng), u(rng)));
        const Vec3 pos = view.cam_to_world(Vec3(u(rng), u(rng), 2.5 + u(rng)));
        const auto g = make_activated(pos, q, Vec3(0.2 + 0.1 * u(rng), 0.3, 0.15));
        const auto splat = project_gaussian(g, view);
        REQUIRE(splat);

        const Mat3 R = quat_to_rotation(q);
        const Mat3 S = g.scale.asDiagonal();
        const Mat3 V = R * S * S * R.transpose();
        const Vec3 pc = view.world_to_cam(pos);
        Mat23 J;
        J << view.fx / pc.z(), 0, -view.fx * pc.x() / (pc.z() * pc.z()),
             0, view.fy / pc.z(), -view.fy * pc.y() / (pc.z() * pc.z());
        Mat2 expected = J * view.R_world_to_cam * V * view.R_world_to_cam.transpose() *
                        J.transpose();
        expected(0, 0) += 0.3;
        expected(1, 1) += 0.3;
        CHECK(splat->cov.isApprox(expected, 1e-10));
    }
}

TEST_CASE("alpha evaluation clamps and skips") {
    const CameraView view = simple_camera(16, 16, 20.0);
    const auto g = make_activated(Vec3(0, 0, 1), Vec4(1, 0, 0, 0), Vec3(0.2, 0.2, 0.2));
    const auto splat = project_gaussian(g, view);
    REQUIRE(splat);

    SUBCASE("pixel at the splat center sees min(alpha, 0.99)") {
        CHECK(eval_alpha(*splat, 0.7, splat->center.x(), splat->center.y()) ==
              doctest::Approx(0.7));
        CHECK(eval_alpha(*splat, 0.999, splat->center.x(), splat->center.y()) ==
              doctest::Approx(0.99));
    }
    SUBCASE("zero opacity is always skipped") {
        CHECK(eval_alpha(*splat, 0.0, splat->center.x(), splat->center.y()) < kMinAlpha);
    }
    SUBCASE("far pixels fall below the skip threshold") {
        // Mahalanobis^2 = 50 means exp(-25) * alpha, far below 1/255.
        const Scalar sigma = std::sqrt(splat->cov(0, 0));
        const Scalar alpha =
            eval_alpha(*splat, 0.99, splat->center.x() + sigma * std::sqrt(50.0),
                       splat->center.y());
        CHECK(alpha < kMinAlpha);
    }
    SUBCASE("alpha decreases with Mahalanobis distance") {
        Scalar prev = 1;
        for (int step = 0; step < 8; ++step) {
            const Scalar a =
                eval_alpha(*splat, 0.9, splat->center.x() + 0.3 * step, splat->center.y());
            CHECK(a <= prev);
            prev = a;
        }
    }
}
