#include "msplat/scene.hpp"

#include "test_common.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace msplat;
using namespace msplat::testing;

TEST_CASE("activation applies the standard parameterizations") {
    GaussianPrimitive g;
    g.sh = ShMatrix::Zero(3, 1);
    g.semantic_logits = VecX::Zero(0);

    g.rotation = Vec4(2, 0, 0, 0);
    g.opacity_logit = 0;
    g.log_scale = Vec3::Zero();
    const auto a = activate(g, 0);
    CHECK(a.unit_q == Vec4(1, 0, 0, 0));
    CHECK(a.alpha == doctest::Approx(0.5));
    CHECK(a.scale == Vec3(1, 1, 1));
    CHECK(a.R.isApprox(Mat3::Identity(), 1e-12));
}

TEST_CASE("activation rejects non-finite primitives with their index") {
    GaussianPrimitive g;
    g.sh = ShMatrix::Zero(3, 1);
    g.semantic_logits = VecX::Zero(0);
    g.position = Vec3(0, 0, std::numeric_limits<Scalar>::quiet_NaN());
    CHECK_THROWS_WITH_AS(activate(g, 7), doctest::Contains("primitive 7"),
                         std::invalid_argument);
}

TEST_CASE("chain_activations maps activated gradients to raw parameters") {
    Scene scene;
    scene.sh_degree = 0;
    scene.num_classes = 0;
    GaussianPrimitive g;
    g.sh = ShMatrix::Zero(3, 1);
    g.semantic_logits = VecX::Zero(0);
    g.opacity_logit = 0;                      // alpha = 0.5
    g.log_scale = Vec3(2, 1, 0.5).array().log(); // s = (2, 1, 0.5)
    g.rotation = Vec4(1, 0, 0, 0);
    scene.gaussians.push_back(g);

    GradientBuffer buf;
    buf.resize_zero(scene);
    buf.dopacity[0] = 1.0;
    buf.dscale[0] = Vec3(1, 1, 1);
    buf.drotation[0] = Vec4(3, 0, 0, 0); // parallel to q

    chain_activations(buf, scene);
    CHECK(buf.dopacity[0] == doctest::Approx(0.25));
    CHECK(buf.dscale[0].isApprox(Vec3(2, 1, 0.5), 1e-12));
    CHECK(buf.drotation[0].norm() == doctest::Approx(0.0));
    CHECK(buf.raw_space);
}

TEST_CASE("projected quaternion gradient is tangent to the unit sphere") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Scene scene = random_scene(rng, 1, 0, 0);
        scene.gaussians[0].rotation *= 1.7; // storage off the unit sphere
        GradientBuffer buf;
        buf.resize_zero(scene);
        std::normal_distribution<Scalar> g(0, 1);
        buf.drotation[0] = Vec4(g(rng), g(rng), g(rng), g(rng));
        chain_activations(buf, scene);
        const Vec4 q_hat = scene.gaussians[0].rotation.normalized();
        CHECK(std::abs(buf.drotation[0].dot(q_hat)) < 1e-14);
    }
}

TEST_CASE("activation chain matches finite differences of activated values") {
    // Scalar probe function of the activated values; gradients seeded w.r.t.
    // the activated values must chain back to the raw parameters.
    std::mt19937_64 rng(3);
    std::normal_distribution<Scalar> gd(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        Scene scene = random_scene(rng, 1, 0, 2);
        const Vec3 ws = Vec3(gd(rng), gd(rng), gd(rng));
        const Vec4 wq = Vec4(gd(rng), gd(rng), gd(rng), gd(rng));
        const Scalar wa = gd(rng);

        auto probe = [&](const GaussianPrimitive& p) {
            const auto a = activate(p, 0);
            return ws.dot(a.scale) + wq.dot(a.unit_q) + wa * a.alpha;
        };

        GradientBuffer buf;
        buf.resize_zero(scene);
        buf.dscale[0] = ws;
        buf.drotation[0] = wq;
        buf.dopacity[0] = wa;
        chain_activations(buf, scene);

        const Scalar eps = 1e-6;
        GaussianPrimitive p = scene.gaussians[0];
        for (int c = 0; c < 3; ++c) {
            GaussianPrimitive hi = p, lo = p;
            hi.log_scale[c] += eps;
            lo.log_scale[c] -= eps;
            const Scalar fd = (probe(hi) - probe(lo)) / (2 * eps);
            CHECK(buf.dscale[0][c] ==
                  doctest::Approx(fd).epsilon(1e-6).scale(std::max(1.0, std::abs(fd))));
        }
        for (int c = 0; c < 4; ++c) {
            GaussianPrimitive hi = p, lo = p;
            hi.rotation[c] += eps;
            lo.rotation[c] -= eps;
            const Scalar fd = (probe(hi) - probe(lo)) / (2 * eps);
            CHECK(buf.drotation[0][c] ==
                  doctest::Approx(fd).epsilon(1e-6).scale(std::max(1.0, std::abs(fd))));
        }
        {
            GaussianPrimitive hi = p, lo = p;
            hi.opacity_logit += eps;
            lo.opacity_logit -= eps;
            const Scalar fd = (probe(hi) - probe(lo)) / (2 * eps);
            CHECK(buf.dopacity[0] ==
                  doctest::Approx(fd).epsilon(1e-6).scale(std::max(1.0, std::abs(fd))));
        }
    }
}

TEST_CASE("scene validation catches mismatched channel counts") {
    std::mt19937_64 rng(5);
    Scene scene = random_scene(rng, 2, 1, 3);
    scene.gaussians[1].semantic_logits = VecX::Zero(2);
    CHECK_THROWS_AS(scene.validate(), std::invalid_argument);
}
