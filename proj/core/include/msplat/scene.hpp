#pragma once

#include "msplat/types.hpp"

#include <vector>

namespace msplat {

using ShMatrix = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

/// One splat. Scale is stored as log-scale and opacity as a logit so the
/// optimizer works on unconstrained parameters; rotation is (w,x,y,z) and is
/// normalized on every read.
struct GaussianPrimitive {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4(1, 0, 0, 0);
    Vec3 log_scale = Vec3::Zero();
    Scalar opacity_logit = 0;
    ShMatrix sh;              // 3 x C_h, row per color channel
    VecX semantic_logits;     // C_o
    Scalar gradient_factor = 0.9;
};

struct Scene {
    std::vector<GaussianPrimitive> gaussians;
    int num_classes = 0;
    int sh_degree = 2;

    size_t size() const { return gaussians.size(); }
    int sh_coeff_count() const { return (sh_degree + 1) * (sh_degree + 1); }

    /// Checks that every primitive matches num_classes / sh_degree and is finite.
    void validate() const;
};

/// Activated (ready-to-render) view of one primitive.
struct ActivatedGaussian {
    Vec3 position = Vec3::Zero();
    Vec4 unit_q = Vec4(1, 0, 0, 0);
    Mat3 R = Mat3::Identity();
    Vec3 scale = Vec3::Ones();
    Scalar alpha = 0.5;
    const ShMatrix* sh = nullptr;          // borrowed from the primitive
    const VecX* semantic_logits = nullptr; // borrowed from the primitive
    Scalar k = 0.9;
};

ActivatedGaussian activate(const GaussianPrimitive& g, size_t index);
std::vector<ActivatedGaussian> activate_scene(const Scene& scene);

/// Per-primitive gradient accumulators. rasterize_backward fills this with
/// gradients w.r.t. activated values (unit quaternion, scale, alpha);
/// chain_activations rewrites it in place to raw-parameter space.
struct GradientBuffer {
    std::vector<Vec3> dposition;
    std::vector<Vec4> drotation;
    std::vector<Vec3> dscale; // activated-space: d/dscale; raw-space: d/dlog_scale
    std::vector<Scalar> dopacity;
    std::vector<ShMatrix> dsh;
    std::vector<VecX> dsemantics;
    std::vector<Scalar> dk;
    bool raw_space = false;

    void resize_zero(const Scene& scene);
    void add(const GradientBuffer& other);
    size_t size() const { return dposition.size(); }
    void check_finite(const char* where) const;
};

/// Maps activated-value gradients onto the raw stored parameters:
/// dscale*s -> dlog_scale, dalpha*a(1-a) -> dopacity_logit, and the quaternion
/// gradient through the unit-norm tangent projection (drotation . q_hat == 0
/// afterwards).
void chain_activations(GradientBuffer& buf, const Scene& scene);

} // namespace msplat
