#pragma once

#include "msplat/camera.hpp"
#include "msplat/scene.hpp"

#include <optional>

namespace msplat {

/// Rotation matrix from a quaternion (w,x,y,z); the input is normalized first.
Mat3 quat_to_rotation(const Vec4& q);

/// Pullback of a rotation-matrix gradient to the (unit) quaternion components.
/// The result is not yet tangent-projected; chain_activations does that.
Vec4 quat_rotation_backward(const Vec4& unit_q, const Mat3& dL_dR);

/// Ray through a continuous pixel coordinate (u, v). Rasterization code passes
/// pixel centers (x + 0.5, y + 0.5).
void compute_ray(const CameraView& view, Scalar u, Scalar v, Vec3& origin, Vec3& dir);

/// Cached state of one ray-ellipsoid intersection, reused by the backward pass.
struct RayEllipsoidHit {
    Scalar t1 = 0, t2 = 0, t_mid = 0;
    Scalar a = 0, b = 0;
    Vec3 v_s = Vec3::Zero(), d_s = Vec3::Zero();
    Vec3 v_l = Vec3::Zero(), d_l = Vec3::Zero();
    Vec3 axes = Vec3::Ones(); // sigma_scale * scale, the ellipsoid semi-axes
};

constexpr Scalar kDegenerateScale = 1e-8;

/// Intersects a unit-norm ray with the sigma_scale * s ellipsoid of g.
/// Returns no hit when the discriminant is negative, when t_mid <= 0
/// (camera inside the ellipsoid), or when a scale component is degenerate.
std::optional<RayEllipsoidHit> intersect(const ActivatedGaussian& g, const Vec3& origin,
                                         const Vec3& dir, Scalar sigma_scale);

/// Camera-frame z of the ray point at parameter t_mid.
Scalar midpoint_depth(const CameraView& view, const Vec3& origin, const Vec3& dir, Scalar t_mid);

struct IntersectionGrads {
    Vec3 dposition = Vec3::Zero();
    Vec4 dq = Vec4::Zero(); // w.r.t. the unit quaternion, pre tangent projection
    Vec3 dscale = Vec3::Zero();
    bool degenerate = false; // |a| below threshold, gradients clamped to zero
};

/// Analytic gradient of midpoint_depth(intersect(...)) w.r.t. position, unit
/// quaternion and scale, scaled by dL_dd.
IntersectionGrads intersection_backward(const RayEllipsoidHit& hit, Scalar dL_dd,
                                        const CameraView& view, const Vec3& origin,
                                        const Vec3& dir, const ActivatedGaussian& g);

/// Screen-space footprint used for alpha evaluation and depth ordering.
struct Splat2D {
    Vec2 center = Vec2::Zero();  // continuous pixel coordinates
    Mat2 cov = Mat2::Identity(); // after the +0.3 px^2 diagonal floor
    Mat2 conic = Mat2::Identity();
    Scalar sort_depth = 0; // camera-frame z of the center
    Scalar radius = 0;     // 3 sigma bounding radius, pixels
};

constexpr Scalar kNearPlane = 0.01;
constexpr Scalar kCovarianceFloor = 0.3;
constexpr Scalar kMinAlpha = 1.0 / 255.0;
constexpr Scalar kMaxAlpha = 0.99;

std::optional<Splat2D> project_gaussian(const ActivatedGaussian& g, const CameraView& view);

struct AlphaEval {
    Scalar alpha = 0; // min(0.99, opacity * gauss)
    Scalar gauss = 0; // exp(power)
    Scalar dx = 0, dy = 0;
    bool clamped = false;
};

AlphaEval eval_alpha_full(const Splat2D& splat, Scalar alpha, Scalar px, Scalar py);

/// Gaussian falloff alpha at a continuous pixel coordinate, clamped at 0.99.
/// Values below kMinAlpha are skipped by callers.
Scalar eval_alpha(const Splat2D& splat, Scalar alpha, Scalar px, Scalar py);

} // namespace msplat
