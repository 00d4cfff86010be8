#include "msplat/geometry.hpp"

#include <cmath>

namespace msplat {

Mat3 quat_to_rotation(const Vec4& q) {
    const Vec4 u = q / q.norm();
    const Scalar w = u[0], x = u[1], y = u[2], z = u[3];
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

Vec4 quat_rotation_backward(const Vec4& unit_q, const Mat3& G) {
    const Scalar w = unit_q[0], x = unit_q[1], y = unit_q[2], z = unit_q[3];
    Vec4 dq;
    dq[0] = 2 * (G(0, 1) * (-z) + G(0, 2) * y + G(1, 0) * z + G(1, 2) * (-x) + G(2, 0) * (-y) +
                 G(2, 1) * x);
    dq[1] = 2 * (G(0, 1) * y + G(0, 2) * z + G(1, 0) * y + G(1, 1) * (-2 * x) + G(1, 2) * (-w) +
                 G(2, 0) * z + G(2, 1) * w + G(2, 2) * (-2 * x));
    dq[2] = 2 * (G(0, 0) * (-2 * y) + G(0, 1) * x + G(0, 2) * w + G(1, 0) * x + G(1, 2) * z +
                 G(2, 0) * (-w) + G(2, 1) * z + G(2, 2) * (-2 * y));
    dq[3] = 2 * (G(0, 0) * (-2 * z) + G(0, 1) * (-w) + G(0, 2) * x + G(1, 0) * w +
                 G(1, 1) * (-2 * z) + G(1, 2) * y + G(2, 0) * x + G(2, 1) * y);
    return dq;
}

void compute_ray(const CameraView& view, Scalar u, Scalar v, Vec3& origin, Vec3& dir) {
    origin = view.t_cam_to_world;
    const Vec3 pixel_dir((u - view.cx) / view.fx, (v - view.cy) / view.fy, 1.0);
    dir = (view.R_cam_to_world * pixel_dir).normalized();
}

std::optional<RayEllipsoidHit> intersect(const ActivatedGaussian& g, const Vec3& origin,
                                         const Vec3& dir, Scalar sigma_scale) {
    const Vec3 axes = sigma_scale * g.scale;
    if (axes.minCoeff() < kDegenerateScale)
        return std::nullopt;

    RayEllipsoidHit hit;
    hit.axes = axes;
    hit.v_l = g.R.transpose() * (origin - g.position);
    hit.d_l = g.R.transpose() * dir;
    hit.v_s = hit.v_l.cwiseQuotient(axes);
    hit.d_s = hit.d_l.cwiseQuotient(axes);

    hit.a = hit.d_s.squaredNorm();
    hit.b = 2.0 * hit.v_s.dot(hit.d_s);
    const Scalar c = hit.v_s.squaredNorm() - 1.0;
    const Scalar discriminant = hit.b * hit.b - 4.0 * hit.a * c;
    if (discriminant < 0 || hit.a <= 0)
        return std::nullopt;

    const Scalar sqrt_disc = std::sqrt(discriminant);
    hit.t1 = (-hit.b - sqrt_disc) / (2.0 * hit.a);
    hit.t2 = (-hit.b + sqrt_disc) / (2.0 * hit.a);
    hit.t_mid = -hit.b / (2.0 * hit.a);
    if (hit.t_mid <= 0)
        return std::nullopt;
    return hit;
}

Scalar midpoint_depth(const CameraView& view, const Vec3& origin, const Vec3& dir, Scalar t_mid) {
    return view.cam_depth(origin + t_mid * dir);
}

IntersectionGrads intersection_backward(const RayEllipsoidHit& hit, Scalar dL_dd,
                                        const CameraView& view, const Vec3& origin,
                                        const Vec3& dir, const ActivatedGaussian& g) {
    IntersectionGrads out;
    if (std::abs(hit.a) < 1e-12) {
        out.degenerate = true;
        return out;
    }
    if (dL_dd == 0)
        return out;

    // d = z-row of R_world_to_cam applied to the midpoint, so dd/dt_mid is the
    // z-row dotted with the ray direction.
    const Scalar dd_dtmid = view.R_world_to_cam.row(2).dot(dir);
    const Scalar g_t = dL_dd * dd_dtmid;

    // t_mid = -b / (2a) with a = d_s.d_s and b = 2 v_s.d_s.
    const Vec3 g_vs = g_t * (-hit.d_s / hit.a);
    const Vec3 g_ds = g_t * ((hit.b / (hit.a * hit.a)) * hit.d_s - hit.v_s / hit.a);

    // v_s = v_l / axes, d_s = d_l / axes with axes = sigma * s; the sigma factor
    // cancels in the scale gradient.
    out.dscale = -(g_vs.cwiseProduct(hit.v_s) + g_ds.cwiseProduct(hit.d_s))
                      .cwiseQuotient(g.scale);

    const Vec3 g_vl = g_vs.cwiseQuotient(hit.axes);
    const Vec3 g_dl = g_ds.cwiseQuotient(hit.axes);

    // v_l = R^T (origin - position): position gradient flows through v only.
    out.dposition = -(g.R * g_vl);

    const Vec3 v = origin - g.position;
    const Mat3 dL_dR = v * g_vl.transpose() + dir * g_dl.transpose();
    out.dq = quat_rotation_backward(g.unit_q, dL_dR);
    return out;
}

std::optional<Splat2D> project_gaussian(const ActivatedGaussian& g, const CameraView& view) {
    const Vec3 p_cam = view.world_to_cam(g.position);
    if (p_cam.z() <= kNearPlane)
        return std::nullopt;

    const Scalar x = p_cam.x(), y = p_cam.y(), z = p_cam.z();
    Splat2D splat;
    splat.center = Vec2(view.fx * x / z + view.cx, view.fy * y / z + view.cy);
    splat.sort_depth = z;

    Mat23 J;
    J << view.fx / z, 0, -view.fx * x / (z * z),
         0, view.fy / z, -view.fy * y / (z * z);
    const Mat3 V_world = g.R * g.scale.cwiseProduct(g.scale).asDiagonal() * g.R.transpose();
    const Mat23 T = J * view.R_world_to_cam;
    splat.cov = T * V_world * T.transpose();
    splat.cov(0, 0) += kCovarianceFloor;
    splat.cov(1, 1) += kCovarianceFloor;

    const Scalar det = splat.cov.determinant();
    if (det <= 0)
        return std::nullopt;
    splat.conic << splat.cov(1, 1) / det, -splat.cov(0, 1) / det,
                   -splat.cov(0, 1) / det, splat.cov(0, 0) / det;

    const Scalar mid = 0.5 * (splat.cov(0, 0) + splat.cov(1, 1));
    const Scalar lambda_max = mid + std::sqrt(std::max(Scalar(0.1), mid * mid - det));
    splat.radius = 3.0 * std::sqrt(lambda_max);
    return splat;
}

AlphaEval eval_alpha_full(const Splat2D& splat, Scalar alpha, Scalar px, Scalar py) {
    AlphaEval out;
    out.dx = px - splat.center.x();
    out.dy = py - splat.center.y();
    const Scalar power = -0.5 * (splat.conic(0, 0) * out.dx * out.dx +
                                 splat.conic(1, 1) * out.dy * out.dy) -
                         splat.conic(0, 1) * out.dx * out.dy;
    if (power > 0)
        return out; // numerically impossible for a PSD conic; treat as skip
    out.gauss = std::exp(power);
    const Scalar raw = alpha * out.gauss;
    out.clamped = raw > kMaxAlpha;
    out.alpha = out.clamped ? kMaxAlpha : raw;
    return out;
}

Scalar eval_alpha(const Splat2D& splat, Scalar alpha, Scalar px, Scalar py) {
    return eval_alpha_full(splat, alpha, px, py).alpha;
}

} // namespace msplat
