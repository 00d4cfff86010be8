#include "msplat/sh.hpp"

namespace msplat {

namespace {
constexpr Scalar kC0 = 0.28209479177387814;
constexpr Scalar kC1 = 0.4886025119029199;
constexpr Scalar kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr Scalar kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
} // namespace

VecX sh_basis(int degree, const Vec3& dir) {
    const Scalar x = dir.x(), y = dir.y(), z = dir.z();
    VecX b((degree + 1) * (degree + 1));
    b[0] = kC0;
    if (degree >= 1) {
        b[1] = -kC1 * y;
        b[2] = kC1 * z;
        b[3] = -kC1 * x;
    }
    if (degree >= 2) {
        const Scalar xx = x * x, yy = y * y, zz = z * z;
        b[4] = kC2[0] * x * y;
        b[5] = kC2[1] * y * z;
        b[6] = kC2[2] * (2 * zz - xx - yy);
        b[7] = kC2[3] * x * z;
        b[8] = kC2[4] * (xx - yy);
    }
    if (degree >= 3) {
        const Scalar xx = x * x, yy = y * y, zz = z * z;
        b[9] = kC3[0] * y * (3 * xx - yy);
        b[10] = kC3[1] * x * y * z;
        b[11] = kC3[2] * y * (4 * zz - xx - yy);
        b[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
        b[13] = kC3[4] * x * (4 * zz - xx - yy);
        b[14] = kC3[5] * z * (xx - yy);
        b[15] = kC3[6] * x * (xx - 3 * yy);
    }
    return b;
}

Eigen::Matrix<Scalar, Eigen::Dynamic, 3> sh_basis_jacobian(int degree, const Vec3& dir) {
    const Scalar x = dir.x(), y = dir.y(), z = dir.z();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 3> J((degree + 1) * (degree + 1), 3);
    J.setZero();
    if (degree >= 1) {
        J.row(1) << 0, -kC1, 0;
        J.row(2) << 0, 0, kC1;
        J.row(3) << -kC1, 0, 0;
    }
    if (degree >= 2) {
        const Scalar xx = x * x, yy = y * y, zz = z * z;
        J.row(4) << kC2[0] * y, kC2[0] * x, 0;
        J.row(5) << 0, kC2[1] * z, kC2[1] * y;
        J.row(6) << -2 * kC2[2] * x, -2 * kC2[2] * y, 4 * kC2[2] * z;
        J.row(7) << kC2[3] * z, 0, kC2[3] * x;
        J.row(8) << 2 * kC2[4] * x, -2 * kC2[4] * y, 0;
        if (degree >= 3) {
            J.row(9) << kC3[0] * 6 * x * y, kC3[0] * (3 * xx - 3 * yy), 0;
            J.row(10) << kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y;
            J.row(11) << -2 * kC3[2] * x * y, kC3[2] * (4 * zz - xx - 3 * yy), 8 * kC3[2] * y * z;
            J.row(12) << -6 * kC3[3] * x * z, -6 * kC3[3] * y * z,
                kC3[3] * (6 * zz - 3 * xx - 3 * yy);
            J.row(13) << kC3[4] * (4 * zz - 3 * xx - yy), -2 * kC3[4] * x * y, 8 * kC3[4] * x * z;
            J.row(14) << 2 * kC3[5] * x * z, -2 * kC3[5] * y * z, kC3[5] * (xx - yy);
            J.row(15) << kC3[6] * (3 * xx - 3 * yy), -6 * kC3[6] * x * y, 0;
        }
    }
    return J;
}

ShColor eval_sh_color(const ShMatrix& sh, int degree, const Vec3& dir) {
    const VecX basis = sh_basis(degree, dir);
    ShColor out;
    const Vec3 raw = sh * basis + Vec3::Constant(0.5);
    for (int ch = 0; ch < 3; ++ch) {
        out.clamped[ch] = raw[ch] < 0;
        out.rgb[ch] = out.clamped[ch] ? 0.0 : raw[ch];
    }
    return out;
}

ShColorGrads eval_sh_color_backward(const ShMatrix& sh, int degree, const Vec3& dir,
                                    const ShColor& color, const Vec3& dL_drgb) {
    Vec3 g = dL_drgb;
    for (int ch = 0; ch < 3; ++ch)
        if (color.clamped[ch])
            g[ch] = 0;

    ShColorGrads out;
    const VecX basis = sh_basis(degree, dir);
    out.dsh = g * basis.transpose();
    const auto J = sh_basis_jacobian(degree, dir);
    out.ddir = J.transpose() * (sh.transpose() * g);
    return out;
}

Vec3 rgb_to_sh_dc(const Vec3& rgb) { return (rgb - Vec3::Constant(0.5)) / kC0; }
Vec3 sh_dc_to_rgb(const Vec3& dc) { return kC0 * dc + Vec3::Constant(0.5); }

} // namespace msplat
