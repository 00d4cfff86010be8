#pragma once

#include "msplat/scene.hpp"

namespace msplat {

/// Real SH basis values for a unit direction, degree in [0,3].
VecX sh_basis(int degree, const Vec3& dir);

/// Jacobian of sh_basis w.r.t. the (unnormalized-upstream) unit direction.
Eigen::Matrix<Scalar, Eigen::Dynamic, 3> sh_basis_jacobian(int degree, const Vec3& dir);

struct ShColor {
    Vec3 rgb = Vec3::Zero();
    Eigen::Array<bool, 3, 1> clamped = Eigen::Array<bool, 3, 1>::Constant(false);
};

/// View-dependent color: max(0, sh * basis(dir) + 0.5) per channel.
ShColor eval_sh_color(const ShMatrix& sh, int degree, const Vec3& dir);

struct ShColorGrads {
    ShMatrix dsh;
    Vec3 ddir = Vec3::Zero();
};

ShColorGrads eval_sh_color_backward(const ShMatrix& sh, int degree, const Vec3& dir,
                                    const ShColor& color, const Vec3& dL_drgb);

/// DC coefficient for a flat albedo color.
Vec3 rgb_to_sh_dc(const Vec3& rgb);
Vec3 sh_dc_to_rgb(const Vec3& dc);

} // namespace msplat
