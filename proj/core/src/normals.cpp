#include "msplat/normals.hpp"

#include <cmath>
#include <stdexcept>

namespace msplat {

namespace {

Vec3 pixel_dir_cam(const CameraView& view, int x, int y) {
    return Vec3((x + 0.5 - view.cx) / view.fx, (y + 0.5 - view.cy) / view.fy, 1.0);
}

} // namespace

std::vector<Vec3> backproject(const GridF& depth, const CameraView& view) {
    if (depth.width() != view.width || depth.height() != view.height || depth.channels() != 1)
        throw std::invalid_argument("backproject: depth map does not match the view");
    std::vector<Vec3> out(size_t(view.width) * view.height);
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) {
            const Scalar d = depth.at(x, y);
            out[size_t(y) * view.width + x] = view.cam_to_world(pixel_dir_cam(view, x, y) * d);
        }
    return out;
}

NormalState estimate_normals(const GridF& depth, const GridF& transmittance,
                             const CameraView& view, const NormalConfig& cfg, GridF& normals) {
    if (cfg.step1 >= cfg.step2)
        throw std::invalid_argument("estimate_normals: step1 must be smaller than step2");
    if (cfg.fuse_lambda < 0 || cfg.fuse_lambda > 1)
        throw std::invalid_argument("estimate_normals: fuse weight must be in [0,1]");
    const int W = view.width, H = view.height;

    NormalState st;
    st.width = W;
    st.height = H;
    st.cfg = cfg;
    st.p_world = backproject(depth, view);
    st.valid = Grid<std::uint8_t>(W, H, 1, 0);
    st.flipped = Grid<std::uint8_t>(W, H, 1, 0);
    const size_t n = size_t(W) * H;
    st.vx1.assign(n, Vec3::Zero());
    st.vy1.assign(n, Vec3::Zero());
    st.vx2.assign(n, Vec3::Zero());
    st.vy2.assign(n, Vec3::Zero());
    st.n1.assign(n, Vec3::Zero());
    st.n2.assign(n, Vec3::Zero());
    st.sign2.assign(n, 1.0);
    st.n_fused.assign(n, Vec3::Zero());
    st.fused_norm.assign(n, 0.0);

    normals = GridF(W, H, 3, 0.0);

    auto covered = [&](int x, int y) { return transmittance.at(x, y) < cfg.mask_threshold; };
    auto point = [&](int x, int y) -> const Vec3& { return st.p_world[size_t(y) * W + x]; };

    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int s2 = cfg.step2;
            if (x < s2 || y < s2 || x + s2 >= W || y + s2 >= H)
                continue;
            bool ok = covered(x, y);
            for (int s : {cfg.step1, cfg.step2})
                ok = ok && covered(x + s, y) && covered(x - s, y) && covered(x, y + s) &&
                     covered(x, y - s);
            if (!ok)
                continue;

            const size_t p = size_t(y) * W + x;
            st.vx1[p] = point(x + cfg.step1, y) - point(x - cfg.step1, y);
            st.vy1[p] = point(x, y + cfg.step1) - point(x, y - cfg.step1);
            st.vx2[p] = point(x + cfg.step2, y) - point(x - cfg.step2, y);
            st.vy2[p] = point(x, y + cfg.step2) - point(x, y - cfg.step2);
            st.n1[p] = st.vx1[p].cross(st.vy1[p]);
            Vec3 n2 = st.vx2[p].cross(st.vy2[p]);
            st.sign2[p] = st.n1[p].dot(n2) < 0 ? -1.0 : 1.0;
            n2 *= st.sign2[p];
            st.n2[p] = n2;

            st.n_fused[p] = cfg.fuse_lambda * st.n1[p] + (1.0 - cfg.fuse_lambda) * n2;
            const Scalar norm = st.n_fused[p].norm();
            st.fused_norm[p] = norm;
            if (norm < 1e-12)
                continue; // flat or degenerate stencil

            Vec3 N = st.n_fused[p] / norm;
            const Vec3 d_view = (view.t_cam_to_world - point(x, y)).normalized();
            if (N.dot(d_view) > 0) {
                N = -N;
                st.flipped.at(x, y) = 1;
            }
            st.valid.at(x, y) = 1;
            normals.at(x, y, 0) = N.x();
            normals.at(x, y, 1) = N.y();
            normals.at(x, y, 2) = N.z();
        }
    }
    return st;
}

GridF normals_backward(const GridF& dL_dnormals, const NormalState& state,
                       const CameraView& view) {
    const int W = state.width, H = state.height;
    if (dL_dnormals.width() != W || dL_dnormals.height() != H || dL_dnormals.channels() != 3)
        throw std::invalid_argument("normals_backward: gradient shape mismatch");

    GridF dD(W, H, 1, 0.0);
    auto scatter = [&](int x, int y, const Vec3& dP) {
        dD.at(x, y) += dP.dot(view.R_cam_to_world * Vec3((x + 0.5 - view.cx) / view.fx,
                                                         (y + 0.5 - view.cy) / view.fy, 1.0));
    };

    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (!state.valid.at(x, y))
                continue;
            const size_t p = size_t(y) * W + x;
            Vec3 g(dL_dnormals.at(x, y, 0), dL_dnormals.at(x, y, 1), dL_dnormals.at(x, y, 2));
            if (g.squaredNorm() == 0)
                continue;
            if (state.flipped.at(x, y))
                g = -g;

            const Vec3 N = state.n_fused[p] / state.fused_norm[p];
            const Vec3 g_fused = (g - N * N.dot(g)) / state.fused_norm[p];

            const Scalar lam = state.cfg.fuse_lambda;
            const Vec3 g1 = lam * g_fused;
            const Vec3 g2 = (1.0 - lam) * state.sign2[p] * g_fused;

            // n = vx x vy: adjoints are vy x g and g x vx, scattered to the
            // four stencil points of each scale.
            const Vec3 dvx1 = state.vy1[p].cross(g1);
            const Vec3 dvy1 = g1.cross(state.vx1[p]);
            const Vec3 dvx2 = state.vy2[p].cross(g2);
            const Vec3 dvy2 = g2.cross(state.vx2[p]);

            const int s1 = state.cfg.step1, s2 = state.cfg.step2;
            scatter(x + s1, y, dvx1);
            scatter(x - s1, y, -dvx1);
            scatter(x, y + s1, dvy1);
            scatter(x, y - s1, -dvy1);
            scatter(x + s2, y, dvx2);
            scatter(x - s2, y, -dvx2);
            scatter(x, y + s2, dvy2);
            scatter(x, y - s2, -dvy2);
        }
    }
    return dD;
}

} // namespace msplat
