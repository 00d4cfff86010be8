#include "msplat/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace msplat {

namespace {

void require_same_shape(const GridF& a, const GridF& b, const char* who) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                    shape_string(a.width(), a.height(), a.channels()) + " vs " +
                                    shape_string(b.width(), b.height(), b.channels()));
}

Scalar sign_of(Scalar v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

constexpr int kWindow = 11;
constexpr Scalar kSsimSigma = 1.5;
constexpr Scalar kSsimC1 = 0.01 * 0.01;
constexpr Scalar kSsimC2 = 0.03 * 0.03;

std::array<Scalar, kWindow> ssim_window() {
    std::array<Scalar, kWindow> w{};
    Scalar sum = 0;
    for (int i = 0; i < kWindow; ++i) {
        const Scalar d = i - (kWindow - 1) / 2.0;
        w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[i];
    }
    for (auto& v : w)
        v /= sum;
    return w;
}

/// Valid-region separable correlation of one channel with the SSIM window.
/// in: W x H values, out: (W-10) x (H-10).
void conv_valid(const std::vector<Scalar>& in, int W, int H, const std::array<Scalar, kWindow>& w,
                std::vector<Scalar>& tmp, std::vector<Scalar>& out) {
    const int Wv = W - kWindow + 1, Hv = H - kWindow + 1;
    tmp.assign(size_t(Wv) * H, 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < Wv; ++x) {
            Scalar acc = 0;
            for (int i = 0; i < kWindow; ++i)
                acc += w[i] * in[size_t(y) * W + x + i];
            tmp[size_t(y) * Wv + x] = acc;
        }
    out.assign(size_t(Wv) * Hv, 0.0);
    for (int y = 0; y < Hv; ++y)
        for (int x = 0; x < Wv; ++x) {
            Scalar acc = 0;
            for (int i = 0; i < kWindow; ++i)
                acc += w[i] * tmp[size_t(y + i) * Wv + x];
            out[size_t(y) * Wv + x] = acc;
        }
}

/// Adjoint of conv_valid: scatters a valid-grid field back onto the image grid.
void conv_valid_adjoint(const std::vector<Scalar>& in, int W, int H,
                        const std::array<Scalar, kWindow>& w, std::vector<Scalar>& out) {
    const int Wv = W - kWindow + 1, Hv = H - kWindow + 1;
    out.assign(size_t(W) * H, 0.0);
    std::vector<Scalar> tmp(size_t(W) * Hv, 0.0);
    for (int y = 0; y < Hv; ++y)
        for (int x = 0; x < Wv; ++x) {
            const Scalar v = in[size_t(y) * Wv + x];
            if (v == 0)
                continue;
            for (int i = 0; i < kWindow; ++i)
                tmp[size_t(y) * W + x + i] += w[i] * v;
        }
    for (int y = 0; y < Hv; ++y)
        for (int x = 0; x < W; ++x) {
            const Scalar v = tmp[size_t(y) * W + x];
            if (v == 0)
                continue;
            for (int i = 0; i < kWindow; ++i)
                out[size_t(y + i) * W + x] += w[i] * v;
        }
}

} // namespace

ScalarLoss l1_rgb(const GridF& rendered, const GridF& target) {
    require_same_shape(rendered, target, "l1_rgb");
    ScalarLoss out;
    out.grad = GridF(rendered.width(), rendered.height(), rendered.channels(), 0.0);
    const size_t n = rendered.size();
    if (n == 0)
        return out;
    Scalar sum = 0;
    for (size_t i = 0; i < n; ++i) {
        const Scalar diff = rendered.storage()[i] - target.storage()[i];
        sum += std::abs(diff);
        out.grad.storage()[i] = sign_of(diff) / Scalar(n);
    }
    out.value = sum / Scalar(n);
    return out;
}

ScalarLoss ssim_loss(const GridF& rendered, const GridF& target) {
    require_same_shape(rendered, target, "ssim_loss");
    const int W = rendered.width(), H = rendered.height(), C = rendered.channels();
    if (W < kWindow || H < kWindow)
        throw std::invalid_argument("ssim_loss: frame smaller than the 11x11 window");

    const auto w = ssim_window();
    const int Wv = W - kWindow + 1, Hv = H - kWindow + 1;
    const size_t nv = size_t(Wv) * Hv;
    const Scalar inv_count = 1.0 / (Scalar(nv) * C);

    ScalarLoss out;
    out.grad = GridF(W, H, C, 0.0);

    std::vector<Scalar> x(size_t(W) * H), y(size_t(W) * H), xy(size_t(W) * H),
        x2(size_t(W) * H), y2(size_t(W) * H);
    std::vector<Scalar> mu_x, mu_y, e_x2, e_y2, e_xy, tmp;
    std::vector<Scalar> g_mu_x(nv), g_ex2(nv), g_exy(nv), back;

    Scalar ssim_sum = 0;
    for (int ch = 0; ch < C; ++ch) {
        for (int py = 0; py < H; ++py)
            for (int px = 0; px < W; ++px) {
                const size_t i = size_t(py) * W + px;
                x[i] = rendered.at(px, py, ch);
                y[i] = target.at(px, py, ch);
                xy[i] = x[i] * y[i];
                x2[i] = x[i] * x[i];
                y2[i] = y[i] * y[i];
            }
        conv_valid(x, W, H, w, tmp, mu_x);
        conv_valid(y, W, H, w, tmp, mu_y);
        conv_valid(x2, W, H, w, tmp, e_x2);
        conv_valid(y2, W, H, w, tmp, e_y2);
        conv_valid(xy, W, H, w, tmp, e_xy);

        for (size_t i = 0; i < nv; ++i) {
            const Scalar mx = mu_x[i], my = mu_y[i];
            const Scalar sx = e_x2[i] - mx * mx;
            const Scalar sy = e_y2[i] - my * my;
            const Scalar sxy = e_xy[i] - mx * my;
            const Scalar a1 = 2 * mx * my + kSsimC1;
            const Scalar a2 = 2 * sxy + kSsimC2;
            const Scalar b1 = mx * mx + my * my + kSsimC1;
            const Scalar b2 = sx + sy + kSsimC2;
            const Scalar s = (a1 * a2) / (b1 * b2);
            ssim_sum += s;

            const Scalar dS = -inv_count; // loss = 1 - mean SSIM
            g_mu_x[i] = dS * (2 * my * (a2 - a1) / (b1 * b2) - 2 * mx * s * (1 / b1 - 1 / b2));
            g_ex2[i] = dS * (-s / b2);
            g_exy[i] = dS * (2 * a1 / (b1 * b2));
        }

        conv_valid_adjoint(g_mu_x, W, H, w, back);
        for (size_t i = 0; i < size_t(W) * H; ++i)
            out.grad.storage()[i * C + ch] += back[i];
        conv_valid_adjoint(g_ex2, W, H, w, back);
        for (size_t i = 0; i < size_t(W) * H; ++i)
            out.grad.storage()[i * C + ch] += 2 * x[i] * back[i];
        conv_valid_adjoint(g_exy, W, H, w, back);
        for (size_t i = 0; i < size_t(W) * H; ++i)
            out.grad.storage()[i * C + ch] += y[i] * back[i];
    }
    out.value = 1.0 - ssim_sum * inv_count;
    return out;
}

ScalarLoss depth_l1(const GridF& rendered, const GridF& target, const Grid<std::uint8_t>& mask) {
    require_same_shape(rendered, target, "depth_l1");
    if (mask.width() != rendered.width() || mask.height() != rendered.height())
        throw std::invalid_argument("depth_l1: mask shape mismatch");
    ScalarLoss out;
    out.grad = GridF(rendered.width(), rendered.height(), 1, 0.0);
    size_t count = 0;
    for (int y = 0; y < rendered.height(); ++y)
        for (int x = 0; x < rendered.width(); ++x)
            if (mask.at(x, y))
                ++count;
    if (count == 0)
        return out;
    Scalar sum = 0;
    for (int y = 0; y < rendered.height(); ++y)
        for (int x = 0; x < rendered.width(); ++x) {
            if (!mask.at(x, y))
                continue;
            const Scalar diff = rendered.at(x, y) - target.at(x, y);
            sum += std::abs(diff);
            out.grad.at(x, y) = sign_of(diff) / Scalar(count);
        }
    out.value = sum / Scalar(count);
    return out;
}

ScalarLoss normal_cosine(const GridF& rendered, const GridF& target,
                         const Grid<std::uint8_t>& mask) {
    require_same_shape(rendered, target, "normal_cosine");
    ScalarLoss out;
    out.grad = GridF(rendered.width(), rendered.height(), 3, 0.0);
    size_t count = 0;
    for (int y = 0; y < rendered.height(); ++y)
        for (int x = 0; x < rendered.width(); ++x)
            if (mask.at(x, y))
                ++count;
    if (count == 0)
        return out;
    Scalar dot_sum = 0;
    for (int y = 0; y < rendered.height(); ++y)
        for (int x = 0; x < rendered.width(); ++x) {
            if (!mask.at(x, y))
                continue;
            for (int ch = 0; ch < 3; ++ch) {
                dot_sum += rendered.at(x, y, ch) * target.at(x, y, ch);
                out.grad.at(x, y, ch) = -target.at(x, y, ch) / Scalar(count);
            }
        }
    out.value = 1.0 - dot_sum / Scalar(count);
    return out;
}

ScalarLoss cross_entropy_seg(const GridF& logits, const GridU8& labels,
                             const Grid<std::uint8_t>& mask) {
    const int W = logits.width(), H = logits.height(), C = logits.channels();
    if (labels.width() != W || labels.height() != H || labels.channels() != 1)
        throw std::invalid_argument("cross_entropy_seg: label map shape mismatch");
    if (C < 1)
        throw std::invalid_argument("cross_entropy_seg: no semantic channels");
    ScalarLoss out;
    out.grad = GridF(W, H, C, 0.0);
    size_t count = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (mask.at(x, y))
                ++count;
    if (count == 0)
        return out;

    Scalar sum = 0;
    std::vector<Scalar> p(C);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!mask.at(x, y))
                continue;
            const int label = labels.at(x, y);
            if (label < 0 || label >= C)
                throw std::invalid_argument("cross_entropy_seg: label " + std::to_string(label) +
                                            " out of range at pixel (" + std::to_string(x) + "," +
                                            std::to_string(y) + ")");
            Scalar max_logit = logits.at(x, y, 0);
            for (int ch = 1; ch < C; ++ch)
                max_logit = std::max(max_logit, logits.at(x, y, ch));
            Scalar z = 0;
            for (int ch = 0; ch < C; ++ch) {
                p[ch] = std::exp(logits.at(x, y, ch) - max_logit);
                z += p[ch];
            }
            sum += std::log(z) - (logits.at(x, y, label) - max_logit);
            for (int ch = 0; ch < C; ++ch)
                out.grad.at(x, y, ch) =
                    (p[ch] / z - (ch == label ? 1.0 : 0.0)) / Scalar(count);
        }
    out.value = sum / Scalar(count);
    return out;
}

ScalarLoss gradient_factor_loss(const GridF& kmap) {
    ScalarLoss out;
    out.grad = GridF(kmap.width(), kmap.height(), 1, 0.0);
    const size_t n = kmap.size();
    if (n == 0)
        return out;
    Scalar sum = 0;
    for (size_t i = 0; i < n; ++i) {
        const Scalar diff = kmap.storage()[i] - 1.0;
        sum += std::abs(diff);
        out.grad.storage()[i] = sign_of(diff) / Scalar(n);
    }
    out.value = sum / Scalar(n);
    return out;
}

LossReport combine(Scalar l1, Scalar ssim, Scalar normal, Scalar depth, Scalar seg, Scalar k,
                   const std::array<Scalar, 6>& lambdas) {
    LossReport r;
    r.l1 = l1;
    r.ssim = ssim;
    r.normal = normal;
    r.depth = depth;
    r.seg = seg;
    r.k = k;

    const Scalar mag = std::abs(l1);
    auto ratio = [&](Scalar v) { return std::abs(v) < 1e-12 ? 0.0 : mag / std::abs(v); };
    r.ratio_ssim = ratio(ssim);
    r.ratio_normal = ratio(normal);
    r.ratio_depth = ratio(depth);
    r.ratio_seg = ratio(seg);
    r.ratio_k = ratio(k);

    r.seed_l1 = lambdas[0];
    r.seed_ssim = lambdas[1] * r.ratio_ssim;
    r.seed_normal = lambdas[2] * r.ratio_normal;
    r.seed_depth = lambdas[3] * r.ratio_depth;
    r.seed_seg = lambdas[4] * r.ratio_seg;
    r.seed_k = lambdas[5] * r.ratio_k;

    r.combined = lambdas[0] * l1 + r.seed_ssim * ssim + r.seed_normal * normal +
                 r.seed_depth * depth + r.seed_seg * seg + r.seed_k * k;
    return r;
}

} // namespace msplat
