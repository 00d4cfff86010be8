#include "msplat/scene.hpp"

#include "msplat/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace msplat {

namespace {

bool all_finite(const GaussianPrimitive& g) {
    return g.position.allFinite() && g.rotation.allFinite() && g.log_scale.allFinite() &&
           std::isfinite(g.opacity_logit) && g.sh.allFinite() && g.semantic_logits.allFinite() &&
           std::isfinite(g.gradient_factor);
}

Scalar logistic(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

void Scene::validate() const {
    const int ch = sh_coeff_count();
    if (sh_degree < 0 || sh_degree > 3)
        throw std::invalid_argument("Scene: sh_degree must be in [0,3]");
    if (num_classes < 0)
        throw std::invalid_argument("Scene: num_classes must be >= 0");
    for (size_t i = 0; i < gaussians.size(); ++i) {
        const auto& g = gaussians[i];
        if (g.sh.cols() != ch)
            throw std::invalid_argument("Scene: primitive " + std::to_string(i) +
                                        " has wrong SH coefficient count");
        if (g.semantic_logits.size() != num_classes)
            throw std::invalid_argument("Scene: primitive " + std::to_string(i) +
                                        " has wrong semantic channel count");
        if (!all_finite(g))
            throw std::invalid_argument("Scene: primitive " + std::to_string(i) +
                                        " has non-finite fields");
    }
}

ActivatedGaussian activate(const GaussianPrimitive& g, size_t index) {
    if (!all_finite(g))
        throw std::invalid_argument("activate: primitive " + std::to_string(index) +
                                    " has non-finite fields");
    ActivatedGaussian a;
    a.position = g.position;
    const Scalar norm = g.rotation.norm();
    if (norm < 1e-12)
        throw std::invalid_argument("activate: primitive " + std::to_string(index) +
                                    " has a zero quaternion");
    a.unit_q = g.rotation / norm;
    a.R = quat_to_rotation(a.unit_q);
    a.scale = g.log_scale.array().exp();
    a.alpha = logistic(g.opacity_logit);
    a.sh = &g.sh;
    a.semantic_logits = &g.semantic_logits;
    a.k = g.gradient_factor;
    return a;
}

std::vector<ActivatedGaussian> activate_scene(const Scene& scene) {
    std::vector<ActivatedGaussian> out;
    out.reserve(scene.size());
    for (size_t i = 0; i < scene.size(); ++i)
        out.push_back(activate(scene.gaussians[i], i));
    return out;
}

void GradientBuffer::resize_zero(const Scene& scene) {
    const size_t n = scene.size();
    const int ch = scene.sh_coeff_count();
    dposition.assign(n, Vec3::Zero());
    drotation.assign(n, Vec4::Zero());
    dscale.assign(n, Vec3::Zero());
    dopacity.assign(n, 0.0);
    dsh.assign(n, ShMatrix::Zero(3, ch));
    dsemantics.assign(n, VecX::Zero(scene.num_classes));
    dk.assign(n, 0.0);
    raw_space = false;
}

void GradientBuffer::add(const GradientBuffer& other) {
    if (other.size() != size())
        throw std::invalid_argument("GradientBuffer::add: size mismatch");
    for (size_t i = 0; i < size(); ++i) {
        dposition[i] += other.dposition[i];
        drotation[i] += other.drotation[i];
        dscale[i] += other.dscale[i];
        dopacity[i] += other.dopacity[i];
        dsh[i] += other.dsh[i];
        dsemantics[i] += other.dsemantics[i];
        dk[i] += other.dk[i];
    }
}

void GradientBuffer::check_finite(const char* where) const {
    for (size_t i = 0; i < size(); ++i) {
        const bool ok = dposition[i].allFinite() && drotation[i].allFinite() &&
                        dscale[i].allFinite() && std::isfinite(dopacity[i]) &&
                        dsh[i].allFinite() && dsemantics[i].allFinite() && std::isfinite(dk[i]);
        if (!ok)
            throw std::runtime_error(std::string(where) + ": non-finite gradient for primitive " +
                                     std::to_string(i));
    }
}

void chain_activations(GradientBuffer& buf, const Scene& scene) {
    if (buf.size() != scene.size())
        throw std::invalid_argument("chain_activations: buffer/scene size mismatch");
    if (buf.raw_space)
        throw std::logic_error("chain_activations: buffer already in raw-parameter space");
    for (size_t i = 0; i < scene.size(); ++i) {
        const auto& g = scene.gaussians[i];

        const Scalar norm = g.rotation.norm();
        const Vec4 q_hat = g.rotation / norm;
        Vec4 dq = buf.drotation[i];
        dq = (dq - q_hat * q_hat.dot(dq)) / norm;
        buf.drotation[i] = dq;

        const Vec3 s = g.log_scale.array().exp();
        buf.dscale[i] = buf.dscale[i].cwiseProduct(s);

        const Scalar alpha = 1.0 / (1.0 + std::exp(-g.opacity_logit));
        buf.dopacity[i] *= alpha * (1.0 - alpha);
    }
    buf.raw_space = true;
}

} // namespace msplat
