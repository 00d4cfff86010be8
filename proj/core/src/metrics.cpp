#include "msplat/metrics.hpp"

#include "msplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace msplat {

namespace {

/// Minimal 3D kd-tree for exact nearest-neighbor distances.
class KdTree3 {
public:
    explicit KdTree3(const std::vector<Vec3>& points) : points_(points) {
        if (points.empty())
            throw std::invalid_argument("KdTree3: empty point set");
        order_.resize(points.size());
        std::iota(order_.begin(), order_.end(), size_t(0));
        build(0, points.size(), 0);
    }

    Scalar nearest_sq(const Vec3& q) const {
        Scalar best = std::numeric_limits<Scalar>::infinity();
        search(0, points_.size(), 0, q, best);
        return best;
    }

private:
    void build(size_t lo, size_t hi, int axis) {
        if (hi - lo <= 1)
            return;
        const size_t mid = (lo + hi) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                         [&](size_t a, size_t b) { return points_[a][axis] < points_[b][axis]; });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }

    void search(size_t lo, size_t hi, int axis, const Vec3& q, Scalar& best) const {
        if (lo >= hi)
            return;
        const size_t mid = (lo + hi) / 2;
        const Vec3& p = points_[order_[mid]];
        best = std::min(best, (p - q).squaredNorm());
        const Scalar delta = q[axis] - p[axis];
        const int next = (axis + 1) % 3;
        if (delta < 0) {
            search(lo, mid, next, q, best);
            if (delta * delta < best)
                search(mid + 1, hi, next, q, best);
        } else {
            search(mid + 1, hi, next, q, best);
            if (delta * delta < best)
                search(lo, mid, next, q, best);
        }
    }

    const std::vector<Vec3>& points_;
    std::vector<size_t> order_;
};

} // namespace

Scalar psnr(const GridF& a, const GridF& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("psnr: shape mismatch");
    if (a.size() == 0)
        throw std::invalid_argument("psnr: empty images");
    Scalar mse = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const Scalar d = a.storage()[i] - b.storage()[i];
        mse += d * d;
    }
    mse /= Scalar(a.size());
    if (mse <= 1e-10)
        return 100.0;
    return std::min(Scalar(100), 10.0 * std::log10(1.0 / mse));
}

Scalar ssim_metric(const GridF& a, const GridF& b) { return 1.0 - ssim_loss(a, b).value; }

std::optional<Scalar> abs_rel(const GridF& depth, const GridF& gt,
                              const Grid<std::uint8_t>& mask) {
    if (!depth.same_shape(gt))
        throw std::invalid_argument("abs_rel: shape mismatch");
    Scalar sum = 0;
    size_t count = 0;
    for (int y = 0; y < depth.height(); ++y)
        for (int x = 0; x < depth.width(); ++x) {
            if (!mask.at(x, y) || gt.at(x, y) <= 1e-3)
                continue;
            sum += std::abs(depth.at(x, y) - gt.at(x, y)) / gt.at(x, y);
            ++count;
        }
    if (count == 0)
        return std::nullopt;
    return sum / Scalar(count);
}

std::optional<Scalar> rmse(const GridF& depth, const GridF& gt, const Grid<std::uint8_t>& mask) {
    if (!depth.same_shape(gt))
        throw std::invalid_argument("rmse: shape mismatch");
    Scalar sum = 0;
    size_t count = 0;
    for (int y = 0; y < depth.height(); ++y)
        for (int x = 0; x < depth.width(); ++x) {
            if (!mask.at(x, y))
                continue;
            const Scalar d = depth.at(x, y) - gt.at(x, y);
            sum += d * d;
            ++count;
        }
    if (count == 0)
        return std::nullopt;
    return std::sqrt(sum / Scalar(count));
}

std::optional<Scalar> cos_simi(const GridF& normals, const GridF& gt,
                               const Grid<std::uint8_t>& mask) {
    if (!normals.same_shape(gt))
        throw std::invalid_argument("cos_simi: shape mismatch");
    Scalar sum = 0;
    size_t count = 0;
    for (int y = 0; y < normals.height(); ++y)
        for (int x = 0; x < normals.width(); ++x) {
            if (!mask.at(x, y))
                continue;
            for (int ch = 0; ch < 3; ++ch)
                sum += normals.at(x, y, ch) * gt.at(x, y, ch);
            ++count;
        }
    if (count == 0)
        return std::nullopt;
    return sum / Scalar(count);
}

GridU8 argmax_labels(const GridF& logits) {
    GridU8 out(logits.width(), logits.height(), 1);
    for (int y = 0; y < logits.height(); ++y)
        for (int x = 0; x < logits.width(); ++x) {
            int best = 0;
            for (int ch = 1; ch < logits.channels(); ++ch)
                if (logits.at(x, y, ch) > logits.at(x, y, best))
                    best = ch;
            out.at(x, y) = std::uint8_t(best);
        }
    return out;
}

std::optional<Scalar> miou(const GridU8& pred, const GridU8& gt, const Grid<std::uint8_t>& mask,
                           int num_classes) {
    if (pred.width() != gt.width() || pred.height() != gt.height())
        throw std::invalid_argument("miou: shape mismatch");
    std::vector<size_t> inter(num_classes, 0), pred_count(num_classes, 0), gt_count(num_classes, 0);
    size_t valid = 0;
    for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x) {
            if (!mask.at(x, y))
                continue;
            ++valid;
            const int p = pred.at(x, y), g = gt.at(x, y);
            if (p >= num_classes || g >= num_classes)
                throw std::invalid_argument("miou: label out of range");
            ++pred_count[p];
            ++gt_count[g];
            if (p == g)
                ++inter[p];
        }
    if (valid == 0)
        return std::nullopt;
    Scalar sum = 0;
    int classes = 0;
    for (int c = 0; c < num_classes; ++c) {
        const size_t uni = pred_count[c] + gt_count[c] - inter[c];
        if (uni == 0)
            continue; // class absent from both
        sum += Scalar(inter[c]) / Scalar(uni);
        ++classes;
    }
    if (classes == 0)
        return std::nullopt;
    return sum / Scalar(classes);
}

OutlierReport zscore_outliers(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                              Scalar tau) {
    if (pred.empty() || gt.empty())
        throw std::invalid_argument("zscore_outliers: point clouds must be non-empty");
    OutlierReport rep;
    rep.tau = tau;

    const KdTree3 tree(gt);
    std::vector<Scalar> d(pred.size());
    for (size_t i = 0; i < pred.size(); ++i)
        d[i] = std::sqrt(tree.nearest_sq(pred[i]));

    rep.mean = std::accumulate(d.begin(), d.end(), Scalar(0)) / Scalar(d.size());
    Scalar var = 0;
    for (const Scalar v : d)
        var += (v - rep.mean) * (v - rep.mean);
    rep.stddev = std::sqrt(var / Scalar(d.size()));

    if (rep.stddev == 0) {
        rep.radio = 0; // all distances equal; no outliers by convention
    } else {
        size_t outliers = 0;
        for (const Scalar v : d)
            if (std::abs(v - rep.mean) / rep.stddev > tau)
                ++outliers;
        rep.radio = Scalar(outliers) / Scalar(d.size());
    }
    rep.hausdorff = hausdorff(gt, pred);
    return rep;
}

Scalar hausdorff(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("hausdorff: point clouds must be non-empty");
    const KdTree3 tree_a(a), tree_b(b);
    Scalar sup_ab = 0, sup_ba = 0;
    for (const auto& p : a)
        sup_ab = std::max(sup_ab, tree_b.nearest_sq(p));
    for (const auto& p : b)
        sup_ba = std::max(sup_ba, tree_a.nearest_sq(p));
    return std::sqrt(std::max(sup_ab, sup_ba));
}

std::vector<Vec3> sample_scene_points(const Scene& scene, size_t n,
                                      const std::optional<Aabb>& region, std::uint64_t seed) {
    std::vector<Vec3> out;
    if (scene.size() == 0 || n == 0)
        return out;
    const auto activated = activate_scene(scene);

    // Budget per gaussian proportional to activated opacity (largest-remainder
    // rounding keeps the total at n).
    Scalar total = 0;
    for (const auto& a : activated)
        total += a.alpha;
    std::vector<size_t> counts(activated.size(), 0);
    std::vector<std::pair<Scalar, size_t>> fractional;
    size_t assigned = 0;
    for (size_t i = 0; i < activated.size(); ++i) {
        const Scalar share = total > 0 ? Scalar(n) * activated[i].alpha / total
                                       : Scalar(n) / Scalar(activated.size());
        counts[i] = size_t(share);
        assigned += counts[i];
        fractional.push_back({share - Scalar(counts[i]), i});
    }
    std::sort(fractional.begin(), fractional.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (size_t j = 0; assigned < n && j < fractional.size(); ++j, ++assigned)
        ++counts[fractional[j].second];

    std::mt19937_64 rng(seed);
    std::normal_distribution<Scalar> gauss(0.0, 1.0);
    std::uniform_real_distribution<Scalar> uni(0.0, 1.0);
    out.reserve(n);
    for (size_t i = 0; i < activated.size(); ++i) {
        const auto& a = activated[i];
        for (size_t j = 0; j < counts[i]; ++j) {
            Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
            const Scalar norm = dir.norm();
            if (norm < 1e-12) {
                dir = Vec3(1, 0, 0);
            } else {
                dir /= norm;
            }
            const Scalar r = std::cbrt(uni(rng)); // uniform in the unit ball
            const Vec3 p = a.position + a.R * (a.scale.cwiseProduct(dir) * r);
            if (!region || region->contains(p))
                out.push_back(p);
        }
    }
    return out;
}

} // namespace msplat
