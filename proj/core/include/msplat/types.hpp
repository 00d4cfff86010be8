#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace msplat {

using Scalar = double;

using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
using Mat23 = Eigen::Matrix<Scalar, 2, 3>;

/// Dense row-major 2D grid with C channels per pixel.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int width, int height, int channels, T fill = T{})
        : w_(width), h_(height), c_(channels), data_(size_t(width) * height * channels, fill) {
        if (width < 0 || height < 0 || channels < 0)
            throw std::invalid_argument("Grid: negative dimensions");
    }

    int width() const { return w_; }
    int height() const { return h_; }
    int channels() const { return c_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T& at(int x, int y, int ch = 0) { return data_[(size_t(y) * w_ + x) * c_ + ch]; }
    const T& at(int x, int y, int ch = 0) const { return data_[(size_t(y) * w_ + x) * c_ + ch]; }

    T* row(int y) { return data_.data() + size_t(y) * w_ * c_; }
    const T* row(int y) const { return data_.data() + size_t(y) * w_ * c_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Grid& o) const { return w_ == o.w_ && h_ == o.h_ && c_ == o.c_; }

private:
    int w_ = 0, h_ = 0, c_ = 0;
    std::vector<T> data_;
};

using GridF = Grid<Scalar>;
using GridU8 = Grid<std::uint8_t>;

inline std::string shape_string(int w, int h, int c) {
    return std::to_string(w) + "x" + std::to_string(h) + "x" + std::to_string(c);
}

} // namespace msplat
