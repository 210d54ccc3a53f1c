// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "vpmap/error.hpp"

namespace vpmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct FrameGrid {
    int width = 1;
    int height = 1;

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    double diagonal() const;
    void validate() const;
    friend bool operator==(const FrameGrid&, const FrameGrid&) = default;
};

/// A T x H x W stack of per-pixel values. The tag keeps semantically
/// different stacks (depth vs. mask vs. disparity) from mixing silently.
template <class T, class Tag>
class Field {
public:
    using value_type = T;

    Field() = default;
    Field(int frames, FrameGrid grid, T fill = T{})
        : frames_(frames), grid_(grid),
          data_(static_cast<std::size_t>(frames) * grid.pixels(), fill) {
        grid.validate();
        if (frames < 0) throw Error(ErrorCode::ShapeError, "negative frame count");
    }

    int frames() const { return frames_; }
    const FrameGrid& grid() const { return grid_; }
    int width() const { return grid_.width; }
    int height() const { return grid_.height; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t index(int t, int v, int u) const {
        return (static_cast<std::size_t>(t) * grid_.height + v) * grid_.width + u;
    }
    T& operator()(int t, int v, int u) { return data_[index(t, v, u)]; }
    const T& operator()(int t, int v, int u) const { return data_[index(t, v, u)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> frame(int t) {
        return std::span<T>(data_).subspan(static_cast<std::size_t>(t) * grid_.pixels(), grid_.pixels());
    }
    std::span<const T> frame(int t) const {
        return std::span<const T>(data_).subspan(static_cast<std::size_t>(t) * grid_.pixels(),
                                                 grid_.pixels());
    }

    std::vector<T>& values() { return data_; }
    const std::vector<T>& values() const { return data_; }

    template <class U, class OtherTag>
    bool same_shape(const Field<U, OtherTag>& other) const {
        return frames_ == other.frames() && grid_ == other.grid();
    }

    /// Reinterpret as a differently tagged stack with identical contents.
    template <class OtherTag>
    Field<T, OtherTag> retag() const {
        Field<T, OtherTag> out(frames_, grid_);
        out.values() = data_;
        return out;
    }

private:
    int frames_ = 0;
    FrameGrid grid_{};
    std::vector<T> data_;
};

struct PointTag {};
struct MaskTag {};
struct DepthTag {};
struct DisparityTag {};

/// Camera-space coordinates, x right, y down, z forward.
using PointMap = Field<Vec3, PointTag>;
/// Per-pixel validity in [0, 1]; binarized at 0.5.
using ValidMask = Field<double, MaskTag>;
using DepthMap = Field<double, DepthTag>;
/// b*f / z with the baseline-focal product taken as 1.
using DisparityMap = Field<double, DisparityTag>;

inline constexpr double kMaskThreshold = 0.5;

inline bool is_valid(double mask_value) { return mask_value >= kMaskThreshold; }

ValidMask binarize(const ValidMask& mask);
std::size_t count_valid(const ValidMask& mask);

/// Pinhole camera with square pixels and the principal point at the grid center.
struct Intrinsics {
    double focal = 1.0;

    void validate() const;
};

/// World-to-camera rigid transform: X_cam = R * X_world + t.
struct PoseSE3 {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static PoseSE3 identity() { return {}; }
    Vec3 apply(const Vec3& world) const { return rotation * world + translation; }
    PoseSE3 inverse() const;
    PoseSE3 operator*(const PoseSE3& rhs) const;
    /// Camera center in world coordinates.
    Vec3 center() const { return -rotation.transpose() * translation; }
    bool is_valid(double tol = 1e-9) const;
};

/// Rotation matrix for an axis-angle vector (Rodrigues).
Mat3 exp_so3(const Vec3& omega);
/// Inverse of exp_so3; angle in [0, pi].
Vec3 log_so3(const Mat3& rotation);
/// Angle of R_a^T R_b in radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);
Mat3 skew(const Vec3& v);

struct Projection {
    Vec2 pixel;
    double depth;
};

Projection project(const Vec3& point, const Intrinsics& K, const FrameGrid& grid);
Vec3 unproject(const Vec2& pixel, double depth, const Intrinsics& K, const FrameGrid& grid);

/// Unit normals with a definedness flag per pixel.
struct NormalMap {
    Field<Vec3, PointTag> normals;
    Field<std::uint8_t, MaskTag> defined;

    NormalMap() = default;
    NormalMap(int frames, FrameGrid grid)
        : normals(frames, grid, Vec3::Zero()), defined(frames, grid, 0) {}
    int frames() const { return normals.frames(); }
    const FrameGrid& grid() const { return normals.grid(); }
};

/// Central-difference tangents crossed and oriented toward the camera.
/// Border pixels and pixels with an invalid stencil neighbor are undefined.
NormalMap derive_normals(const PointMap& pmap, const ValidMask& mask);

/// Backpropagates dL/dn through derive_normals to dL/dp.
PointMap derive_normals_backward(const PointMap& pmap, const NormalMap& normals,
                                 const PointMap& grad_normals);

}  // namespace vpmap
