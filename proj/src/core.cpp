// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vpmap {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::ShapeError: return "ShapeError";
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::InvalidDepth: return "InvalidDepth";
        case ErrorCode::InvalidPoint: return "InvalidPoint";
        case ErrorCode::InvalidFov: return "InvalidFov";
        case ErrorCode::InvalidSigma: return "InvalidSigma";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::EmptyClip: return "EmptyClip";
        case ErrorCode::NotGpm: return "NotGpm";
        case ErrorCode::CorruptFile: return "CorruptFile";
        case ErrorCode::TypeError: return "TypeError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::DegenerateProjection: return "DegenerateProjection";
        case ErrorCode::DegenerateRange: return "DegenerateRange";
        case ErrorCode::DegeneratePrediction: return "DegeneratePrediction";
        case ErrorCode::AntiCorrelated: return "AntiCorrelated";
        case ErrorCode::FocalUnobservable: return "FocalUnobservable";
        case ErrorCode::UnderConstrained: return "UnderConstrained";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::DivergenceError: return "DivergenceError";
    }
    return "Unknown";
}

bool is_numerical(ErrorCode code) noexcept {
    return code >= ErrorCode::DegenerateProjection;
}

double FrameGrid::diagonal() const {
    return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

void FrameGrid::validate() const {
    if (width < 1 || height < 1) {
        throw Error(ErrorCode::ShapeError,
                    "grid must be at least 1x1, got " + std::to_string(width) + "x" +
                        std::to_string(height));
    }
}

ValidMask binarize(const ValidMask& mask) {
    ValidMask out(mask.frames(), mask.grid());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = is_valid(mask[i]) ? 1.0 : 0.0;
    return out;
}

std::size_t count_valid(const ValidMask& mask) {
    std::size_t n = 0;
    for (double m : mask.values()) n += is_valid(m) ? 1 : 0;
    return n;
}

void Intrinsics::validate() const {
    if (!(focal > 0.0) || !std::isfinite(focal)) {
        throw Error(ErrorCode::InvalidInput, "focal length must be positive and finite");
    }
}

PoseSE3 PoseSE3::inverse() const {
    PoseSE3 inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

PoseSE3 PoseSE3::operator*(const PoseSE3& rhs) const {
    PoseSE3 out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
}

bool PoseSE3::is_valid(double tol) const {
    const Mat3 gram = rotation.transpose() * rotation;
    return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol && translation.allFinite();
}

Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return s;
}

Mat3 exp_so3(const Vec3& omega) {
    const double theta = omega.norm();
    if (theta < 1e-12) return Mat3::Identity() + skew(omega);
    return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Vec3 log_so3(const Mat3& rotation) {
    const Eigen::AngleAxisd aa(rotation);
    return aa.angle() * aa.axis();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
    const Mat3 rel = a.transpose() * b;
    const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
    // acos loses precision near zero; use the skew part there.
    const Vec3 w(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
    return std::atan2(0.5 * w.norm(), c);
}

Projection project(const Vec3& point, const Intrinsics& K, const FrameGrid& grid) {
    if (!(point.z() > 0.0)) {
        throw Error(ErrorCode::DegenerateProjection, "point must lie in front of the camera");
    }
    const double cx = 0.5 * grid.width;
    const double cy = 0.5 * grid.height;
    return {Vec2(cx + K.focal * point.x() / point.z(), cy + K.focal * point.y() / point.z()),
            point.z()};
}

Vec3 unproject(const Vec2& pixel, double depth, const Intrinsics& K, const FrameGrid& grid) {
    if (!(depth > 0.0)) throw Error(ErrorCode::InvalidDepth, "depth must be positive");
    const double cx = 0.5 * grid.width;
    const double cy = 0.5 * grid.height;
    return {(pixel.x() - cx) * depth / K.focal, (pixel.y() - cy) * depth / K.focal, depth};
}

namespace {

constexpr double kMinCrossNorm = 1e-12;

bool stencil_valid(const ValidMask& mask, int t, int v, int u) {
    const int w = mask.width();
    const int h = mask.height();
    if (u < 1 || v < 1 || u > w - 2 || v > h - 2) return false;
    return is_valid(mask(t, v, u)) && is_valid(mask(t, v, u - 1)) && is_valid(mask(t, v, u + 1)) &&
           is_valid(mask(t, v - 1, u)) && is_valid(mask(t, v + 1, u));
}

struct Tangents {
    Vec3 du;
    Vec3 dv;
};

Tangents tangents_at(const PointMap& p, int t, int v, int u) {
    return {0.5 * (p(t, v, u + 1) - p(t, v, u - 1)), 0.5 * (p(t, v + 1, u) - p(t, v - 1, u))};
}

}  // namespace

NormalMap derive_normals(const PointMap& pmap, const ValidMask& mask) {
    if (!pmap.same_shape(mask)) throw Error(ErrorCode::ShapeError, "point map / mask shape mismatch");
    NormalMap out(pmap.frames(), pmap.grid());
    for (int t = 0; t < pmap.frames(); ++t) {
        for (int v = 0; v < pmap.height(); ++v) {
            for (int u = 0; u < pmap.width(); ++u) {
                if (!stencil_valid(mask, t, v, u)) continue;
                const auto [du, dv] = tangents_at(pmap, t, v, u);
                const Vec3 c = du.cross(dv);
                const double norm = c.norm();
                if (!(norm >= kMinCrossNorm) || !std::isfinite(norm)) continue;
                Vec3 n = c / norm;
                if (n.z() > 0.0) n = -n;
                out.normals(t, v, u) = n;
                out.defined(t, v, u) = 1;
            }
        }
    }
    return out;
}

PointMap derive_normals_backward(const PointMap& pmap, const NormalMap& normals,
                                 const PointMap& grad_normals) {
    if (!pmap.same_shape(normals.normals) || !pmap.same_shape(grad_normals)) {
        throw Error(ErrorCode::ShapeError, "normal backward shape mismatch");
    }
    PointMap grad(pmap.frames(), pmap.grid(), Vec3::Zero());
    for (int t = 0; t < pmap.frames(); ++t) {
        for (int v = 0; v < pmap.height(); ++v) {
            for (int u = 0; u < pmap.width(); ++u) {
                if (!normals.defined(t, v, u)) continue;
                const auto [du, dv] = tangents_at(pmap, t, v, u);
                const Vec3 c = du.cross(dv);
                const double norm = c.norm();
                const Vec3 c_hat = c / norm;
                const double sign = normals.normals(t, v, u).dot(c_hat) < 0.0 ? -1.0 : 1.0;
                const Vec3& g = grad_normals(t, v, u);
                // d(c/|c|)/dc = (I - c_hat c_hat^T) / |c|
                const Vec3 gc = sign * (g - c_hat * c_hat.dot(g)) / norm;
                const Vec3 g_du = dv.cross(gc);
                const Vec3 g_dv = gc.cross(du);
                grad(t, v, u + 1) += 0.5 * g_du;
                grad(t, v, u - 1) -= 0.5 * g_du;
                grad(t, v + 1, u) += 0.5 * g_dv;
                grad(t, v - 1, u) -= 0.5 * g_dv;
            }
        }
    }
    return grad;
}

}  // namespace vpmap
