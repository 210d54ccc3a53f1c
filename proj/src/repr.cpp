// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/repr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace vpmap {

namespace {

void require_shape(const PointMap& pmap, const ValidMask& mask) {
    if (!pmap.same_shape(mask)) throw Error(ErrorCode::ShapeError, "point map / mask shape mismatch");
}

double pixel_u(int u, const FrameGrid& grid) { return u - 0.5 * grid.width; }
double pixel_v(int v, const FrameGrid& grid) { return v - 0.5 * grid.height; }

}  // namespace

DepthMap depth_of(const PointMap& pmap) {
    DepthMap out(pmap.frames(), pmap.grid());
    for (std::size_t i = 0; i < pmap.size(); ++i) out[i] = pmap[i].z();
    return out;
}

DisparityMap disparity_from_depth(const DepthMap& depth, const ValidMask& mask) {
    if (!depth.same_shape(mask)) throw Error(ErrorCode::ShapeError, "depth / mask shape mismatch");
    DisparityMap out(depth.frames(), depth.grid(), 0.0);
    for (std::size_t i = 0; i < depth.size(); ++i) {
        if (!is_valid(mask[i])) continue;
        if (!(depth[i] > 0.0)) throw Error(ErrorCode::InvalidDepth, "non-positive depth on a valid pixel");
        out[i] = 1.0 / depth[i];
    }
    return out;
}

NormalizedDisparityResult normalize_disparity(const DisparityMap& disp, const ValidMask& mask) {
    if (!disp.same_shape(mask)) throw Error(ErrorCode::ShapeError, "disparity / mask shape mismatch");
    for (int t = 0; t < disp.frames(); ++t) {
        const auto m = mask.frame(t);
        if (std::none_of(m.begin(), m.end(), is_valid)) {
            throw Error(ErrorCode::EmptyMask, "frame " + std::to_string(t) + " has no valid pixel");
        }
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < disp.size(); ++i) {
        if (!is_valid(mask[i])) continue;
        lo = std::min(lo, disp[i]);
        hi = std::max(hi, disp[i]);
    }
    NormalizedDisparityResult out{NormalizedDisparity(disp.frames(), disp.grid(), 0.0), false};
    if (!(hi > lo)) {
        out.degenerate_range = true;
        return out;
    }
    const double range = hi - lo;
    for (std::size_t i = 0; i < disp.size(); ++i) {
        if (is_valid(mask[i])) out.values[i] = 2.0 * (disp[i] - lo) / range - 1.0;
    }
    return out;
}

CuboidMap encode_cuboid(const PointMap& pmap, const ValidMask& mask) {
    require_shape(pmap, mask);
    CuboidMap out(pmap.frames(), pmap.grid(), Vec3::Zero());
    for (std::size_t i = 0; i < pmap.size(); ++i) {
        if (!is_valid(mask[i])) continue;
        const Vec3& p = pmap[i];
        if (!(p.z() > 0.0) || !p.allFinite()) {
            throw Error(ErrorCode::InvalidPoint, "valid pixel with non-positive or non-finite z");
        }
        out[i] = Vec3(p.x() / p.z(), p.y() / p.z(), std::log(p.z()));
    }
    return out;
}

PointMap decode_cuboid(const CuboidMap& cuboid) {
    PointMap out(cuboid.frames(), cuboid.grid());
    for (std::size_t i = 0; i < cuboid.size(); ++i) {
        const Vec3& c = cuboid[i];
        if (!c.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite cuboid channel");
        const double z = std::exp(c.z());
        out[i] = Vec3(c.x() * z, c.y() * z, z);
    }
    return out;
}

PointMap decode_cuboid(const CuboidMap& cuboid, const ValidMask& mask) {
    if (!cuboid.same_shape(mask)) throw Error(ErrorCode::ShapeError, "cuboid / mask shape mismatch");
    PointMap out = decode_cuboid(cuboid);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!is_valid(mask[i])) out[i] = Vec3::Zero();
    }
    return out;
}

double theta_from_focal(double focal, const FrameGrid& grid) {
    if (!(focal > 0.0)) throw Error(ErrorCode::InvalidInput, "focal must be positive");
    return grid.diagonal() / (2.0 * focal);
}

double focal_from_theta(double theta_diag, const FrameGrid& grid) {
    if (!(theta_diag > 0.0) || !std::isfinite(theta_diag)) {
        throw Error(ErrorCode::InvalidFov, "theta_diag must be positive and finite");
    }
    return grid.diagonal() / (2.0 * theta_diag);
}

double recover_focal(const PointMap& pmap, const ValidMask& mask, int frame) {
    require_shape(pmap, mask);
    const FrameGrid& grid = pmap.grid();
    // Minimize sum (du - f*a)^2 + (dv - f*b)^2 with a = x/z, b = y/z.
    double num = 0.0;
    double den = 0.0;
    for (int v = 0; v < grid.height; ++v) {
        for (int u = 0; u < grid.width; ++u) {
            if (!is_valid(mask(frame, v, u))) continue;
            const Vec3& p = pmap(frame, v, u);
            if (!(p.z() > 0.0) || !p.allFinite()) {
                throw Error(ErrorCode::InvalidPoint, "valid pixel with non-positive or non-finite z");
            }
            const double a = p.x() / p.z();
            const double b = p.y() / p.z();
            num += pixel_u(u, grid) * a + pixel_v(v, grid) * b;
            den += a * a + b * b;
        }
    }
    if (!(den > 0.0) || !(num > 0.0)) {
        throw Error(ErrorCode::FocalUnobservable,
                    "frame " + std::to_string(frame) + " has no off-center valid rays");
    }
    return num / den;
}

DecoupledEncoding encode_decoupled(const PointMap& pmap, const ValidMask& mask) {
    require_shape(pmap, mask);
    DecoupledEncoding out;
    out.map.log_depth = LogDepthMap(pmap.frames(), pmap.grid(), 0.0);
    for (int t = 0; t < pmap.frames(); ++t) {
        const double f = recover_focal(pmap, mask, t);
        out.intrinsics.push_back(Intrinsics{f});
        out.map.theta_diag.push_back(theta_from_focal(f, pmap.grid()));
    }
    for (std::size_t i = 0; i < pmap.size(); ++i) {
        if (is_valid(mask[i])) out.map.log_depth[i] = std::log(pmap[i].z());
    }
    return out;
}

PointMap decode_decoupled(const DecoupledMap& dec) {
    const FrameGrid& grid = dec.grid();
    if (static_cast<int>(dec.theta_diag.size()) != dec.frames()) {
        throw Error(ErrorCode::ShapeError, "theta_diag length differs from frame count");
    }
    PointMap out(dec.frames(), grid);
    for (int t = 0; t < dec.frames(); ++t) {
        const double f = focal_from_theta(dec.theta_diag[t], grid);
        for (int v = 0; v < grid.height; ++v) {
            for (int u = 0; u < grid.width; ++u) {
                const double ld = dec.log_depth(t, v, u);
                if (!std::isfinite(ld)) throw Error(ErrorCode::InvalidInput, "non-finite log depth");
                const double z = std::exp(ld);
                out(t, v, u) = Vec3(pixel_u(u, grid) * z / f, pixel_v(v, grid) * z / f, z);
            }
        }
    }
    return out;
}

PointMap decode_decoupled(const DecoupledMap& dec, const ValidMask& mask) {
    if (!dec.log_depth.same_shape(mask)) throw Error(ErrorCode::ShapeError, "decoupled / mask shape mismatch");
    PointMap out = decode_decoupled(dec);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!is_valid(mask[i])) out[i] = Vec3::Zero();
    }
    return out;
}

DecoupledMap decode_decoupled_backward(const DecoupledMap& dec, const PointMap& grad_points) {
    const FrameGrid& grid = dec.grid();
    if (!dec.log_depth.same_shape(grad_points)) throw Error(ErrorCode::ShapeError, "gradient shape mismatch");
    DecoupledMap grad;
    grad.log_depth = LogDepthMap(dec.frames(), grid, 0.0);
    grad.theta_diag.assign(dec.frames(), 0.0);
    const double half_diag = 0.5 * grid.diagonal();
    for (int t = 0; t < dec.frames(); ++t) {
        const double theta = dec.theta_diag[t];
        // x = du * z * theta / half_diag, so dx/dtheta = x / theta.
        double g_theta = 0.0;
        for (int v = 0; v < grid.height; ++v) {
            for (int u = 0; u < grid.width; ++u) {
                const double z = std::exp(dec.log_depth(t, v, u));
                const double x = pixel_u(u, grid) * z * theta / half_diag;
                const double y = pixel_v(v, grid) * z * theta / half_diag;
                const Vec3& g = grad_points(t, v, u);
                grad.log_depth(t, v, u) = g.x() * x + g.y() * y + g.z() * z;
                g_theta += (g.x() * x + g.y() * y) / theta;
            }
        }
        grad.theta_diag[t] = g_theta;
    }
    return grad;
}

NormalizedSequence normalize_sequence(const PointMap& pmap, const ValidMask& mask) {
    require_shape(pmap, mask);
    std::vector<double> depths;
    for (std::size_t i = 0; i < pmap.size(); ++i) {
        if (is_valid(mask[i])) depths.push_back(pmap[i].z());
    }
    if (depths.empty()) throw Error(ErrorCode::EmptyClip, "clip has no valid pixel");
    const auto mid = depths.begin() + static_cast<std::ptrdiff_t>((depths.size() - 1) / 2);
    std::nth_element(depths.begin(), mid, depths.end());
    const double scale = *mid;
    if (!(scale > 0.0)) throw Error(ErrorCode::InvalidPoint, "median valid depth is not positive");
    PointMap out = pmap;
    for (auto& p : out.values()) p /= scale;
    return {std::move(out), scale};
}

PointMap denormalize_sequence(const PointMap& pmap, double scale) {
    PointMap out = pmap;
    for (auto& p : out.values()) p *= scale;
    return out;
}

}  // namespace vpmap
