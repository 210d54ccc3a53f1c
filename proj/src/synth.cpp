// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/synth.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace vpmap::synth {

namespace {

constexpr double kMinRayParam = 1e-9;

struct Ray {
    Vec3 origin;
    Vec3 dir;  // camera-space z component of dir is 1, so the ray parameter is depth
};

std::optional<double> intersect(const Plane& p, const Ray& r) {
    const double denom = p.normal.dot(r.dir);
    if (std::abs(denom) < 1e-15) return std::nullopt;
    const double lambda = p.normal.dot(p.point - r.origin) / denom;
    if (lambda > kMinRayParam) return lambda;
    return std::nullopt;
}

std::optional<double> intersect(const Sphere& s, const Ray& r) {
    const Vec3 oc = r.origin - s.center;
    const double a = r.dir.squaredNorm();
    const double b = 2.0 * r.dir.dot(oc);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return std::nullopt;
    // Cancellation-free roots.
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    double r0 = q / a;
    double r1 = q != 0.0 ? c / q : r0;
    if (r0 > r1) std::swap(r0, r1);
    if (r0 > kMinRayParam) return r0;
    if (r1 > kMinRayParam) return r1;
    return std::nullopt;
}

std::optional<double> intersect(const Box& box, const Ray& r) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        if (r.dir[k] == 0.0) {
            if (r.origin[k] < box.lo[k] || r.origin[k] > box.hi[k]) return std::nullopt;
            continue;
        }
        double t0 = (box.lo[k] - r.origin[k]) / r.dir[k];
        double t1 = (box.hi[k] - r.origin[k]) / r.dir[k];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
    }
    if (t_near > t_far) return std::nullopt;
    if (t_near > kMinRayParam) return t_near;
    if (t_far > kMinRayParam) return t_far;
    return std::nullopt;
}

/// Index 2k (lo) or 2k+1 (hi) of the slab face nearest to `p`.
int box_face(const Box& box, const Vec3& p) {
    int face = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        const double d[2] = {std::abs(p[k] - box.lo[k]), std::abs(p[k] - box.hi[k])};
        for (int side = 0; side < 2; ++side) {
            if (d[side] < best) {
                best = d[side];
                face = 2 * k + side;
            }
        }
    }
    return face;
}

Shape moved(const Shape& shape, const Vec3& offset) {
    return std::visit(
        [&](auto s) -> Shape {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, Plane>) {
                s.point += offset;
            } else if constexpr (std::is_same_v<T, Sphere>) {
                s.center += offset;
            } else {
                s.lo += offset;
                s.hi += offset;
            }
            return s;
        },
        shape);
}

Vec3 read_vec3(std::istringstream& line, int line_no) {
    Vec3 v;
    if (!(line >> v.x() >> v.y() >> v.z())) {
        throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": expected three numbers");
    }
    return v;
}

double read_number(std::istringstream& line, int line_no) {
    double x = 0.0;
    if (!(line >> x)) throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": expected a number");
    return x;
}

}  // namespace

void SceneSpec::validate() const {
    grid.validate();
    intrinsics.validate();
    if (frames < 1) throw Error(ErrorCode::InvalidConfig, "scene needs at least one frame");
    if (static_cast<int>(camera_path.size()) != frames) {
        throw Error(ErrorCode::InvalidConfig, "camera path length differs from frame count");
    }
    for (const auto& pose : camera_path) {
        if (!pose.is_valid(1e-9)) throw Error(ErrorCode::InvalidConfig, "camera path contains a non-rigid pose");
    }
    for (const auto& obj : objects) {
        if (const auto* s = std::get_if<Sphere>(&obj.shape); s && !(s->radius > 0.0)) {
            throw Error(ErrorCode::InvalidConfig, "sphere radius must be positive");
        }
        if (const auto* p = std::get_if<Plane>(&obj.shape); p && !(p->normal.norm() > 0.0)) {
            throw Error(ErrorCode::InvalidConfig, "plane normal must be non-zero");
        }
        if (const auto* b = std::get_if<Box>(&obj.shape); b && !(b->lo.array() < b->hi.array()).all()) {
            throw Error(ErrorCode::InvalidConfig, "box corners must satisfy lo < hi");
        }
    }
}

PoseSE3 look_at(const Vec3& eye, const Vec3& target) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = Vec3::UnitY().cross(forward);
    if (right.norm() < 1e-12) throw Error(ErrorCode::InvalidConfig, "look_at direction is parallel to the y axis");
    right.normalize();
    const Vec3 down = forward.cross(right);
    PoseSE3 pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -pose.rotation * eye;
    return pose;
}

std::vector<PoseSE3> orbit_path(int frames, const Vec3& target, double radius, double start_deg, double span_deg,
                                double height) {
    std::vector<PoseSE3> path;
    path.reserve(frames);
    for (int t = 0; t < frames; ++t) {
        const double frac = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
        const double a = (start_deg + frac * span_deg) * std::numbers::pi / 180.0;
        const Vec3 eye = target + Vec3(radius * std::sin(a), height, -radius * std::cos(a));
        path.push_back(look_at(eye, target));
    }
    return path;
}

SceneSpec parse_scene(std::istream& in) {
    SceneSpec spec;
    spec.objects.clear();
    std::vector<PoseSE3> explicit_poses;
    struct Orbit {
        Vec3 target;
        double radius, start, span, height;
    };
    std::optional<Orbit> orbit;

    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream line(raw);
        std::string key;
        if (!(line >> key)) continue;

        SceneObject obj;
        bool is_object = true;
        if (key == "grid") {
            is_object = false;
            if (!(line >> spec.grid.width >> spec.grid.height)) {
                throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": grid W H");
            }
        } else if (key == "focal") {
            is_object = false;
            spec.intrinsics.focal = read_number(line, line_no);
        } else if (key == "frames") {
            is_object = false;
            spec.frames = static_cast<int>(read_number(line, line_no));
        } else if (key == "seed") {
            is_object = false;
            if (!(line >> spec.seed)) throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": seed");
        } else if (key == "plane") {
            const Vec3 p = read_vec3(line, line_no);
            obj.shape = Plane{p, read_vec3(line, line_no).normalized()};
        } else if (key == "sphere") {
            const Vec3 c = read_vec3(line, line_no);
            obj.shape = Sphere{c, read_number(line, line_no)};
        } else if (key == "box") {
            const Vec3 lo = read_vec3(line, line_no);
            obj.shape = Box{lo, read_vec3(line, line_no)};
        } else if (key == "orbit") {
            is_object = false;
            Orbit o{Vec3::Zero(), 5.0, 0.0, 30.0, 0.0};
            std::string arg;
            while (line >> arg) {
                if (arg == "target") o.target = read_vec3(line, line_no);
                else if (arg == "radius") o.radius = read_number(line, line_no);
                else if (arg == "start") o.start = read_number(line, line_no);
                else if (arg == "span") o.span = read_number(line, line_no);
                else if (arg == "height") o.height = read_number(line, line_no);
                else throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": unknown orbit key " + arg);
            }
            orbit = o;
        } else if (key == "pose") {
            is_object = false;
            PoseSE3 p;
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) p.rotation(r, c) = read_number(line, line_no);
            }
            p.translation = read_vec3(line, line_no);
            explicit_poses.push_back(p);
        } else {
            throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
        if (is_object) {
            std::string extra;
            if (line >> extra) {
                if (extra != "velocity") {
                    throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": unexpected '" + extra + "'");
                }
                obj.velocity = read_vec3(line, line_no);
                if (line >> extra) {
                    throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": unexpected '" + extra + "'");
                }
            }
            spec.objects.push_back(obj);
        } else if (std::string extra; line >> extra) {
            throw Error(ErrorCode::InvalidInput, "scene line " + std::to_string(line_no) + ": unexpected '" + extra + "'");
        }
    }
    if (orbit && !explicit_poses.empty()) {
        throw Error(ErrorCode::InvalidInput, "scene mixes 'orbit' with explicit 'pose' lines");
    }
    if (orbit) {
        spec.camera_path = orbit_path(spec.frames, orbit->target, orbit->radius, orbit->start, orbit->span, orbit->height);
    } else if (!explicit_poses.empty()) {
        spec.camera_path = std::move(explicit_poses);
    } else {
        spec.camera_path.assign(std::max(spec.frames, 0), PoseSE3::identity());
    }
    spec.validate();
    return spec;
}

SceneSpec parse_scene_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open scene file " + path);
    return parse_scene(in);
}

std::optional<Hit> cast_ray(const SceneSpec& spec, int frame, const Vec2& pixel) {
    const PoseSE3& pose = spec.camera_path.at(frame);
    const double f = spec.intrinsics.focal;
    const Vec3 dir_cam((pixel.x() - 0.5 * spec.grid.width) / f, (pixel.y() - 0.5 * spec.grid.height) / f, 1.0);
    const Ray ray{pose.center(), pose.rotation.transpose() * dir_cam};

    std::optional<Hit> best;
    for (std::size_t k = 0; k < spec.objects.size(); ++k) {
        const SceneObject& obj = spec.objects[k];
        const Shape shape = obj.dynamic() ? moved(obj.shape, obj.velocity * frame) : obj.shape;
        const auto lambda = std::visit([&](const auto& s) { return intersect(s, ray); }, shape);
        if (lambda && (!best || *lambda < best->depth)) {
            best = Hit{*lambda, static_cast<int>(k), ray.origin + *lambda * ray.dir, 0};
            if (const auto* box = std::get_if<Box>(&shape)) best->face = box_face(*box, best->world);
        }
    }
    return best;
}

RenderResult render(const SceneSpec& spec) {
    spec.validate();
    RenderResult out;
    const FrameGrid& g = spec.grid;
    out.points = PointMap(spec.frames, g, Vec3::Zero());
    out.mask = ValidMask(spec.frames, g, 0.0);
    out.depth = DepthMap(spec.frames, g, 0.0);
    out.object_id = Field<int, PrimitiveTag>(spec.frames, g, -1);
    out.dynamic_mask = ValidMask(spec.frames, g, 0.0);
    out.intrinsics.assign(spec.frames, spec.intrinsics);
    out.poses = spec.camera_path;
    if (spec.objects.empty()) out.warnings.push_back("scene has no objects; every pixel is invalid");

    const double f = spec.intrinsics.focal;
    for (int t = 0; t < spec.frames; ++t) {
        for (int v = 0; v < g.height; ++v) {
            for (int u = 0; u < g.width; ++u) {
                const auto hit = cast_ray(spec, t, Vec2(u, v));
                if (!hit) continue;
                const double z = hit->depth;
                // Exact camera-space point from the ray parameter.
                out.points(t, v, u) = Vec3((u - 0.5 * g.width) * z / f, (v - 0.5 * g.height) * z / f, z);
                out.depth(t, v, u) = z;
                out.mask(t, v, u) = 1.0;
                out.object_id(t, v, u) = hit->object;
                if (spec.objects[hit->object].dynamic()) out.dynamic_mask(t, v, u) = 1.0;
            }
        }
    }
    return out;
}

namespace {

/// The stencil of a bilinear lookup at `pixel` hits one face of one object everywhere.
bool stencil_on_surface(const SceneSpec& spec, int frame, const Vec2& pixel, int object, int face) {
    const int u0 = std::min(static_cast<int>(std::floor(pixel.x())), spec.grid.width - 2);
    const int v0 = std::min(static_cast<int>(std::floor(pixel.y())), spec.grid.height - 2);
    for (int dv = 0; dv <= 1; ++dv) {
        for (int du = 0; du <= 1; ++du) {
            const auto hit = cast_ray(spec, frame, Vec2(u0 + du, v0 + dv));
            if (!hit || hit->object != object || hit->face != face) return false;
        }
    }
    return true;
}

bool inside_sampling_range(const Vec2& p, const FrameGrid& g) {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= g.width - 1 && p.y() <= g.height - 1;
}

}  // namespace

TrackSet make_tracks(const SceneSpec& spec, int count, std::uint64_t seed, double noise_sigma) {
    spec.validate();
    if (spec.grid.width < 2 || spec.grid.height < 2) throw Error(ErrorCode::InvalidConfig, "tracks need a grid of at least 2x2");
    TrackSet out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ucoord(0.0, spec.grid.width - 1.0);
    std::uniform_real_distribution<double> vcoord(0.0, spec.grid.height - 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    const int max_attempts = 200 * std::max(count, 1);
    for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.tracks.size()) < count; ++attempt) {
        const Vec2 seed_px(ucoord(rng), vcoord(rng));
        const auto first = cast_ray(spec, 0, seed_px);
        if (!first || spec.objects[first->object].dynamic()) continue;
        if (!stencil_on_surface(spec, 0, seed_px, first->object, first->face)) continue;
        const Vec3 world = first->world;
        const double tol = 1e-9 * std::max(1.0, world.norm());

        Trajectory2D track;
        track.id = static_cast<int>(out.tracks.size());
        for (int t = 0; t < spec.frames; ++t) {
            TrackObservation obs{t, 0.0, 0.0, false};
            const Vec3 cam = spec.camera_path[t].apply(world);
            if (cam.z() > 0.0) {
                const Vec2 px = project(cam, spec.intrinsics, spec.grid).pixel;
                obs.u = px.x();
                obs.v = px.y();
                if (inside_sampling_range(px, spec.grid)) {
                    const auto hit = cast_ray(spec, t, px);
                    obs.visible = hit && hit->object == first->object && (hit->world - world).norm() <= tol &&
                                  stencil_on_surface(spec, t, px, first->object, first->face);
                }
            }
            track.observations.push_back(obs);
        }
        out.tracks.push_back(std::move(track));
        out.world_points.push_back(world);
    }
    if (static_cast<int>(out.tracks.size()) < count) {
        out.warnings.push_back("only " + std::to_string(out.tracks.size()) + " of " + std::to_string(count) +
                               " tracks could be placed on static surfaces");
    }
    // Noise is drawn after placement so the noiseless and noisy track sets share points.
    if (noise_sigma > 0.0) {
        for (auto& track : out.tracks) {
            for (auto& obs : track.observations) {
                if (!obs.visible) continue;
                obs.u += noise_sigma * noise(rng);
                obs.v += noise_sigma * noise(rng);
                if (!inside_sampling_range(Vec2(obs.u, obs.v), spec.grid)) obs.visible = false;
            }
        }
    }
    return out;
}

}  // namespace vpmap::synth
