// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

// Python bindings. Arrays cross the boundary as float64 numpy arrays shaped
// (T, H, W) for scalar fields and (T, H, W, 3) for point maps; every call copies.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "vpmap/camsolve.hpp"
#include "vpmap/io.hpp"
#include "vpmap/latent.hpp"
#include "vpmap/loss.hpp"
#include "vpmap/metrics.hpp"
#include "vpmap/repr.hpp"
#include "vpmap/synth.hpp"

namespace py = pybind11;

namespace {

using namespace vpmap;

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <class Tag>
Field<double, Tag> to_scalar_field(const Array& a, const char* what) {
    if (a.ndim() != 3) throw Error(ErrorCode::ShapeError, std::string(what) + " must have shape (T, H, W)");
    Field<double, Tag> f(static_cast<int>(a.shape(0)),
                         {static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1))});
    std::copy(a.data(), a.data() + a.size(), f.values().begin());
    return f;
}

PointMap to_points(const Array& a, const char* what = "points") {
    if (a.ndim() != 4 || a.shape(3) != 3) throw Error(ErrorCode::ShapeError, std::string(what) + " must have shape (T, H, W, 3)");
    PointMap p(static_cast<int>(a.shape(0)), {static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1))});
    const double* src = a.data();
    for (auto& v : p.values()) {
        v = Vec3(src[0], src[1], src[2]);
        src += 3;
    }
    return p;
}

template <class Tag>
Array from_scalar_field(const Field<double, Tag>& f) {
    Array out({f.frames(), f.height(), f.width()});
    std::copy(f.values().begin(), f.values().end(), out.mutable_data());
    return out;
}

template <class Tag>
Array from_points(const Field<Vec3, Tag>& p) {
    Array out({p.frames(), p.height(), p.width(), 3});
    double* dst = out.mutable_data();
    for (const auto& v : p.values()) {
        dst[0] = v.x();
        dst[1] = v.y();
        dst[2] = v.z();
        dst += 3;
    }
    return out;
}

ValidMask to_mask(const Array& a) { return to_scalar_field<MaskTag>(a, "mask"); }

Array pose_matrix(const PoseSE3& p) {
    Array out({3, 4});
    auto m = out.mutable_unchecked<2>();
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) m(r, c) = p.rotation(r, c);
        m(r, 3) = p.translation[r];
    }
    return out;
}

std::vector<Array> pose_list(const std::vector<PoseSE3>& poses) {
    std::vector<Array> out;
    for (const auto& p : poses) out.push_back(pose_matrix(p));
    return out;
}

PoseSE3 to_pose(const Array& a) {
    if (a.ndim() != 2 || a.shape(0) != 3 || a.shape(1) != 4) throw Error(ErrorCode::ShapeError, "pose must be 3x4");
    const auto m = a.unchecked<2>();
    PoseSE3 p;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) p.rotation(r, c) = m(r, c);
        p.translation[r] = m(r, 3);
    }
    return p;
}

// Rows of (track_id, frame, u, v, visible), the layout of the tracks CSV.
std::vector<Trajectory2D> to_tracks(const Array& rows) {
    if (rows.ndim() != 2 || rows.shape(1) != 5) throw Error(ErrorCode::ShapeError, "tracks must have shape (N, 5)");
    std::vector<std::vector<double>> table;
    const auto r = rows.unchecked<2>();
    for (py::ssize_t i = 0; i < rows.shape(0); ++i) table.push_back({r(i, 0), r(i, 1), r(i, 2), r(i, 3), r(i, 4)});
    std::stable_sort(table.begin(), table.end(), [](const auto& a, const auto& b) {
        return a[0] != b[0] ? a[0] < b[0] : a[1] < b[1];
    });
    std::vector<Trajectory2D> tracks;
    for (const auto& row : table) {
        const int id = static_cast<int>(row[0]);
        if (tracks.empty() || tracks.back().id != id) tracks.push_back({id, {}});
        tracks.back().observations.push_back({static_cast<int>(row[1]), row[2], row[3], row[4] != 0.0});
    }
    return tracks;
}

Array from_tracks(const std::vector<Trajectory2D>& tracks) {
    std::size_t n = 0;
    for (const auto& t : tracks) n += t.observations.size();
    Array out({static_cast<py::ssize_t>(n), py::ssize_t{5}});
    auto m = out.mutable_unchecked<2>();
    py::ssize_t i = 0;
    for (const auto& t : tracks) {
        for (const auto& o : t.observations) {
            m(i, 0) = t.id;
            m(i, 1) = o.frame;
            m(i, 2) = o.u;
            m(i, 3) = o.v;
            m(i, 4) = o.visible ? 1.0 : 0.0;
            ++i;
        }
    }
    return out;
}

py::dict loss_report(const LossReport& r) {
    py::dict d;
    d["recon"] = r.recon;
    d["normal"] = r.normal;
    d["multiscale"] = r.multiscale;
    d["identity"] = r.identity;
    d["mask"] = r.mask;
    d["pmap"] = r.pmap;
    d["total"] = r.total;
    return d;
}

py::dict render_dict(const synth::RenderResult& r) {
    py::dict d;
    d["points"] = from_points(r.points);
    d["mask"] = from_scalar_field(r.mask);
    d["depth"] = from_scalar_field(r.depth);
    d["dynamic_mask"] = from_scalar_field(r.dynamic_mask);
    std::vector<double> focal;
    for (const auto& k : r.intrinsics) focal.push_back(k.focal);
    d["focal"] = focal;
    d["poses"] = pose_list(r.poses);
    d["warnings"] = r.warnings;
    return d;
}

std::vector<Intrinsics> to_intrinsics(const std::vector<double>& focal) {
    std::vector<Intrinsics> k;
    for (const double f : focal) k.push_back({f});
    return k;
}

py::array tensor_to_array(const io::Tensor& t) {
    std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
    if (t.dtype == io::DType::U8) {
        py::array_t<std::uint8_t> out(shape);
        std::copy(t.data.begin(), t.data.end(), out.mutable_data());
        return out;
    }
    Array out(shape);
    const auto values = t.to_doubles();
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

io::Tensor array_to_tensor(const std::string& name, const py::array& a) {
    std::vector<std::uint64_t> dims(a.shape(), a.shape() + a.ndim());
    if (py::isinstance<py::array_t<std::uint8_t>>(a)) {
        const auto u8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(a);
        return io::Tensor::from_bytes(name, dims, std::vector<std::uint8_t>(u8.data(), u8.data() + u8.size()));
    }
    const Array f = Array::ensure(a);
    if (!f) throw Error(ErrorCode::TypeError, "tensor '" + name + "' is not numeric");
    return io::Tensor::from_doubles(name, dims, std::span<const double>(f.data(), static_cast<std::size_t>(f.size())));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Point map representations, losses, metrics and pose recovery.";
    m.attr("POINT_INLIER_THRESHOLD") = kPointInlierThreshold;
    m.attr("DEPTH_INLIER_THRESHOLD") = kDepthInlierThreshold;

    // The module attribute keeps the type alive for the translator.
    static PyObject* error_type = py::exception<Error>(m, "VpmapError").ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object err = py::reinterpret_borrow<py::object>(error_type)(e.what());
            err.attr("code") = std::string(to_string(e.code()));
            err.attr("offset") = e.offset() ? py::cast(*e.offset()) : py::none();
            PyErr_SetObject(error_type, err.ptr());
        }
    });

    // Representations
    m.def("theta_from_focal", [](double f, int w, int h) { return theta_from_focal(f, {w, h}); }, py::arg("focal"),
          py::arg("width"), py::arg("height"));
    m.def("focal_from_theta", [](double t, int w, int h) { return focal_from_theta(t, {w, h}); }, py::arg("theta_diag"),
          py::arg("width"), py::arg("height"));
    m.def(
        "encode_decoupled",
        [](const Array& points, const Array& mask) {
            const auto enc = encode_decoupled(to_points(points), to_mask(mask));
            std::vector<double> focal;
            for (const auto& k : enc.intrinsics) focal.push_back(k.focal);
            return py::make_tuple(from_scalar_field(enc.map.log_depth), enc.map.theta_diag, focal);
        },
        py::arg("points"), py::arg("mask"), "Returns (log_depth, theta_diag, focal).");
    m.def(
        "decode_decoupled",
        [](const Array& log_depth, const std::vector<double>& theta_diag) {
            DecoupledMap d;
            d.log_depth = to_scalar_field<LogDepthTag>(log_depth, "log_depth");
            d.theta_diag = theta_diag;
            return from_points(decode_decoupled(d));
        },
        py::arg("log_depth"), py::arg("theta_diag"));
    m.def(
        "encode_cuboid", [](const Array& p, const Array& mask) { return from_points(encode_cuboid(to_points(p), to_mask(mask))); },
        py::arg("points"), py::arg("mask"));
    m.def(
        "decode_cuboid",
        [](const Array& c) { return from_points(decode_cuboid(to_points(c, "cuboid").retag<CuboidTag>())); },
        py::arg("cuboid"));
    m.def(
        "normalize_disparity",
        [](const Array& depth, const Array& mask) {
            const ValidMask mk = to_mask(mask);
            const auto r = normalize_disparity(disparity_from_depth(to_scalar_field<DepthTag>(depth, "depth"), mk), mk);
            return py::make_tuple(from_scalar_field(r.values), r.degenerate_range);
        },
        py::arg("depth"), py::arg("mask"), "Returns (normalized disparity in [-1, 1], degenerate_range).");

    // Losses
    m.def(
        "loss_multiscale",
        [](const Array& pred, const Array& gt, const Array& mask, const std::vector<int>& scales) {
            return loss_multiscale(to_scalar_field<DepthTag>(pred, "pred"), to_scalar_field<DepthTag>(gt, "gt"),
                                   to_mask(mask), scales)
                .value;
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask"), py::arg("scales") = std::vector<int>{1, 2, 4, 8, 16});
    m.def(
        "sample_sigma",
        [](std::uint64_t seed, std::size_t count, double p_mean, double p_std) {
            const auto s = sample_sigma(NoiseSchedule{p_mean, p_std, 0.5}, seed, count);
            Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(s.size())});
            std::copy(s.begin(), s.end(), out.mutable_data());
            return out;
        },
        py::arg("seed"), py::arg("count"), py::arg("p_mean") = 0.7, py::arg("p_std") = 1.6);
    m.def(
        "run_gradient_suite",
        [](std::uint64_t seed, int instances, int size) {
            py::list out;
            for (const auto& e : run_gradient_suite(seed, instances, size)) {
                py::dict d;
                d["loss"] = e.loss;
                d["instances"] = e.instances;
                d["failures"] = e.failures;
                d["worst_rel_error"] = e.worst_rel_error;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 0, py::arg("instances") = 20, py::arg("size") = 8);

    // Metrics
    m.def(
        "align_scale_points",
        [](const Array& pred, const Array& gt, const Array& mask, bool median) {
            return align_scale_points(to_points(pred, "pred"), to_points(gt, "gt"), to_mask(mask),
                                      median ? AlignMethod::MedianRatio : AlignMethod::LeastSquares)
                .scale;
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask"), py::arg("median") = false);
    m.def(
        "eval_points",
        [](const Array& pred, const Array& gt, const Array& mask, double scale, double threshold) {
            const auto r = eval_points(to_points(pred, "pred"), to_points(gt, "gt"), to_mask(mask), scale, threshold);
            py::dict d;
            d["rel"] = r.rel;
            d["delta"] = r.delta;
            d["evaluated"] = r.evaluated;
            d["excluded"] = r.excluded;
            return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask"), py::arg("scale") = 1.0,
        py::arg("threshold") = kPointInlierThreshold);
    m.def(
        "align_scale_shift_depth",
        [](const Array& pred, const Array& gt, const Array& mask, bool disparity) {
            const auto a = align_scale_shift_depth(to_scalar_field<DepthTag>(pred, "pred"),
                                                   to_scalar_field<DepthTag>(gt, "gt"), to_mask(mask),
                                                   disparity ? DepthAlignSpace::Disparity : DepthAlignSpace::Depth);
            return py::make_tuple(a.scale, a.shift);
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask"), py::arg("disparity") = false);
    m.def(
        "eval_depth",
        [](const Array& pred, const Array& gt, const Array& mask, double threshold) {
            const auto r = eval_depth(to_scalar_field<DepthTag>(pred, "pred"), to_scalar_field<DepthTag>(gt, "gt"),
                                      to_mask(mask), threshold);
            py::dict d;
            d["rel"] = r.rel;
            d["delta"] = r.delta;
            d["evaluated"] = r.evaluated;
            d["excluded"] = r.excluded;
            return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask"), py::arg("threshold") = kDepthInlierThreshold);

    // Synthetic scenes and pose recovery
    m.def(
        "render_scene", [](const std::string& path) { return render_dict(synth::render(synth::parse_scene_file(path))); },
        py::arg("path"));
    m.def(
        "make_tracks",
        [](const std::string& path, int count, std::uint64_t seed, double noise) {
            return from_tracks(synth::make_tracks(synth::parse_scene_file(path), count, seed, noise).tracks);
        },
        py::arg("path"), py::arg("count") = 50, py::arg("seed") = 0, py::arg("noise") = 0.0,
        "Tracks as rows of (track_id, frame, u, v, visible).");
    m.def(
        "solve_poses",
        [](const Array& points, const Array& mask, const std::vector<double>& focal, const Array& tracks,
           int window_len, int overlap, int max_iters) {
            PoseSolveConfig config;
            config.window_len = window_len;
            config.overlap = overlap;
            config.max_iters = max_iters;
            const auto r =
                solve_poses(to_points(points), to_mask(mask), to_intrinsics(focal), to_tracks(tracks), nullptr, config);
            py::dict d;
            d["poses"] = pose_list(r.poses);
            d["initial_objective"] = r.initial_objective;
            d["final_objective"] = r.final_objective;
            d["iterations"] = r.iterations;
            d["converged"] = r.converged;
            d["diverged"] = r.diverged;
            return d;
        },
        py::arg("points"), py::arg("mask"), py::arg("focal"), py::arg("tracks"), py::arg("window_len") = 12,
        py::arg("overlap") = 6, py::arg("max_iters") = 100);
    m.def(
        "compare_trajectories",
        [](const std::vector<Array>& estimate, const std::vector<Array>& truth) {
            std::vector<PoseSE3> a, b;
            for (const auto& p : estimate) a.push_back(to_pose(p));
            for (const auto& p : truth) b.push_back(to_pose(p));
            const auto e = compare_trajectories(a, b);
            return py::make_tuple(e.max_rotation_deg, e.max_translation);
        },
        py::arg("estimate"), py::arg("truth"), "Returns (max rotation error in degrees, max translation error).");

    // Latent
    m.def(
        "run_toy_demo",
        [](std::uint64_t seed, int steps) {
            latent::ToyDemoConfig cfg;
            cfg.fit.steps = steps;
            const auto r = latent::run_toy_demo(seed, cfg);
            py::list curve;
            for (const auto& c : r.fit.curve) curve.append(loss_report(c));
            py::dict d;
            d["curve"] = curve;
            d["zero_offset_identity"] = r.zero_offset_identity;
            return d;
        },
        py::arg("seed") = 0, py::arg("steps") = 500);

    // Container files
    m.def(
        "read_container",
        [](const std::string& path) {
            py::dict d;
            for (const auto& t : io::read_container(path).tensors) d[py::str(t.name)] = tensor_to_array(t);
            return d;
        },
        py::arg("path"), "Tensors by name, in file order. u8 tensors stay uint8; others become float64.");
    m.def(
        "write_container",
        [](const std::string& path, const py::dict& tensors) {
            io::Container c;
            for (const auto& [name, value] : tensors) {
                c.put(array_to_tensor(py::cast<std::string>(name), py::array::ensure(value)));
            }
            io::write_container(path, c);
        },
        py::arg("path"), py::arg("tensors"));
}
