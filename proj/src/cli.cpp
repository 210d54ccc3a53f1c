// Copyright 2026 The vpmap Authors
// SPDX-License-Identifier: Apache-2.0

#include "vpmap/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "vpmap/camsolve.hpp"
#include "vpmap/io.hpp"
#include "vpmap/latent.hpp"
#include "vpmap/loss.hpp"
#include "vpmap/metrics.hpp"
#include "vpmap/repr.hpp"
#include "vpmap/synth.hpp"

#ifndef VPMAP_VERSION
#define VPMAP_VERSION "unknown"
#endif

namespace vpmap::cli {

namespace {

using Json = nlohmann::ordered_json;

/// Common report skeleton; sections are filled in by each command.
class Report {
public:
    explicit Report(std::string command) {
        doc_["schema_version"] = kReportSchemaVersion;
        doc_["tool"] = "vpmap";
        doc_["tool_version"] = VPMAP_VERSION;
        doc_["command"] = std::move(command);
        doc_["inputs"] = Json::object();
        doc_["config"] = Json::object();
        doc_["results"] = Json::object();
        doc_["warnings"] = Json::array();
    }

    void input(const std::string& role, const std::string& path, std::span<const std::uint8_t> bytes) {
        doc_["inputs"][role] = {{"path", path}, {"sha256", io::sha256_hex(bytes)}, {"bytes", bytes.size()}};
    }
    Json& config() { return doc_["config"]; }
    Json& results() { return doc_["results"]; }
    void warn(const std::string& w) { doc_["warnings"].push_back(w); }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
        out << doc_.dump(2) << '\n';
        if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
    }

private:
    Json doc_;
};

/// A container loaded once, with its digest available for the report.
struct Loaded {
    std::vector<std::uint8_t> bytes;
    io::Container container;
};

Loaded load(const std::string& path) {
    Loaded l;
    l.bytes = io::read_bytes(path);
    l.container = io::parse(l.bytes);
    return l;
}

/// Point map from "points", else decoded from "log_depth" + "theta_diag", else from "cuboid".
PointMap points_of(const io::Container& c) {
    if (c.find("points")) return io::get_points(c, "points");
    if (c.find("log_depth") && c.find("theta_diag")) {
        DecoupledMap dec;
        dec.log_depth = io::get_scalar_field<LogDepthTag>(c, "log_depth");
        dec.theta_diag = io::get_vector(c, "theta_diag");
        if (dec.theta_diag.size() != static_cast<std::size_t>(dec.log_depth.frames())) {
            throw Error(ErrorCode::ShapeError, "theta_diag length differs from the frame count");
        }
        return decode_decoupled(dec);
    }
    if (c.find("cuboid")) {
        const PointMap raw = io::get_points(c, "cuboid");
        return decode_cuboid(raw.retag<CuboidTag>());
    }
    throw Error(ErrorCode::InvalidInput, "container holds no point map (points, log_depth + theta_diag, or cuboid)");
}

ValidMask mask_of(const io::Container& c, int frames, const FrameGrid& grid, Report* report, const std::string& role) {
    if (c.find("mask")) {
        ValidMask m = io::get_scalar_field<MaskTag>(c, "mask");
        if (m.frames() != frames || !(m.grid() == grid)) throw Error(ErrorCode::ShapeError, role + " mask shape differs");
        return m;
    }
    if (report) report->warn(role + " has no mask tensor; every pixel treated as valid");
    return ValidMask(frames, grid, 1.0);
}

DepthMap depth_from(const io::Container& c, Report& report, const std::string& role) {
    if (c.find("depth")) return io::get_scalar_field<DepthTag>(c, "depth");
    report.warn(role + " has no depth tensor; using the z channel of its point map");
    return depth_of(points_of(c));
}

void erase(io::Container& c, std::initializer_list<std::string_view> names) {
    std::erase_if(c.tensors, [&](const io::Tensor& t) {
        return std::find(names.begin(), names.end(), t.name) != names.end();
    });
}

Json loss_json(const LossReport& r) {
    return {{"recon", r.recon},           {"normal", r.normal}, {"multiscale", r.multiscale},
            {"identity", r.identity},     {"mask", r.mask},     {"pmap", r.pmap},
            {"total", r.total}};
}

Json weights_json(const LossWeights& w) {
    return {{"lambda_n", w.lambda_n}, {"lambda_mask", w.lambda_mask}, {"ms_scales", w.ms_scales}};
}

/// Unit quaternion (w, x, y, z) with w >= 0.
Eigen::Vector4d quaternion_of(const Mat3& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return {q.w(), q.x(), q.y(), q.z()};
}

Json pose_json(int frame, const PoseSE3& p) {
    const Eigen::Vector4d q = quaternion_of(p.rotation);
    return {{"frame", frame},
            {"quaternion_wxyz", {q[0], q[1], q[2], q[3]}},
            {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

void write_pose_csv(const std::string& path, const std::vector<PoseSE3>& poses) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << "frame,qw,qx,qy,qz,tx,ty,tz\n" << std::setprecision(17);
    for (std::size_t t = 0; t < poses.size(); ++t) {
        const Eigen::Vector4d q = quaternion_of(poses[t].rotation);
        const Vec3& tr = poses[t].translation;
        out << t << ',' << q[0] << ',' << q[1] << ',' << q[2] << ',' << q[3] << ',' << tr.x() << ',' << tr.y() << ','
            << tr.z() << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string scene, out, tracks;
    double track_noise = 0.0;
    int track_count = 50;
    std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& err) {
    const synth::SceneSpec spec = synth::parse_scene_file(a.scene);
    const synth::RenderResult r = synth::render(spec);
    io::Container c;
    io::put_points(c, "points", r.points);
    io::put_scalar_field(c, "mask", r.mask);
    io::put_scalar_field(c, "depth", r.depth);
    io::put_scalar_field(c, "disparity", disparity_from_depth(r.depth, r.mask));
    std::vector<double> theta;
    for (const auto& k : r.intrinsics) theta.push_back(theta_from_focal(k.focal, spec.grid));
    io::put_vector(c, "theta_diag", theta);
    io::put_poses(c, r.poses);
    io::put_intrinsics(c, r.intrinsics);
    io::put_scalar_field(c, "dynamic_mask", r.dynamic_mask);
    io::put_gray_rgb(c, spec.frames, spec.grid);
    io::write_container(a.out, c);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';

    if (!a.tracks.empty()) {
        const synth::TrackSet ts = synth::make_tracks(spec, a.track_count, a.seed.value_or(spec.seed), a.track_noise);
        io::write_tracks_csv(a.tracks, ts.tracks);
        for (const auto& w : ts.warnings) err << "warning: " << w << '\n';
    }
    return kExitOk;
}

struct ConvertArgs {
    std::string in, to, out;
};

int cmd_convert(const ConvertArgs& a) {
    io::Container c = io::read_container(a.in);
    if (a.to == "points") {
        const PointMap p = points_of(c);
        erase(c, {"log_depth", "cuboid"});
        io::put_points(c, "points", p);
    } else {
        const PointMap p = points_of(c);
        const ValidMask mask = mask_of(c, p.frames(), p.grid(), nullptr, "input");
        if (a.to == "decoupled") {
            const DecoupledEncoding enc = encode_decoupled(p, mask);
            erase(c, {"points", "cuboid"});
            io::put_scalar_field(c, "log_depth", enc.map.log_depth);
            io::put_vector(c, "theta_diag", enc.map.theta_diag);
        } else if (a.to == "cuboid") {
            const CuboidMap cub = encode_cuboid(p, mask);
            erase(c, {"points", "log_depth"});
            io::put_points(c, "cuboid", cub.retag<PointTag>());
        } else {
            const DisparityMap disp = disparity_from_depth(depth_of(p), mask);
            io::put_scalar_field(c, "disparity", disp);
            io::put_scalar_field(c, "disparity_norm", normalize_disparity(disp, mask).values);
        }
    }
    io::write_container(a.out, c);
    return kExitOk;
}

struct EvalArgs {
    std::string pred, gt, align, space = "depth", report;
    std::optional<double> threshold;
};

int cmd_eval_points(const EvalArgs& a) {
    Report report("eval-points");
    const Loaded pred = load(a.pred);
    const Loaded gt = load(a.gt);
    report.input("pred", a.pred, pred.bytes);
    report.input("gt", a.gt, gt.bytes);
    const PointMap p = points_of(pred.container);
    const PointMap g = points_of(gt.container);
    if (!p.same_shape(g)) throw Error(ErrorCode::ShapeError, "pred and gt point maps differ in shape");
    const ValidMask mask = mask_of(gt.container, g.frames(), g.grid(), &report, "gt");

    double scale = 1.0;
    if (a.align != "none") {
        const AlignMethod m = a.align == "scale-median" ? AlignMethod::MedianRatio : AlignMethod::LeastSquares;
        scale = align_scale_points(p, g, mask, m).scale;
    }
    const double threshold = a.threshold.value_or(kPointInlierThreshold);
    const PointMetrics pm = eval_points(p, g, mask, scale, threshold);

    report.config() = {{"align", a.align},
                       {"scale_shared_across_clip", true},
                       {"inlier_threshold", threshold},
                       {"mask_source", "gt"},
                       {"mask_binarize_at", kMaskThreshold}};
    report.results() = {{"rel_p", pm.rel},
                        {"delta_p", pm.delta},
                        {"scale", scale},
                        {"evaluated_pixels", pm.evaluated},
                        {"excluded_pixels", pm.excluded}};
    report.write(a.report);
    return kExitOk;
}

int cmd_eval_depth(const EvalArgs& a) {
    Report report("eval-depth");
    const Loaded pred = load(a.pred);
    const Loaded gt = load(a.gt);
    report.input("pred", a.pred, pred.bytes);
    report.input("gt", a.gt, gt.bytes);
    const DepthMap p = depth_from(pred.container, report, "pred");
    const DepthMap g = depth_from(gt.container, report, "gt");
    if (!p.same_shape(g)) throw Error(ErrorCode::ShapeError, "pred and gt depth maps differ in shape");
    const ValidMask mask = mask_of(gt.container, g.frames(), g.grid(), &report, "gt");

    const DepthAlignSpace space = a.space == "disparity" ? DepthAlignSpace::Disparity : DepthAlignSpace::Depth;
    AlignmentResult al;
    DepthMap aligned = p;
    if (a.align != "none") {
        al = align_scale_shift_depth(p, g, mask, space);
        aligned = apply_depth_alignment(p, al, space);
    }
    const double threshold = a.threshold.value_or(kDepthInlierThreshold);
    const DepthMetrics dm = eval_depth(aligned, g, mask, threshold);

    report.config() = {{"align", a.align},
                       {"align_space", a.align == "none" ? "none" : std::string(to_string(space))},
                       {"scale_shift_shared_across_clip", true},
                       {"inlier_threshold", threshold},
                       {"inlier_comparison", "max(pred/gt, gt/pred) < threshold"},
                       {"mask_source", "gt"},
                       {"mask_binarize_at", kMaskThreshold}};
    report.results() = {{"rel_d", dm.rel},
                        {"delta_d", dm.delta},
                        {"scale", al.scale},
                        {"shift", al.shift},
                        {"evaluated_pixels", dm.evaluated},
                        {"excluded_pixels", dm.excluded}};
    report.write(a.report);
    return kExitOk;
}

struct SolveArgs {
    std::string pmap, tracks, dyn_mask, gt, out, csv;
    PoseSolveConfig config;
    std::optional<double> depth_weight;
};

int cmd_solve_pose(SolveArgs a) {
    Report report("solve-pose");
    const Loaded pm = load(a.pmap);
    report.input("pmap", a.pmap, pm.bytes);
    const std::vector<std::uint8_t> track_bytes = io::read_bytes(a.tracks);
    report.input("tracks", a.tracks, track_bytes);
    std::istringstream track_stream(std::string(track_bytes.begin(), track_bytes.end()));
    const std::vector<Trajectory2D> tracks = io::read_tracks_csv(track_stream);

    const PointMap points = points_of(pm.container);
    const ValidMask mask = mask_of(pm.container, points.frames(), points.grid(), &report, "pmap");
    std::vector<Intrinsics> intrinsics;
    if (pm.container.find("intrinsics")) {
        intrinsics = io::get_intrinsics(pm.container);
    } else if (pm.container.find("theta_diag")) {
        for (const double th : io::get_vector(pm.container, "theta_diag")) {
            intrinsics.push_back({focal_from_theta(th, points.grid())});
        }
    } else {
        report.warn("no intrinsics or theta_diag tensor; focal recovered from the point map");
        for (int t = 0; t < points.frames(); ++t) intrinsics.push_back({recover_focal(points, mask, t)});
    }

    std::optional<ValidMask> dyn;
    if (!a.dyn_mask.empty()) {
        const Loaded d = load(a.dyn_mask);
        report.input("dyn_mask", a.dyn_mask, d.bytes);
        const char* name = d.container.find("dynamic_mask") ? "dynamic_mask" : "mask";
        dyn = io::get_scalar_field<MaskTag>(d.container, name);
    }

    a.config.pixel_depth_weight = a.depth_weight;
    const PoseSolveResult r = solve_poses(points, mask, intrinsics, tracks, dyn ? &*dyn : nullptr, a.config);

    report.config() = {{"window_len", a.config.window_len},
                       {"overlap", a.config.overlap},
                       {"max_iters", a.config.max_iters},
                       {"convergence_tol", a.config.convergence_tol},
                       {"pixel_depth_weight", r.depth_weight},
                       {"pixel_depth_weight_source", a.depth_weight ? "flag" : "median focal / median depth"},
                       {"depth_sampling", "bilinear in inverse depth"},
                       {"gauge", "frame 0 fixed to identity"},
                       {"dynamic_mask", !a.dyn_mask.empty()}};
    Json windows = Json::array();
    for (const auto& w : r.windows) {
        windows.push_back({{"first", w.window.first}, {"last", w.window.last}, {"pairs", w.pairs}, {"tracks", w.tracks}, {"rms", w.rms}});
    }
    Json poses = Json::array();
    for (std::size_t t = 0; t < r.poses.size(); ++t) poses.push_back(pose_json(static_cast<int>(t), r.poses[t]));
    report.results() = {{"initial_objective", r.initial_objective},
                        {"final_objective", r.final_objective},
                        {"iterations", r.iterations},
                        {"converged", r.converged},
                        {"pairs", r.pairs},
                        {"dropped_pairs", r.dropped_pairs},
                        {"discarded_tracks", r.discarded_tracks},
                        {"windows", windows},
                        {"poses", poses}};
    if (!a.gt.empty()) {
        const Loaded g = load(a.gt);
        report.input("gt", a.gt, g.bytes);
        const TrajectoryError e = compare_trajectories(r.poses, io::get_poses(g.container));
        const PointMap gp = points_of(g.container);
        const ValidMask gm = mask_of(g.container, gp.frames(), gp.grid(), &report, "gt");
        const double scene_scale = DepthSampler(gp, gm).median_depth();
        report.results()["ground_truth"] = {{"max_rotation_deg", e.max_rotation_deg},
                                            {"max_translation", e.max_translation},
                                            {"scene_scale", scene_scale},
                                            {"max_translation_rel", e.max_translation / scene_scale}};
    }
    if (r.discarded_tracks > 0) report.warn(std::to_string(r.discarded_tracks) + " tracks discarded by the dynamic mask");
    if (r.dropped_pairs > 0) report.warn(std::to_string(r.dropped_pairs) + " pairs dropped at invalid depth lookups");
    report.results()["diverged"] = r.diverged;
    report.write(a.out);
    if (!a.csv.empty()) write_pose_csv(a.csv, r.poses);
    return r.diverged ? kExitNumerical : kExitOk;
}

struct LossCheckArgs {
    std::uint64_t seed = 0;
    int instances = 20;
    int size = 8;
    std::string report;
};

int cmd_loss_check(const LossCheckArgs& a) {
    Report report("loss-check");
    const GradCheckOptions opt;
    const auto suite = run_gradient_suite(a.seed, a.instances, a.size, opt);
    report.config() = {{"seed", a.seed},
                       {"instances", a.instances},
                       {"size", a.size},
                       {"fd_step", opt.step},
                       {"tolerance", opt.tolerance},
                       {"rel_error_floor", opt.floor},
                       {"rel_error_relative_floor", opt.relative_floor},
                       {"difference", "central"}};
    Json entries = Json::array();
    bool ok = true;
    for (const auto& e : suite) {
        entries.push_back({{"loss", e.loss},
                           {"instances", e.instances},
                           {"failures", e.failures},
                           {"worst_rel_error", e.worst_rel_error},
                           {"worst_analytic", e.worst.analytic_at_worst},
                           {"worst_numeric", e.worst.numeric_at_worst}});
        ok = ok && e.failures == 0;
    }
    report.results() = {{"passed", ok}, {"losses", entries}};
    report.write(a.report);
    return ok ? kExitOk : kExitNumerical;
}

struct LatentArgs {
    std::uint64_t seed = 0;
    int steps = 500;
    std::optional<double> learning_rate;
    std::string report;
};

int cmd_latent_demo(const LatentArgs& a) {
    Report report("latent-demo");
    latent::ToyDemoConfig cfg;
    cfg.fit.steps = a.steps;
    if (a.learning_rate) cfg.fit.learning_rate = *a.learning_rate;
    const latent::ToyDemoResult r = latent::run_toy_demo(a.seed, cfg);
    report.config() = {{"seed", a.seed},
                       {"steps", a.steps},
                       {"grid", {cfg.grid.width, cfg.grid.height}},
                       {"clips", cfg.clips},
                       {"frames", cfg.frames},
                       {"latent_dim", cfg.latent_dim},
                       {"offset_scale", latent::CodecBundle::kDefaultOffsetScale},
                       {"learning_rate", cfg.fit.learning_rate},
                       {"final_lr_fraction", cfg.fit.final_lr_fraction},
                       {"weights", weights_json(cfg.fit.weights)},
                       {"base_codec_frozen", true}};
    Json curve = Json::array();
    for (const auto& c : r.fit.curve) curve.push_back(loss_json(c));
    const LossReport& first = r.fit.curve.front();
    const LossReport& last = r.fit.curve.back();
    report.results() = {{"initial", loss_json(first)},
                        {"final", loss_json(last)},
                        {"pmap_ratio", last.pmap / first.pmap},
                        {"identity_ratio", last.identity / r.zero_offset_identity},
                        {"curve", curve}};
    report.write(a.report);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Video point map toolkit", "vpmap"};
    app.set_version_flag("--version", VPMAP_VERSION);
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Render a scene description to a container");
    synth->add_option("--scene", synth_args.scene, "Scene file")->required();
    synth->add_option("--out", synth_args.out, "Output container")->required();
    synth->add_option("--tracks", synth_args.tracks, "Also write a tracks CSV");
    synth->add_option("--track-noise", synth_args.track_noise, "Pixel noise sigma of the tracks")->check(CLI::NonNegativeNumber);
    synth->add_option("--track-count", synth_args.track_count, "Number of tracks")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_args.seed, "Track seed (defaults to the scene seed)");

    ConvertArgs convert_args;
    auto* convert = app.add_subcommand("convert", "Convert between point map representations");
    convert->add_option("--in", convert_args.in)->required();
    convert->add_option("--to", convert_args.to)->required()->check(CLI::IsMember({"decoupled", "cuboid", "disparity", "points"}));
    convert->add_option("--out", convert_args.out)->required();

    EvalArgs points_args;
    points_args.align = "scale";
    auto* eval_p = app.add_subcommand("eval-points", "Point map metrics with a clip-wide scale");
    eval_p->add_option("--pred", points_args.pred)->required();
    eval_p->add_option("--gt", points_args.gt)->required();
    eval_p->add_option("--align", points_args.align)->check(CLI::IsMember({"scale", "scale-median", "none"}));
    eval_p->add_option("--threshold", points_args.threshold, "Inlier threshold on relative error");
    eval_p->add_option("--report", points_args.report)->required();

    EvalArgs depth_args;
    depth_args.align = "scale-shift";
    auto* eval_d = app.add_subcommand("eval-depth", "Depth metrics with a clip-wide scale and shift");
    eval_d->add_option("--pred", depth_args.pred)->required();
    eval_d->add_option("--gt", depth_args.gt)->required();
    eval_d->add_option("--align", depth_args.align)->check(CLI::IsMember({"scale-shift", "none"}));
    eval_d->add_option("--space", depth_args.space, "Alignment space")->check(CLI::IsMember({"depth", "disparity"}));
    eval_d->add_option("--threshold", depth_args.threshold, "Inlier ratio threshold");
    eval_d->add_option("--report", depth_args.report)->required();

    SolveArgs solve_args;
    auto* solve = app.add_subcommand("solve-pose", "Recover camera poses from a point map and 2D tracks");
    solve->add_option("--pmap", solve_args.pmap)->required();
    solve->add_option("--tracks", solve_args.tracks)->required();
    solve->add_option("--dyn-mask", solve_args.dyn_mask, "Container with a dynamic_mask (or mask) tensor");
    solve->add_option("--gt", solve_args.gt, "Container with ground-truth poses to compare against");
    solve->add_option("--window", solve_args.config.window_len);
    solve->add_option("--overlap", solve_args.config.overlap);
    solve->add_option("--max-iters", solve_args.config.max_iters);
    solve->add_option("--depth-weight", solve_args.depth_weight, "Weight of the depth residual");
    solve->add_option("--out", solve_args.out)->required();
    solve->add_option("--csv", solve_args.csv, "Also write poses as frame,qw,qx,qy,qz,tx,ty,tz");

    LossCheckArgs loss_args;
    auto* loss = app.add_subcommand("loss-check", "Finite-difference check of every loss gradient");
    loss->add_option("--seed", loss_args.seed);
    loss->add_option("--instances", loss_args.instances)->check(CLI::PositiveNumber);
    loss->add_option("--size", loss_args.size)->check(CLI::Range(4, 64));
    loss->add_option("--report", loss_args.report)->required();

    LatentArgs latent_args;
    auto* demo = app.add_subcommand("latent-demo", "Fit the toy dual-encoder codec");
    demo->add_option("--seed", latent_args.seed);
    demo->add_option("--steps", latent_args.steps)->check(CLI::NonNegativeNumber);
    demo->add_option("--lr", latent_args.learning_rate)->check(CLI::PositiveNumber);
    demo->add_option("--report", latent_args.report)->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitInput;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_args, err);
        if (convert->parsed()) return cmd_convert(convert_args);
        if (eval_p->parsed()) return cmd_eval_points(points_args);
        if (eval_d->parsed()) return cmd_eval_depth(depth_args);
        if (solve->parsed()) return cmd_solve_pose(solve_args);
        if (loss->parsed()) return cmd_loss_check(loss_args);
        if (demo->parsed()) return cmd_latent_demo(latent_args);
    } catch (const Error& e) {
        err << "error: " << e.what();
        if (e.offset()) err << " (at byte " << *e.offset() << ')';
        err << '\n';
        return is_numerical(e.code()) ? kExitNumerical : kExitInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitInput;
}

}  // namespace vpmap::cli
