#include "lane3d/cli.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "lane3d/anchors.hpp"
#include "lane3d/calibration.hpp"
#include "lane3d/error.hpp"
#include "lane3d/fit.hpp"
#include "lane3d/io.hpp"
#include "lane3d/losses.hpp"
#include "lane3d/metrics.hpp"
#include "lane3d/plot.hpp"
#include "lane3d/scenes.hpp"

namespace lane3d::cli {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

class Report {
public:
    explicit Report(std::ostream& out) : out_(out) {}
    Report& kv(const std::string& key, double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.9g", v);
        out_ << key << '=' << buf << '\n';
        return *this;
    }
    Report& kv(const std::string& key, const std::string& v) {
        out_ << key << '=' << v << '\n';
        return *this;
    }
    Report& kv(const std::string& key, std::size_t v) {
        out_ << key << '=' << v << '\n';
        return *this;
    }
    Report& kv(const std::string& key, int v) {
        out_ << key << '=' << v << '\n';
        return *this;
    }

private:
    std::ostream& out_;
};

LossWeights parse_weights(const std::string& spec) {
    LossWeights w;
    if (spec.empty()) return w;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::InvalidInput, "weights take name=value pairs");
        const std::string name = item.substr(0, eq);
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(item.substr(eq + 1), &used);
            if (used != item.size() - eq - 1) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::InvalidInput, "bad weight value in '" + item + "'");
        }
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "weights must be nonnegative");
        if (name == "bev") w.bev = v;
        else if (name == "width") w.width = v;
        else if (name == "height") w.height = v;
        else if (name == "z") w.z = v;
        else if (name == "pitch") w.pitch = v;
        else throw Error(ErrorKind::InvalidInput, "unknown weight '" + name + "'");
    }
    return w;
}

std::vector<LaneBev> bev_lanes_of(const LaneFile& f) {
    if (!f.lanes_bev.empty()) return f.lanes_bev;
    std::vector<LaneBev> out;
    for (const auto& l : f.lanes3d) {
        std::vector<BevPoint> pts;
        std::vector<double> z;
        for (const auto& p : l.points()) {
            if (!(p.z < f.pose.height_m)) continue;
            const BevPoint b = project_3d_to_flat(p, f.pose.height_m);
            if (!pts.empty() && !(b.y > pts.back().y)) continue;
            pts.push_back(b);
            z.push_back(p.z);
        }
        if (pts.size() < 2) continue;
        std::vector<bool> vis(pts.size(), true);
        out.emplace_back(std::move(pts), std::move(vis), std::move(z));
    }
    return out;
}

AnchorTensor anchors_of(const LaneFile& f, double y_ref = 5.0) {
    if (f.anchors) return *f.anchors;
    AnchorGridSpec grid = AnchorGridSpec::make_default();
    grid.y_ref = y_ref;
    const auto bev = bev_lanes_of(f);
    if (bev.empty()) throw Error(ErrorKind::InvalidInput, "file has neither anchors nor lanes");
    return encode_gt(bev, grid);
}

LaneFile prediction_file(const LaneFile& src, const AnchorTensor& t) {
    LaneFile out;
    out.K = src.K;
    out.pose = src.pose;
    out.true_pitch_rad = src.true_pitch_rad;
    out.meta = src.meta;
    for (auto& d : decode_scored(t, src.pose, 0.5)) {
        out.lanes3d.push_back(std::move(d.lane));
        out.scores.push_back(d.prob);
    }
    out.anchors = t;
    return out;
}

int cmd_synth(const std::string& profile_name, std::uint64_t seed, double pitch_deg, double noise_px,
              std::optional<double> radius, std::optional<double> grade, int lanes,
              const std::string& output, Report& rep) {
    const auto profile = parse_profile(profile_name);
    if (!profile) throw Error(ErrorKind::InvalidInput, "unknown profile '" + profile_name + "'");
    SceneSpec spec = SceneSpec::defaults(*profile);
    spec.seed = seed;
    spec.pixel_noise_px = noise_px;
    spec.lane_count = lanes;
    if (radius) spec.bend_radius_m = *radius;
    if (grade) spec.grade_quad = *grade;
    SceneSample s = make_scene(spec);
    if (pitch_deg != 0.0) s = perturb_pitch(s, pitch_deg, pitch_deg, seed);

    LaneFile f;
    f.K = s.K;
    f.pose = spec.pose;
    f.true_pitch_rad = s.pose.pitch_rad;
    f.lanes3d = s.lanes3d;
    f.lanes_bev = s.lanes_bev;
    f.lanes_2d = s.lanes_2d;
    f.meta["profile"] = to_string(*profile);
    f.meta["seed"] = std::to_string(seed);
    write_lane_file(output, f);

    rep.kv("profile", std::string(to_string(*profile)))
        .kv("seed", std::to_string(seed))
        .kv("lines", s.lanes3d.size())
        .kv("true_pitch_deg", s.pose.pitch_rad * kRadToDeg)
        .kv("output", output);
    return kExitOk;
}

int cmd_calibrate(const std::string& input, double y_close, int iters, const std::string& output,
                  Report& rep) {
    LaneFile f = read_lane_file(input);
    if (f.lanes_2d.empty()) throw Error(ErrorKind::InvalidInput, "calibration needs image lanes");
    CalibConfig cfg;
    cfg.y_close = y_close;
    cfg.max_iters = iters;
    cfg.validate();
    const CalibResult r = calibrate_pitch(f.lanes_2d, f.K, f.pose.height_m, cfg);
    rep.kv("pitch_deg", r.pitch_rad * kRadToDeg)
        .kv("iterations", r.iterations)
        .kv("pairs", r.pairs.size())
        .kv("dispersion_deg", r.dispersion_rad * kRadToDeg)
        .kv("min_deg", r.min_rad * kRadToDeg)
        .kv("max_deg", r.max_rad * kRadToDeg);
    if (f.true_pitch_rad) {
        rep.kv("true_pitch_deg", *f.true_pitch_rad * kRadToDeg)
            .kv("abs_error_deg", std::abs(r.pitch_rad - *f.true_pitch_rad) * kRadToDeg);
    }
    if (!output.empty()) {
        f.pose.pitch_rad = r.pitch_rad;
        write_lane_file(output, f);
        rep.kv("output", output);
    }
    return kExitOk;
}

int cmd_encode(const std::string& input, double y_ref, const std::string& output, Report& rep,
               std::ostream& err) {
    LaneFile f = read_lane_file(input);
    AnchorGridSpec grid = AnchorGridSpec::make_default();
    grid.y_ref = y_ref;
    grid.validate();
    const auto bev = bev_lanes_of(f);
    Association assoc;
    AnchorTensor t = encode_gt(bev, grid, &assoc);
    std::size_t layer2 = 0;
    for (const auto& a : assoc.assigned) layer2 += a.layer == 2;
    for (const auto& w : assoc.warnings) err << "warning: " << w << '\n';
    f.anchors = std::move(t);
    write_lane_file(output, f);
    rep.kv("lanes", bev.size())
        .kv("assigned", assoc.assigned.size())
        .kv("layer2", layer2)
        .kv("dropped", assoc.dropped.size())
        .kv("output", output);
    return kExitOk;
}

int cmd_loss(const std::string& pred_path, const std::string& gt_path, const std::string& weights,
             Report& rep) {
    const LaneFile pf = read_lane_file(pred_path);
    const LossWeights w = parse_weights(weights);
    const AnchorTensor pred = anchors_of(pf);
    std::optional<LaneFile> gf;
    if (!gt_path.empty()) gf = read_lane_file(gt_path);
    const AnchorTensor gt = gf ? anchors_of(*gf) : pred;
    std::optional<PitchPair> pitch;
    if (gf) pitch = PitchPair{pf.pose.pitch_rad, gf->pose.pitch_rad};
    const LossBreakdown ws = total_ws(pred, gt, pf.pose, w, pitch);
    const LossBreakdown sup = total_sup(pred, gt, w, pitch);
    rep.kv("l_bev", ws.l_bev)
        .kv("l_width", ws.l_width)
        .kv("l_height", ws.l_height)
        .kv("l_z", sup.l_z)
        .kv("l_pitch", ws.l_pitch)
        .kv("total_ws", ws.total)
        .kv("total_sup", sup.total);
    return kExitOk;
}

int cmd_fit(const std::string& input, const std::string& mode, int iters, double lr,
            const std::string& weights, const std::string& penalty, const std::string& output,
            Report& rep) {
    const LaneFile f = read_lane_file(input);
    const AnchorTensor t = anchors_of(f);
    FitConfig cfg;
    cfg.steps = iters;
    cfg.learning_rate = lr;
    cfg.weights = parse_weights(weights);
    if (penalty == "smooth") cfg.penalty = Penalty{PenaltyKind::SmoothL1, 0.01};
    else if (penalty != "l1") throw Error(ErrorKind::InvalidInput, "penalty must be l1 or smooth");

    FitReport r;
    if (mode == "ws") r = fit_ws(t, f.pose, cfg, &t);
    else if (mode == "sup") r = fit_sup(t, cfg);
    else throw Error(ErrorKind::InvalidInput, "mode must be ws or sup");

    rep.kv("mode", mode)
        .kv("iterations", r.iterations)
        .kv("stages", r.stage_starts.size())
        .kv("l_width", r.final.l_width)
        .kv("l_height", r.final.l_height)
        .kv("l_z", r.final.l_z)
        .kv("total", r.final.total)
        .kv("z_points", r.z_points);
    if (r.z_rms_closed_form) rep.kv("z_rms_closed_form", *r.z_rms_closed_form);
    if (r.z_rms_truth) rep.kv("z_rms_truth", *r.z_rms_truth);
    if (!output.empty()) {
        write_lane_file(output, prediction_file(f, r.fitted));
        rep.kv("output", output);
    }
    return kExitOk;
}

int cmd_nms(const std::string& input, double d_thresh, double prob_threshold,
            const std::string& output, Report& rep) {
    const LaneFile f = read_lane_file(input);
    if (!f.anchors) throw Error(ErrorKind::InvalidInput, "nms needs an anchor block");
    NmsConfig cfg{d_thresh, prob_threshold};
    cfg.validate();
    const AnchorTensor kept = nms(*f.anchors, cfg);
    std::size_t before = 0, after = 0;
    std::string slots;
    for (std::size_t s = 0; s < kept.lanes().size(); ++s) {
        if (kept.lanes()[s].layer != 1) continue;
        before += f.anchors->lanes()[s].prob > 0.0;
        if (kept.lanes()[s].prob > 0.0) {
            ++after;
            slots += (slots.empty() ? "" : ",") + std::to_string(AnchorTensor::anchor_of(s));
        }
    }
    rep.kv("candidates", before).kv("kept", after).kv("suppressed", before - after).kv("kept_anchors", slots);
    if (!output.empty()) {
        write_lane_file(output, prediction_file(f, kept));
        rep.kv("output", output);
    }
    return kExitOk;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, bool detail, Report& rep,
             std::ostream& out) {
    const LaneFile pf = read_lane_file(pred_path);
    const LaneFile gf = read_lane_file(gt_path);
    std::vector<ScoredLane> pred;
    if (!pf.lanes3d.empty()) {
        for (std::size_t i = 0; i < pf.lanes3d.size(); ++i) {
            pred.push_back({pf.lanes3d[i], pf.scores.empty() ? 1.0 : pf.scores[i]});
        }
    } else if (pf.anchors) {
        for (auto& d : decode_scored(*pf.anchors, pf.pose, std::numeric_limits<double>::min())) {
            pred.push_back({std::move(d.lane), d.prob});
        }
    } else {
        for (auto& l : lanes_of(pf)) pred.push_back({std::move(l), 1.0});
    }
    const std::vector<Lane3D> gt = lanes_of(gf);
    const EvalReport r = evaluate(pred, gt, MetricConfig::make_default());
    rep.kv("f_score", r.f_score)
        .kv("ap", r.ap)
        .kv("precision", r.precision)
        .kv("recall", r.recall)
        .kv("x_err_near", r.x_err_near)
        .kv("x_err_far", r.x_err_far)
        .kv("z_err_near", r.z_err_near)
        .kv("z_err_far", r.z_err_far)
        .kv("cd_error", r.cd_error)
        .kv("n_pred", r.n_pred)
        .kv("n_gt", r.n_gt)
        .kv("n_matched", r.n_matched);
    if (detail) {
        out << "# pred gt cost_m\n";
        for (const auto& m : r.matches) {
            char buf[80];
            std::snprintf(buf, sizeof buf, "%zu %zu %.9g\n", m.pred, m.gt, m.cost);
            out << buf;
        }
    }
    return kExitOk;
}

int cmd_plot(const std::string& input, const std::string& pred_path, const std::string& prefix,
             Report& rep, std::ostream& err) {
    const LaneFile f = read_lane_file(input);
    std::optional<LaneFile> pf;
    if (!pred_path.empty()) pf = read_lane_file(pred_path);
    const PlotSet p = render_plots(f, pf ? &*pf : nullptr);
    for (const auto& w : p.warnings) err << "warning: " << w << '\n';
    write_text_file(prefix + ".front.svg", p.front);
    write_text_file(prefix + ".bev.svg", p.bev);
    write_text_file(prefix + ".elevation.svg", p.elevation);
    rep.kv("front", prefix + ".front.svg")
        .kv("bev", prefix + ".bev.svg")
        .kv("elevation", prefix + ".elevation.svg");
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"3D lane geometry toolkit: projection, weak losses, pitch calibration, anchors"};
    app.require_subcommand(1);
    app.name(args.empty() ? "lane3d" : args[0]);

    std::string input, input2, output, profile = "flat", mode = "ws", weights, penalty = "l1";
    std::uint64_t seed = 0;
    double pitch_deg = 0.0, noise_px = 0.0, y_close = 10.0, y_ref = 5.0, d_thresh = 0.05,
           prob_threshold = 0.5, lr = 1e-3;
    std::optional<double> radius, grade;
    int iters = 0, lanes = 3;
    bool detail = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
    synth->add_option("--profile", profile, "flat|uphill|downhill|bend|fork|curb")->capture_default_str();
    synth->add_option("--seed", seed, "Random seed")->capture_default_str();
    synth->add_option("--pitch", pitch_deg, "True camera pitch offset in degrees, (-5, 5)");
    synth->add_option("--noise", noise_px, "Pixel noise standard deviation");
    synth->add_option("--radius", radius, "Bend radius override in meters");
    synth->add_option("--grade", grade, "Quadratic grade override in 1/m");
    synth->add_option("--lanes", lanes, "Number of driving lanes")->capture_default_str();
    synth->add_option("-o,--output", output, "Output lane file")->required();

    auto* calibrate = app.add_subcommand("calibrate", "Estimate camera pitch from image lanes");
    calibrate->add_option("input", input)->required();
    calibrate->add_option("--y-close", y_close, "Near-field range in meters")->capture_default_str();
    auto* cal_iters = calibrate->add_option("--iters", iters, "Re-projection iterations (default 1)");
    calibrate->add_option("-o,--output", output, "Write the file back with the calibrated pitch");

    auto* encode = app.add_subcommand("encode", "Encode lanes into the double-layer anchor grid");
    encode->add_option("input", input)->required();
    encode->add_option("--y-ref", y_ref, "Association row in meters")->capture_default_str();
    encode->add_option("-o,--output", output)->required();

    auto* loss = app.add_subcommand("loss", "Evaluate the loss terms of a tensor");
    loss->add_option("pred", input)->required();
    loss->add_option("--gt", input2, "Reference file (default: the prediction itself)");
    loss->add_option("--weights", weights, "e.g. bev=1,width=1,height=1,z=1,pitch=1");

    auto* fit = app.add_subcommand("fit", "Recover heights by direct optimization");
    fit->add_option("input", input)->required();
    fit->add_option("--mode", mode, "ws (width + height losses) or sup (z loss)")->capture_default_str();
    auto* fit_iters = fit->add_option("--iters", iters, "Iteration budget (default 200000)");
    fit->add_option("--lr", lr, "Initial step size")->capture_default_str();
    fit->add_option("--weights", weights);
    fit->add_option("--penalty", penalty, "l1 or smooth")->capture_default_str();
    fit->add_option("-o,--output", output);

    auto* nms_cmd = app.add_subcommand("nms", "Suppress near-duplicate anchor predictions");
    nms_cmd->add_option("input", input)->required();
    nms_cmd->add_option("--d-thresh", d_thresh, "Mean lateral distance threshold in meters")
        ->capture_default_str();
    nms_cmd->add_option("--prob-threshold", prob_threshold)->capture_default_str();
    nms_cmd->add_option("-o,--output", output);

    auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
    eval->add_option("pred", input)->required();
    eval->add_option("gt", input2)->required();
    eval->add_flag("--detail", detail, "Print the lane matches");

    auto* plot = app.add_subcommand("plot", "Draw front, BEV and elevation panels as SVG");
    plot->add_option("input", input)->required();
    plot->add_option("--pred", input2, "Prediction file drawn in red");
    plot->add_option("-o,--output", output, "Output prefix")->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("lane3d");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    Report rep(out);
    try {
        if (synth->parsed()) {
            return cmd_synth(profile, seed, pitch_deg, noise_px, radius, grade, lanes, output, rep);
        }
        if (calibrate->parsed()) {
            return cmd_calibrate(input, y_close, cal_iters->count() ? iters : 1, output, rep);
        }
        if (encode->parsed()) return cmd_encode(input, y_ref, output, rep, err);
        if (loss->parsed()) return cmd_loss(input, input2, weights, rep);
        if (fit->parsed()) {
            return cmd_fit(input, mode, fit_iters->count() ? iters : FitConfig{}.steps, lr, weights,
                           penalty, output, rep);
        }
        if (nms_cmd->parsed()) return cmd_nms(input, d_thresh, prob_threshold, output, rep);
        if (eval->parsed()) return cmd_eval(input, input2, detail, rep, out);
        if (plot->parsed()) return cmd_plot(input, input2, output, rep, err);
    } catch (const Error& e) {
        err << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
        return e.is_numeric() ? kExitNumeric : kExitInvalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, out, err);
}

}  // namespace lane3d::cli
