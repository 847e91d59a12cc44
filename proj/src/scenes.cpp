#include "lane3d/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lane3d/anchors.hpp"
#include "lane3d/error.hpp"

namespace lane3d {

namespace {

constexpr double kDeg = M_PI / 180.0;

struct LineDef {
    double offset = 0.0;      // right of the centerline at s = 0
    double divergence = 0.0;  // extra offset per meter of centerline
};

class Road {
public:
    Road(const SceneSpec& spec) : spec_(spec) {
        if (spec.bend_radius_m > 0.0) {
            curvature_ = (spec.bend_left ? -1.0 : 1.0) / spec.bend_radius_m;
            arc_len_ = spec.bend_max_heading_deg * kDeg / std::abs(curvature_);
        }
    }

    Point3 at(const LineDef& line, double s) const {
        double cx, cy, heading;
        if (curvature_ == 0.0) {
            cx = 0.0;
            cy = s;
            heading = 0.0;
        } else {
            const double sa = std::min(s, arc_len_);
            heading = curvature_ * sa;
            cx = (1.0 - std::cos(heading)) / curvature_;
            cy = std::sin(heading) / curvature_;
            if (s > arc_len_) {
                cx += (s - arc_len_) * std::sin(heading);
                cy += (s - arc_len_) * std::cos(heading);
            }
        }
        const double o = line.offset + line.divergence * s;
        Point3 p;
        p.x = cx + o * std::cos(heading);
        p.y = cy - o * std::sin(heading);
        p.z = spec_.grade_linear * p.y + spec_.grade_quad * p.y * p.y - spec_.crown * p.x * p.x;
        return p;
    }

private:
    const SceneSpec& spec_;
    double curvature_ = 0.0;
    double arc_len_ = 0.0;
};

double flat_y(const Point3& p, double h) { return p.y * h / (h - p.z); }

// Samples one line at flat-ground y' = 0, step, 2 step, ... by bisection on
// the centerline parameter over the range where y' grows monotonically.
LaneBev sample_line(const Road& road, const LineDef& line, const SceneSpec& spec) {
    const double h = spec.pose.height_m;
    const double ds = 0.25;
    std::vector<double> s_tab{0.0};
    std::vector<double> yf_tab{flat_y(road.at(line, 0.0), h)};
    for (double s = ds; s <= spec.road_length_m; s += ds) {
        const Point3 p = road.at(line, s);
        if (!(p.z < h - 0.05)) break;
        const double yf = flat_y(p, h);
        if (!(yf > yf_tab.back())) break;
        s_tab.push_back(s);
        yf_tab.push_back(yf);
        if (yf > spec.y_max) break;
    }

    std::vector<BevPoint> pts;
    std::vector<double> zs;
    const double top = std::min(spec.y_max, yf_tab.back());
    const auto n_steps = static_cast<long>(std::floor(top / spec.sample_step + 1e-9));
    std::size_t seg = 0;
    for (long k = 0; k <= n_steps; ++k) {
        const double target = static_cast<double>(k) * spec.sample_step;
        while (seg + 2 < yf_tab.size() && yf_tab[seg + 1] < target) ++seg;
        double lo = s_tab[seg], hi = s_tab[std::min(seg + 1, s_tab.size() - 1)];
        double s = lo;
        if (target <= yf_tab[seg]) {
            s = lo;
        } else {
            for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
                const double mid = 0.5 * (lo + hi);
                (flat_y(road.at(line, mid), h) < target ? lo : hi) = mid;
            }
            s = 0.5 * (lo + hi);
        }
        const Point3 p = road.at(line, s);
        pts.push_back({p.x * h / (h - p.z), target});
        zs.push_back(p.z);
    }
    if (pts.size() < 2) throw Error(ErrorKind::InvalidSpec, "lane line leaves the view immediately");
    std::vector<bool> vis(zs.size(), true);
    return LaneBev(std::move(pts), std::move(vis), std::move(zs));
}

}  // namespace

const char* to_string(Profile p) {
    switch (p) {
        case Profile::Flat: return "flat";
        case Profile::Uphill: return "uphill";
        case Profile::Downhill: return "downhill";
        case Profile::Bend: return "bend";
        case Profile::Fork: return "fork";
        case Profile::Curb: return "curb";
    }
    return "flat";
}

std::optional<Profile> parse_profile(const std::string& name) {
    for (Profile p : {Profile::Flat, Profile::Uphill, Profile::Downhill, Profile::Bend,
                      Profile::Fork, Profile::Curb}) {
        if (name == to_string(p)) return p;
    }
    return std::nullopt;
}

SceneSpec SceneSpec::defaults(Profile profile) {
    SceneSpec s;
    s.profile = profile;
    switch (profile) {
        case Profile::Flat: break;
        case Profile::Uphill: s.grade_quad = 1.2e-4; break;
        case Profile::Downhill: s.grade_quad = -1.2e-4; break;
        case Profile::Bend: s.bend_radius_m = 100.0; break;
        case Profile::Fork:
            s.close_gap_m = 0.2;
            s.fork_divergence = 0.04;
            break;
        case Profile::Curb:
            s.close_gap_m = 0.3;
            s.fork_divergence = 0.0;
            break;
    }
    if (profile == Profile::Fork || profile == Profile::Curb) {
        s.align_centers = AnchorGridSpec::make_default().x_centers;
    }
    return s;
}

void SceneSpec::validate() const {
    pose.validate();
    K.validate();
    if (lane_count < 1) throw Error(ErrorKind::InvalidSpec, "lane_count must be at least 1");
    if (!(lane_width_m > 0.0)) throw Error(ErrorKind::InvalidSpec, "lane width must be positive");
    if (profile == Profile::Bend && !(bend_radius_m >= 30.0)) {
        throw Error(ErrorKind::InvalidSpec, "bend radius must be at least 30 m");
    }
    if (bend_radius_m != 0.0 && !(bend_radius_m >= 30.0)) {
        throw Error(ErrorKind::InvalidSpec, "bend radius must be 0 or at least 30 m");
    }
    if (!(bend_max_heading_deg > 0.0 && bend_max_heading_deg < 80.0)) {
        throw Error(ErrorKind::InvalidSpec, "bend heading limit must lie in (0, 80) degrees");
    }
    if ((profile == Profile::Fork || profile == Profile::Curb) && !(close_gap_m > 0.0)) {
        throw Error(ErrorKind::InvalidSpec, "fork/curb gap must be positive");
    }
    if (!(sample_step > 0.0) || !(y_max > sample_step) || !(road_length_m > 0.0)) {
        throw Error(ErrorKind::InvalidSpec, "sampling range must be positive");
    }
    if (!(lateral_shift_range_m >= 0.0) || !(pixel_noise_px >= 0.0)) {
        throw Error(ErrorKind::InvalidSpec, "shift range and noise must be nonnegative");
    }
}

std::vector<ImageLane> render_image_lanes(std::span<const LaneBev> lanes, const Intrinsics& K,
                                          const CameraPose& pose, double pixel_noise_px,
                                          std::uint64_t noise_seed) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<ImageLane> out;
    for (const LaneBev& lane : lanes) {
        ImageLane img;
        for (std::size_t i = 0; i < lane.size(); ++i) {
            if (!lane.visible()[i]) continue;
            ImageProjection pr;
            try {
                pr = flat_to_image(lane.points()[i], K, pose);
            } catch (const Error&) {
                continue;
            }
            if (pixel_noise_px > 0.0) {
                pr.px.u += pixel_noise_px * noise(rng);
                pr.px.v += pixel_noise_px * noise(rng);
            }
            img.points.push_back(pr.px);
            img.in_frame.push_back(pr.in_frame);
        }
        out.push_back(std::move(img));
    }
    return out;
}

SceneSample make_scene(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> shift_dist(-1.0, 1.0);
    double shift = spec.lateral_shift_range_m * shift_dist(rng);
    const std::uint64_t noise_seed = rng();

    const double w = spec.lane_width_m;
    std::vector<LineDef> lines;
    for (int k = 0; k <= spec.lane_count; ++k) {
        lines.push_back({(k - 0.5 * spec.lane_count) * w, 0.0});
    }
    const bool close_pair = spec.profile == Profile::Fork || spec.profile == Profile::Curb;
    if (close_pair) {
        const double base = lines.back().offset;
        lines.push_back({base + spec.close_gap_m, spec.fork_divergence});
        if (!spec.align_centers.empty()) {
            const double mid =
                base + shift + 0.5 * (spec.close_gap_m + spec.fork_divergence * spec.align_y);
            const auto nearest = std::min_element(
                spec.align_centers.begin(), spec.align_centers.end(),
                [&](double a, double b) { return std::abs(a - mid) < std::abs(b - mid); });
            shift += *nearest - mid;
        }
    }
    for (auto& l : lines) l.offset += shift;

    const Road road(spec);
    SceneSample out;
    out.pose = spec.pose;
    out.K = spec.K;
    out.pixel_noise_px = spec.pixel_noise_px;
    out.noise_seed = noise_seed;
    const double h = spec.pose.height_m;
    for (const LineDef& line : lines) {
        LaneBev bev = sample_line(road, line, spec);
        std::vector<Point3> pts;
        for (std::size_t i = 0; i < bev.size(); ++i) {
            pts.push_back(lift_flat_to_3d(bev.points()[i], bev.z()[i], h));
        }
        out.lanes3d.emplace_back(std::move(pts));
        out.lanes_bev.push_back(std::move(bev));
    }
    out.lanes_2d = render_image_lanes(out.lanes_bev, spec.K, spec.pose, spec.pixel_noise_px,
                                      noise_seed);
    for (const auto& img : out.lanes_2d) {
        if (img.points.empty()) {
            throw Error(ErrorKind::InvalidSpec, "a lane projects entirely behind the camera");
        }
    }
    return out;
}

SceneSample perturb_pitch(const SceneSample& sample, double min_deg, double max_deg,
                          std::uint64_t seed) {
    if (!(min_deg > -5.0 && max_deg < 5.0 && min_deg <= max_deg)) {
        throw Error(ErrorKind::InvalidInput, "pitch perturbation range must lie in (-5, 5) degrees");
    }
    double delta_deg = min_deg;
    if (max_deg > min_deg) {
        std::mt19937_64 rng(seed);
        delta_deg = std::uniform_real_distribution<double>(min_deg, max_deg)(rng);
    }
    SceneSample out = sample;
    out.pose.pitch_rad += delta_deg * kDeg;
    out.pitch_offset_rad += delta_deg * kDeg;
    out.lanes_2d = render_image_lanes(out.lanes_bev, out.K, out.pose, out.pixel_noise_px,
                                      out.noise_seed);
    return out;
}

}  // namespace lane3d
