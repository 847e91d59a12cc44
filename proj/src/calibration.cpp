#include "lane3d/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lane3d/error.hpp"

namespace lane3d {

void CalibConfig::validate() const {
    if (!(y_close > 0.0)) throw Error(ErrorKind::InvalidInput, "y_close must be positive");
    if (max_iters < 1) throw Error(ErrorKind::InvalidInput, "max_iters must be at least 1");
    if (!(tol_rad >= 0.0)) throw Error(ErrorKind::InvalidInput, "tol_rad must be nonnegative");
}

FittedLine fit_line(std::span<const BevPoint> points) {
    const std::size_t n = points.size();
    if (n < 2) throw Error(ErrorKind::InsufficientPoints, "line fit needs at least 2 points");
    double my = 0.0, mx = 0.0;
    for (const auto& p : points) {
        my += p.y;
        mx += p.x;
    }
    my /= n;
    mx /= n;
    double syy = 0.0, sxy = 0.0;
    for (const auto& p : points) {
        syy += (p.y - my) * (p.y - my);
        sxy += (p.y - my) * (p.x - mx);
    }
    if (!(syy > 0.0)) {
        throw Error(ErrorKind::InsufficientPoints, "line fit needs distinct y values");
    }
    FittedLine line;
    line.k = sxy / syy;
    line.c = mx - line.k * my;
    line.n_points = n;
    line.y_spread = syy;
    double ss = 0.0;
    for (const auto& p : points) {
        const double e = p.x - (line.k * p.y + line.c);
        ss += e * e;
    }
    line.residual = std::sqrt(ss / n);
    return line;
}

FittedLine fit_near_line(const LaneBev& lane, double y_close) {
    std::vector<BevPoint> near;
    for (std::size_t i = 0; i < lane.size(); ++i) {
        if (lane.visible()[i] && lane.points()[i].y < y_close) near.push_back(lane.points()[i]);
    }
    return fit_line(near);
}

double pitch_from_lines(const FittedLine& a, const FittedLine& b, double height_m) {
    const double dc = b.c - a.c;
    if (dc == 0.0) throw Error(ErrorKind::IllConditioned, "lines share an intercept");
    return std::atan(height_m * (b.k - a.k) / dc);
}

CalibResult calibrate_pitch(std::span<const ImageLane> lanes, const Intrinsics& K, double height_m,
                            const CalibConfig& cfg) {
    cfg.validate();
    K.validate();
    if (!(height_m > 0.0)) throw Error(ErrorKind::InvalidInput, "camera height must be positive");

    CalibResult result;
    double estimate = 0.0;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        const CameraPose pose{estimate, height_m};
        std::vector<FittedLine> lines(lanes.size());
        std::vector<std::size_t> usable;
        for (std::size_t i = 0; i < lanes.size(); ++i) {
            std::vector<BevPoint> near;
            const ImageLane& lane = lanes[i];
            for (std::size_t k = 0; k < lane.points.size(); ++k) {
                if (k < lane.in_frame.size() && !lane.in_frame[k]) continue;
                BevPoint p;
                try {
                    p = image_to_flat(lane.points[k], K, pose);
                } catch (const Error&) {
                    continue;  // above the horizon for this pitch
                }
                if (p.y > 0.0 && p.y < cfg.y_close) near.push_back(p);
            }
            if (near.size() < 2) continue;
            lines[i] = fit_line(near);
            usable.push_back(i);
        }
        if (usable.size() < 2) {
            throw Error(ErrorKind::InsufficientPoints,
                        "calibration needs 2 lanes with near-field points");
        }
        std::stable_sort(usable.begin(), usable.end(),
                         [&](std::size_t a, std::size_t b) { return lines[a].c < lines[b].c; });

        std::vector<PairEstimate> pairs;
        for (std::size_t k = 1; k < usable.size(); ++k) {
            const FittedLine& a = lines[usable[k - 1]];
            const FittedLine& b = lines[usable[k]];
            if (b.c - a.c < cfg.min_intercept_gap) continue;
            PairEstimate pe;
            pe.lane_a = usable[k - 1];
            pe.lane_b = usable[k];
            pe.pitch_rad = estimate + pitch_from_lines(a, b, height_m);
            // Inverse variance of the pair estimate under equal point noise.
            const double gap = b.c - a.c;
            pe.weight = gap * gap / (1.0 / a.y_spread + 1.0 / b.y_spread);
            pairs.push_back(pe);
        }
        if (pairs.empty()) {
            throw Error(ErrorKind::IllConditioned,
                        "no lane pair has separated near-field intercepts");
        }

        double wsum = 0.0, acc = 0.0;
        for (const auto& p : pairs) {
            wsum += p.weight;
            acc += p.weight * p.pitch_rad;
        }
        const double next = acc / wsum;
        double var = 0.0;
        for (const auto& p : pairs) var += p.weight * (p.pitch_rad - next) * (p.pitch_rad - next);

        const double step = next - estimate;
        estimate = next;
        result.history.push_back(estimate);
        result.iterations = iter + 1;
        result.pairs = std::move(pairs);
        result.lines = std::move(lines);
        result.dispersion_rad = std::sqrt(var / wsum);
        const auto [lo, hi] = std::minmax_element(
            result.pairs.begin(), result.pairs.end(),
            [](const auto& a, const auto& b) { return a.pitch_rad < b.pitch_rad; });
        result.min_rad = lo->pitch_rad;
        result.max_rad = hi->pitch_rad;
        if (std::abs(step) < cfg.tol_rad) break;
    }
    result.pitch_rad = estimate;
    return result;
}

}  // namespace lane3d
