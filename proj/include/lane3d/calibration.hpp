#pragma once

#include <span>
#include <vector>

#include "lane3d/geometry.hpp"

namespace lane3d {

/// x' = k * y' + c fitted over the near field.
struct FittedLine {
    double k = 0.0;
    double c = 0.0;
    std::size_t n_points = 0;
    double residual = 0.0;  // RMS, meters
    double y_spread = 0.0;  // sum of squared y' deviations of the fitted points
};

struct CalibConfig {
    double y_close = 10.0;
    int max_iters = 1;
    double tol_rad = 1e-7;
    /// Line pairs whose intercepts are closer than this are not used.
    double min_intercept_gap = 0.2;

    void validate() const;
};

/// Least-squares line through the visible points with y' < y_close.
FittedLine fit_near_line(const LaneBev& lane, double y_close);
FittedLine fit_line(std::span<const BevPoint> points);

/// Pitch that makes two near-field lines parallel: atan(h (k2 - k1) / (c2 - c1)).
double pitch_from_lines(const FittedLine& a, const FittedLine& b, double height_m);

struct PairEstimate {
    std::size_t lane_a = 0;
    std::size_t lane_b = 0;
    double pitch_rad = 0.0;
    double weight = 0.0;
};

struct CalibResult {
    double pitch_rad = 0.0;
    int iterations = 0;
    std::vector<double> history;     // estimate after each iteration
    /// From the last iteration, as absolute pitch. Pairs are averaged with
    /// weight (c2 - c1)^2 / (1/Syy_1 + 1/Syy_2), the inverse variance of
    /// the pair estimate when every point carries the same noise.
    std::vector<PairEstimate> pairs;
    std::vector<FittedLine> lines;   // one per input lane; n_points = 0 when unused
    double dispersion_rad = 0.0;     // weighted standard deviation over pairs
    double min_rad = 0.0;
    double max_rad = 0.0;
};

/// Estimates camera pitch from 2D lane labels, starting from pitch 0. Each
/// iteration back-projects the labels with the current estimate, fits the
/// near-field lines and adds the residual pitch of the adjacent pairs.
CalibResult calibrate_pitch(std::span<const ImageLane> lanes, const Intrinsics& K, double height_m,
                            const CalibConfig& cfg = {});

}  // namespace lane3d
