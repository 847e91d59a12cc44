#pragma once

#include <span>
#include <utility>
#include <vector>

#include "lane3d/geometry.hpp"

namespace lane3d {

struct MetricConfig {
    std::vector<double> y_grid;  // 3D y sample positions, default 0..100 m every 1 m
    double dist_thresh = 1.5;
    double min_coverage = 0.75;  // share of mutually covered points within dist_thresh
    double near_far_y = 40.0;
    double score_threshold = 0.5;

    static MetricConfig make_default();
};

struct ScoredLane {
    Lane3D lane;
    double score = 1.0;
};

struct LaneMatch {
    std::size_t pred = 0;
    std::size_t gt = 0;
    double cost = 0.0;  // mean point distance over mutually covered grid points
};

/// Maximum-cardinality, then minimum-cost, one-to-one matching.
std::vector<LaneMatch> match_lanes(std::span<const Lane3D> pred, std::span<const Lane3D> gt,
                                   const MetricConfig& cfg);

/// Assignment minimizing the summed cost; returns (row, col) pairs covering
/// min(rows, cols) entries.
std::vector<std::pair<std::size_t, std::size_t>> min_cost_assignment(
    const std::vector<std::vector<double>>& cost);

/// Symmetric chamfer distance: mean of the two directed mean nearest-neighbor distances.
double chamfer_distance(std::span<const Point3> a, std::span<const Point3> b);

/// Percentages in [0, 100]; errors in meters.
struct EvalReport {
    double f_score = 0.0;
    double ap = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double x_err_near = 0.0;
    double x_err_far = 0.0;
    double z_err_near = 0.0;
    double z_err_far = 0.0;
    double cd_error = 0.0;
    std::size_t n_pred = 0;
    std::size_t n_gt = 0;
    std::size_t n_matched = 0;
    std::vector<LaneMatch> matches;
};

EvalReport evaluate(std::span<const ScoredLane> pred, std::span<const Lane3D> gt,
                    const MetricConfig& cfg);
EvalReport evaluate(std::span<const Lane3D> pred, std::span<const Lane3D> gt,
                    const MetricConfig& cfg);

}  // namespace lane3d
