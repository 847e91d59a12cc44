#pragma once

#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "lane3d/anchors.hpp"
#include "lane3d/geometry.hpp"

namespace lane3d {

enum class PenaltyKind { L1, SmoothL1 };

/// Elementwise penalty on a residual. SmoothL1 is quadratic inside |r| < delta.
/// The L1 subgradient at zero is taken as zero.
struct Penalty {
    PenaltyKind kind = PenaltyKind::L1;
    double delta = 0.01;

    double value(double r) const;
    double slope(double r) const;
};

struct LossOptions {
    Penalty penalty;
    bool mean_reduction = false;
    /// The height loss sums steps from j = 1 by default; set to include j = 0.
    bool height_include_first_step = false;
    /// total_ws rebuilds 3D points from ground-truth x' and predicted z.
    /// Set to rebuild them from the predicted x' instead (gradients then reach x').
    bool weak_terms_use_predicted_x = false;
    double bce_eps = 1e-7;
};

struct SlotGrad {
    std::vector<double> x;  // d/d x_offsets
    std::vector<double> z;
    std::vector<double> vis;
    double prob = 0.0;
};

struct TensorGrad {
    std::vector<SlotGrad> slots;

    static TensorGrad zeros_like(const AnchorTensor& t);
    void add_scaled(const TensorGrad& other, double w);
};

struct LossTerm {
    double value = 0.0;
    TensorGrad grad;
    std::size_t terms = 0;
    /// Distance to the nearest non-smooth point: smallest |residual| fed to an
    /// L1 penalty, or for widths the gap to a chord switch; infinity when none.
    double kink_margin = std::numeric_limits<double>::infinity();
};

// Lane width at a point of lane i against the chord (q_j, q_prev) of its left
// neighbor i-1: |P Q_j| * |Q_j Q_prev|_{x=0} / |Q_j Q_prev|.
// Inside the losses the chord runs to step j-1, or to step j+1 when the foot
// of the perpendicular from P lies more than 5% of a chord beyond Q_j on
// flat ground (the far side of a right-hand bend) or j-1 is not visible.
double lane_width(const Point3& p, const Point3& q_j, const Point3& q_prev);

struct WidthGrad {
    double value = 0.0;
    Point3 d_p, d_q, d_r;
};
WidthGrad lane_width_with_grad(const Point3& p, const Point3& q_j, const Point3& q_prev);

/// Slots with prob >= 0.5 in (anchor, layer) order, i.e. left to right.
std::vector<std::size_t> active_slots(const AnchorTensor& t);

/// Per anchor: true when its second layer is active. Weak terms touching such
/// an anchor are dropped.
std::vector<bool> second_layer_mask(const AnchorTensor& t);

struct WidthProfile {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (left slot, right slot)
    std::vector<std::vector<double>> widths;                 // [pair][step]
    std::vector<std::vector<bool>> valid;
};

/// Widths between adjacent active lanes after lifting (x', z) to 3D.
WidthProfile width_profile_3d(const AnchorTensor& t, const CameraPose& pose);

LossTerm width_loss(const AnchorTensor& t, const CameraPose& pose, const std::vector<bool>& mask,
                    const LossOptions& opts = {});
LossTerm height_loss(const AnchorTensor& t, const std::vector<bool>& mask,
                     const LossOptions& opts = {});
LossTerm bev_loss(const AnchorTensor& pred, const AnchorTensor& gt, const LossOptions& opts = {});
LossTerm z_loss(const AnchorTensor& pred, const AnchorTensor& gt, const LossOptions& opts = {});

struct PitchPair {
    double predicted_rad = 0.0;
    double calibrated_rad = 0.0;
};

/// |predicted - calibrated|; derivative with respect to the prediction.
std::pair<double, double> pitch_loss(double predicted_rad, double calibrated_rad);

struct LossWeights {
    double bev = 1.0;
    double width = 1.0;
    double height = 1.0;
    double z = 1.0;
    double pitch = 1.0;
};

struct LossBreakdown {
    double l_bev = 0.0;
    double l_width = 0.0;
    double l_height = 0.0;
    double l_z = 0.0;
    double l_pitch = 0.0;
    double total = 0.0;
    TensorGrad grad;  // with respect to the prediction tensor
    double d_pitch = 0.0;
};

/// Weakly supervised total: bev + width + height (+ pitch).
LossBreakdown total_ws(const AnchorTensor& pred, const AnchorTensor& gt, const CameraPose& pose,
                       const LossWeights& weights = {},
                       const std::optional<PitchPair>& pitch = std::nullopt,
                       const LossOptions& opts = {});

/// Fully supervised total: bev + z (+ pitch).
LossBreakdown total_sup(const AnchorTensor& pred, const AnchorTensor& gt,
                        const LossWeights& weights = {},
                        const std::optional<PitchPair>& pitch = std::nullopt,
                        const LossOptions& opts = {});

}  // namespace lane3d
