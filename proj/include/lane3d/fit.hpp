#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lane3d/anchors.hpp"
#include "lane3d/losses.hpp"

namespace lane3d {

enum class FitMethod {
    GradientDescent,  // x -= lr * grad, step x1.1 on success, halved on increase
    Lbfgs,            // limited-memory quasi-Newton direction, halving line search
};

struct FitConfig {
    int steps = 200000;  // total iteration budget (accepted + rejected)
    FitMethod method = FitMethod::Lbfgs;
    int lbfgs_memory = 10;
    /// Weak fit: steps revealed per block, near to far (0 = all at once).
    int grow_steps = 4;
    double learning_rate = 1e-3;
    LossWeights weights;
    /// Penalty of the objective. With exact L1 the optimizer descends a
    /// Smooth-L1 surrogate whose delta shrinks 1 -> 1e-6 (one stage each).
    Penalty penalty;
    bool backtracking = true;  // halve the step and retry when the loss rises;
                               // when off, plain gradient descent is used
    double tol = 1e-14;        // stop a stage once the objective falls below this
    LossOptions loss;          // reduction and indexing flags; penalty is overridden

    void validate() const;
};

struct FitReport {
    LossBreakdown final;  // exact terms at the fitted tensor
    AnchorTensor fitted;
    std::optional<double> z_rms_truth;        // vs a supplied reference tensor
    std::optional<double> z_rms_closed_form;  // vs closed_form_oracle (weak fit only)
    std::size_t z_points = 0;
    std::vector<double> trace;  // objective after each accepted step
    std::vector<std::size_t> stage_starts;
    int iterations = 0;
};

/// Heights from flat-ground widths of one lane pair, with z = 0 at the first
/// step: z_j = h (1 - W'_0 / W'_j).
std::vector<double> closed_form_z(std::span<const double> bev_widths, double height_m);

/// Applies closed_form_z to the same-y flat-ground gaps x'_b - x'_a of every
/// unmasked adjacent active pair and averages the estimates each lane
/// receives. Steps without an estimate get vis = 0.
AnchorTensor closed_form_oracle(const AnchorTensor& t, const CameraPose& pose);

/// RMS of z differences over the active, visible entries of `reference`,
/// skipping anchors whose second layer is active when `weak_only` is set.
std::pair<double, std::size_t> z_rms(const AnchorTensor& fitted, const AnchorTensor& reference,
                                     bool weak_only);

/// Recovers heights from flat-ground labels alone: z starts at 0, the first
/// visible step of each lane is pinned at 0 and the width + height losses
/// are minimized over the remaining visible heights.
FitReport fit_ws(const AnchorTensor& gt_bev, const CameraPose& pose, const FitConfig& cfg,
                 const AnchorTensor* truth = nullptr);

/// Baseline with direct height supervision: minimizes the z loss from z = 0.
FitReport fit_sup(const AnchorTensor& gt, const FitConfig& cfg);

}  // namespace lane3d
