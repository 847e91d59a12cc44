#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lane3d/geometry.hpp"

namespace lane3d {

/// Lateral anchor slots and the flat-ground y reference steps they predict at.
struct AnchorGridSpec {
    std::vector<double> x_centers;
    std::vector<double> y_steps;
    double y_ref = 5.0;
    std::pair<double, double> x_range{-10.0, 10.0};
    std::pair<double, double> y_range{0.0, 100.0};

    /// 26 anchors every 0.8 m over [-10, 10], y steps every 2.5 m over [0, 100].
    static AnchorGridSpec make_default();
    /// The 20 non-uniform y reference points used for the Apollo synthetic set.
    static std::vector<double> apollo_y_steps();

    std::size_t anchor_count() const { return x_centers.size(); }
    std::size_t step_count() const { return y_steps.size(); }
    void validate() const;
};

struct AnchorLane {
    int layer = 1;  // 1 = left line of a close pair (or a lone line), 2 = right line
    double prob = 0.0;
    std::vector<double> x_offsets;  // flat-ground x relative to the anchor center
    std::vector<double> z;
    std::vector<double> vis;
};

/// Two stacked predictions per anchor. Slot index = 2 * anchor + (layer - 1).
class AnchorTensor {
public:
    AnchorTensor() = default;
    explicit AnchorTensor(AnchorGridSpec grid);

    const AnchorGridSpec& grid() const { return grid_; }
    std::vector<AnchorLane>& lanes() { return lanes_; }
    const std::vector<AnchorLane>& lanes() const { return lanes_; }

    static std::size_t slot_index(std::size_t anchor, int layer) {
        return 2 * anchor + static_cast<std::size_t>(layer - 1);
    }
    static std::size_t anchor_of(std::size_t slot) { return slot / 2; }

    AnchorLane& slot(std::size_t anchor, int layer) { return lanes_[slot_index(anchor, layer)]; }
    const AnchorLane& slot(std::size_t anchor, int layer) const {
        return lanes_[slot_index(anchor, layer)];
    }

    /// Absolute flat-ground x of a slot at step j.
    double x_flat(std::size_t slot, std::size_t j) const {
        return grid_.x_centers[anchor_of(slot)] + lanes_[slot].x_offsets[j];
    }

    void validate() const;

private:
    AnchorGridSpec grid_;
    std::vector<AnchorLane> lanes_;
};

struct NmsConfig {
    double d_thresh = 0.05;
    double prob_threshold = 0.5;

    void validate() const;
};

struct LaneAssignment {
    std::size_t lane_index = 0;
    std::size_t anchor = 0;
    int layer = 1;
    double x_at_ref = 0.0;
};

struct Association {
    std::vector<LaneAssignment> assigned;
    std::vector<std::size_t> dropped;
    std::vector<std::string> warnings;
};

/// Assigns each lane to the anchor nearest its x at y_ref. Two lanes on one
/// anchor take layers 1 (left) and 2 (right); further lanes are dropped with
/// a warning. Lanes not visible at y_ref or outside x_range are dropped.
Association associate(std::span<const LaneBev> lanes, const AnchorGridSpec& grid);

AnchorTensor encode_gt(std::span<const LaneBev> lanes, const AnchorGridSpec& grid,
                       Association* association = nullptr);

struct DecodedLane {
    std::size_t slot = 0;
    double prob = 0.0;
    Lane3D lane;
};

std::vector<DecodedLane> decode_scored(const AnchorTensor& t, const CameraPose& pose,
                                       double prob_threshold);
std::vector<Lane3D> decode(const AnchorTensor& t, const CameraPose& pose, double prob_threshold);

/// Mean |dx'| over steps where both slots are visible; nullopt when none are.
std::optional<double> mean_lateral_distance(const AnchorTensor& t, std::size_t slot_a,
                                            std::size_t slot_b);

/// Greedy suppression among layer-1 slots with nonzero probability, highest
/// probability first. A slot is zeroed when a surviving slot with strictly
/// higher probability lies closer than d_thresh.
AnchorTensor nms(const AnchorTensor& t, const NmsConfig& cfg);

}  // namespace lane3d
