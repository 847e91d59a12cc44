#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lane3d/anchors.hpp"
#include "lane3d/geometry.hpp"

namespace lane3d {

/// On-disk scene/prediction container. Angles are stored in degrees.
struct LaneFile {
    Intrinsics K;
    CameraPose pose;  // assumed pose; pitch is what calibration would replace
    std::optional<double> true_pitch_rad;
    std::vector<Lane3D> lanes3d;
    std::vector<double> scores;  // per 3D lane, empty when unscored
    std::vector<LaneBev> lanes_bev;
    std::vector<ImageLane> lanes_2d;
    std::optional<AnchorTensor> anchors;
    std::map<std::string, std::string> meta;
};

inline constexpr const char* kLaneFileFormat = "lane3d";
inline constexpr int kLaneFileVersion = 1;

/// Rounds to 9 significant digits, the precision used on disk.
double round9(double v);

std::string to_text(const LaneFile& f);
LaneFile from_text(const std::string& text);

LaneFile read_lane_file(const std::string& path);
void write_lane_file(const std::string& path, const LaneFile& f);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace lane3d
