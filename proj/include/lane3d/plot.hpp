#pragma once

#include <string>
#include <vector>

#include "lane3d/io.hpp"

namespace lane3d {

struct PlotSet {
    std::string front;      // image-plane view
    std::string bev;        // flat-ground top view
    std::string elevation;  // z against y
    std::vector<std::string> warnings;
};

/// Ground truth in blue, predictions in red. The BEV panel also shows the
/// image labels back-projected with the file's camera pitch (dashed), which
/// makes a wrong pitch visible as converging or diverging lines.
PlotSet render_plots(const LaneFile& gt, const LaneFile* pred = nullptr);

/// 3D lanes of a file: explicit 3D lanes, else decoded anchors, else lifted BEV lanes.
std::vector<Lane3D> lanes_of(const LaneFile& f);

}  // namespace lane3d
