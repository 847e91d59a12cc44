#include "lane3d/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "lane3d/error.hpp"

namespace lane3d {

namespace {

void check_increasing(const std::vector<double>& v, const char* what) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] > v[i - 1])) {
            throw Error(ErrorKind::InvalidInput, std::string(what) + " must be strictly increasing");
        }
    }
}

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

AnchorGridSpec AnchorGridSpec::make_default() {
    AnchorGridSpec g;
    for (int k = 0; k <= 25; ++k) g.x_centers.push_back((-50.0 + 4.0 * k) / 5.0);
    for (int k = 0; k <= 40; ++k) g.y_steps.push_back(2.5 * k);
    return g;
}

std::vector<double> AnchorGridSpec::apollo_y_steps() {
    return {0, 2.5, 5, 7.5, 10, 12.5, 15, 17.5, 20, 25, 30, 35, 40, 45, 50, 60, 70, 80, 90, 100};
}

void AnchorGridSpec::validate() const {
    if (x_centers.empty() || y_steps.size() < 2) {
        throw Error(ErrorKind::InvalidInput, "anchor grid needs centers and at least 2 y steps");
    }
    check_increasing(x_centers, "anchor x centers");
    check_increasing(y_steps, "anchor y steps");
    if (!(y_ref >= y_steps.front() && y_ref <= y_steps.back())) {
        throw Error(ErrorKind::InvalidInput, "y_ref must lie within the y steps");
    }
    if (!(x_range.first < x_range.second) || !(y_range.first < y_range.second)) {
        throw Error(ErrorKind::InvalidInput, "anchor ranges must be non-empty");
    }
}

AnchorTensor::AnchorTensor(AnchorGridSpec grid) : grid_(std::move(grid)) {
    grid_.validate();
    const std::size_t steps = grid_.step_count();
    lanes_.resize(2 * grid_.anchor_count());
    for (std::size_t s = 0; s < lanes_.size(); ++s) {
        AnchorLane& l = lanes_[s];
        l.layer = static_cast<int>(s % 2) + 1;
        l.x_offsets.assign(steps, 0.0);
        l.z.assign(steps, 0.0);
        l.vis.assign(steps, 0.0);
    }
}

void AnchorTensor::validate() const {
    grid_.validate();
    if (lanes_.size() != 2 * grid_.anchor_count()) {
        throw Error(ErrorKind::InvalidInput, "anchor tensor needs two layers per anchor");
    }
    const std::size_t steps = grid_.step_count();
    for (std::size_t s = 0; s < lanes_.size(); ++s) {
        const AnchorLane& l = lanes_[s];
        if (l.layer != static_cast<int>(s % 2) + 1) {
            throw Error(ErrorKind::InvalidInput, "anchor slot layer out of order");
        }
        if (l.x_offsets.size() != steps || l.z.size() != steps || l.vis.size() != steps) {
            throw Error(ErrorKind::InvalidInput, "anchor slot length differs from y steps");
        }
        if (!in_unit(l.prob)) throw Error(ErrorKind::InvalidInput, "anchor prob outside [0,1]");
        for (std::size_t j = 0; j < steps; ++j) {
            if (!in_unit(l.vis[j])) {
                throw Error(ErrorKind::InvalidInput, "anchor visibility outside [0,1]");
            }
            if (!std::isfinite(l.x_offsets[j]) || !std::isfinite(l.z[j])) {
                throw Error(ErrorKind::InvalidInput, "anchor values must be finite");
            }
        }
    }
}

void NmsConfig::validate() const {
    if (!(d_thresh > 0.0)) throw Error(ErrorKind::InvalidInput, "d_thresh must be positive");
    if (!in_unit(prob_threshold)) {
        throw Error(ErrorKind::InvalidInput, "prob_threshold must lie in [0,1]");
    }
}

Association associate(std::span<const LaneBev> lanes, const AnchorGridSpec& grid) {
    grid.validate();
    Association out;
    const double ref[] = {grid.y_ref};
    std::map<std::size_t, std::vector<LaneAssignment>> by_anchor;

    for (std::size_t i = 0; i < lanes.size(); ++i) {
        const LaneSample s = resample_at_y(lanes[i], ref)[0];
        if (!s.visible) {
            out.dropped.push_back(i);
            out.warnings.push_back("lane " + std::to_string(i) + " not visible at y_ref");
            continue;
        }
        if (s.x < grid.x_range.first || s.x > grid.x_range.second) {
            out.dropped.push_back(i);
            continue;
        }
        std::size_t best = 0;
        double best_d = std::abs(s.x - grid.x_centers[0]);
        for (std::size_t a = 1; a < grid.anchor_count(); ++a) {
            const double d = std::abs(s.x - grid.x_centers[a]);
            if (d < best_d) {
                best_d = d;
                best = a;
            }
        }
        by_anchor[best].push_back({i, best, 1, s.x});
    }

    for (auto& [anchor, group] : by_anchor) {
        std::stable_sort(group.begin(), group.end(),
                         [](const auto& a, const auto& b) { return a.x_at_ref < b.x_at_ref; });
        for (std::size_t k = 0; k < group.size(); ++k) {
            if (k >= 2) {
                out.dropped.push_back(group[k].lane_index);
                out.warnings.push_back("anchor " + std::to_string(anchor) + " overflow: lane " +
                                       std::to_string(group[k].lane_index) + " dropped");
                continue;
            }
            group[k].layer = static_cast<int>(k) + 1;
            out.assigned.push_back(group[k]);
        }
    }
    std::sort(out.dropped.begin(), out.dropped.end());
    return out;
}

AnchorTensor encode_gt(std::span<const LaneBev> lanes, const AnchorGridSpec& grid,
                       Association* association) {
    Association assoc = associate(lanes, grid);
    AnchorTensor t(grid);
    for (const LaneAssignment& a : assoc.assigned) {
        const auto samples = resample_at_y(lanes[a.lane_index], grid.y_steps);
        AnchorLane& slot = t.slot(a.anchor, a.layer);
        slot.prob = 1.0;
        const double center = grid.x_centers[a.anchor];
        for (std::size_t j = 0; j < samples.size(); ++j) {
            if (!samples[j].visible) continue;
            slot.x_offsets[j] = samples[j].x - center;
            slot.z[j] = samples[j].z;
            slot.vis[j] = 1.0;
        }
    }
    if (association) *association = std::move(assoc);
    return t;
}

std::vector<DecodedLane> decode_scored(const AnchorTensor& t, const CameraPose& pose,
                                       double prob_threshold) {
    std::vector<DecodedLane> out;
    const auto& grid = t.grid();
    const double h = pose.height_m;
    for (std::size_t s = 0; s < t.lanes().size(); ++s) {
        const AnchorLane& l = t.lanes()[s];
        if (!(l.prob >= prob_threshold)) continue;
        std::vector<Point3> pts;
        for (std::size_t j = 0; j < grid.step_count(); ++j) {
            if (!(l.vis[j] >= 0.5) || !(l.z[j] < h)) continue;
            const Point3 p = lift_flat_to_3d({t.x_flat(s, j), grid.y_steps[j]}, l.z[j], h);
            // Steep predicted heights can fold the lifted polyline back on itself.
            if (!pts.empty() && !(p.y > pts.back().y)) continue;
            pts.push_back(p);
        }
        if (pts.size() < 2) continue;
        out.push_back({s, l.prob, Lane3D(std::move(pts))});
    }
    return out;
}

std::vector<Lane3D> decode(const AnchorTensor& t, const CameraPose& pose, double prob_threshold) {
    std::vector<Lane3D> out;
    for (auto& d : decode_scored(t, pose, prob_threshold)) out.push_back(std::move(d.lane));
    return out;
}

std::optional<double> mean_lateral_distance(const AnchorTensor& t, std::size_t slot_a,
                                            std::size_t slot_b) {
    const AnchorLane& a = t.lanes()[slot_a];
    const AnchorLane& b = t.lanes()[slot_b];
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < t.grid().step_count(); ++j) {
        if (a.vis[j] >= 0.5 && b.vis[j] >= 0.5) {
            sum += std::abs(t.x_flat(slot_a, j) - t.x_flat(slot_b, j));
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

AnchorTensor nms(const AnchorTensor& t, const NmsConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> order;
    for (std::size_t a = 0; a < t.grid().anchor_count(); ++a) {
        const std::size_t s = AnchorTensor::slot_index(a, 1);
        if (t.lanes()[s].prob > 0.0) order.push_back(s);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return t.lanes()[a].prob > t.lanes()[b].prob;
    });

    AnchorTensor out = t;
    std::vector<std::size_t> kept;
    for (std::size_t s : order) {
        const double p = t.lanes()[s].prob;
        bool suppressed = false;
        for (std::size_t k : kept) {
            if (!(t.lanes()[k].prob > p)) continue;
            const auto d = mean_lateral_distance(t, s, k);
            if (d && *d < cfg.d_thresh) {
                suppressed = true;
                break;
            }
        }
        if (suppressed) {
            out.lanes()[s].prob = 0.0;
        } else {
            kept.push_back(s);
        }
    }
    return out;
}

}  // namespace lane3d
