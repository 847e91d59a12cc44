#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lane3d/geometry.hpp"

namespace lane3d {

enum class Profile { Flat, Uphill, Downhill, Bend, Fork, Curb };

const char* to_string(Profile p);
std::optional<Profile> parse_profile(const std::string& name);

/// Road description. Lane lines are parallel offset curves of a centerline
/// (straight, or a circular arc continued by its tangent), so the 3D lane
/// width is exactly constant. Ground height depends on y only unless a crown
/// is set: z = grade_linear * y + grade_quad * y^2 - crown * x^2.
struct SceneSpec {
    Profile profile = Profile::Flat;
    int lane_count = 3;  // driving lanes; lane_count + 1 lines
    double lane_width_m = 3.7;
    double grade_linear = 0.0;
    double grade_quad = 0.0;
    double crown = 0.0;

    double bend_radius_m = 0.0;  // 0 = straight
    bool bend_left = false;
    double bend_max_heading_deg = 30.0;  // arc continues straight past this heading

    /// Fork and curb: an extra line right of the rightmost line, `close_gap_m`
    /// away at y = 0 and diverging by `fork_divergence` meters per meter.
    double close_gap_m = 0.3;
    double fork_divergence = 0.0;
    /// The close pair is shifted so its midpoint at `align_y` sits on the
    /// nearest of these centers (normally the anchor centers).
    std::vector<double> align_centers;
    double align_y = 5.0;

    double lateral_shift_range_m = 0.5;  // uniform ego offset, drawn from the seed
    double y_max = 100.0;                // flat-ground range
    double sample_step = 0.5;            // flat-ground y spacing of lane points
    double road_length_m = 250.0;
    double pixel_noise_px = 0.0;

    CameraPose pose;
    Intrinsics K;
    std::uint64_t seed = 0;

    /// Profile presets: uphill/downhill quadratic grades of +/-1.2e-4 1/m,
    /// bend radius 100 m, fork gap 0.2 m diverging 0.04, curb gap 0.3 m.
    static SceneSpec defaults(Profile profile);
    void validate() const;
};

struct SceneSample {
    std::vector<Lane3D> lanes3d;
    std::vector<LaneBev> lanes_bev;
    std::vector<ImageLane> lanes_2d;
    CameraPose pose;  // pose the labels were rendered with
    Intrinsics K;
    double pitch_offset_rad = 0.0;  // perturbation applied on top of the spec pose
    double pixel_noise_px = 0.0;
    std::uint64_t noise_seed = 0;
};

SceneSample make_scene(const SceneSpec& spec);

/// Pinhole labels for flat-ground lanes; points behind the camera are skipped.
std::vector<ImageLane> render_image_lanes(std::span<const LaneBev> lanes, const Intrinsics& K,
                                          const CameraPose& pose, double pixel_noise_px = 0.0,
                                          std::uint64_t noise_seed = 0);

/// Adds a pitch offset drawn uniformly from [min_deg, max_deg] and re-renders
/// the 2D labels. 3D and flat-ground lanes are untouched.
SceneSample perturb_pitch(const SceneSample& sample, double min_deg, double max_deg,
                          std::uint64_t seed);

}  // namespace lane3d
