#pragma once

// World frame: origin at the ground point below the camera, x right, y forward,
// z up. Camera roll and yaw are zero; pitch is positive when the optical axis
// tilts down toward the road.

#include <span>
#include <vector>

namespace lane3d {

struct Point3 {
    double x = 0.0;  // meters, right
    double y = 0.0;  // meters, forward
    double z = 0.0;  // meters, up
};

/// Point on the flat ground plane z = 0 seen along the same camera ray as a 3D point.
struct BevPoint {
    double x = 0.0;
    double y = 0.0;
};

struct Pixel {
    double u = 0.0;
    double v = 0.0;
};

struct CameraPose {
    double pitch_rad = 0.0;
    double height_m = 1.5;

    void validate() const;
};

struct Intrinsics {
    double fx = 500.0;
    double fy = 500.0;
    double cx = 240.0;
    double cy = 180.0;
    int image_w = 480;
    int image_h = 360;

    void validate() const;
};

/// Ordered 3D polyline, strictly increasing in y, at least two points.
class Lane3D {
public:
    Lane3D() = default;
    explicit Lane3D(std::vector<Point3> points);

    const std::vector<Point3>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }

private:
    std::vector<Point3> points_;
};

/// Lane on the flat ground with per-point visibility and (optional) height.
/// An empty height vector on construction means z = 0 everywhere.
class LaneBev {
public:
    LaneBev() = default;
    LaneBev(std::vector<BevPoint> points, std::vector<bool> visible,
            std::vector<double> z = {});

    const std::vector<BevPoint>& points() const { return points_; }
    const std::vector<bool>& visible() const { return visible_; }
    const std::vector<double>& z() const { return z_; }
    std::size_t size() const { return points_.size(); }

private:
    std::vector<BevPoint> points_;
    std::vector<bool> visible_;
    std::vector<double> z_;
};

/// 2D lane label in pixels. Points outside the image are kept but flagged.
struct ImageLane {
    std::vector<Pixel> points;
    std::vector<bool> in_frame;
};

struct ImageProjection {
    Pixel px;
    bool in_frame = false;
};

struct LaneSample {
    double x = 0.0;
    double z = 0.0;
    bool visible = false;
};

/// Scale the point along its camera ray onto z = 0: (x, y) * h / (h - z).
BevPoint project_3d_to_flat(const Point3& p, double height_m);

/// Inverse of project_3d_to_flat at a known height z.
Point3 lift_flat_to_3d(const BevPoint& p, double z, double height_m);

BevPoint image_to_flat(const Pixel& uv, const Intrinsics& K, const CameraPose& pose);
ImageProjection flat_to_image(const BevPoint& p, const Intrinsics& K, const CameraPose& pose);

/// Pinhole projection of an arbitrary world point.
ImageProjection world_to_image(const Point3& p, const Intrinsics& K, const CameraPose& pose);

/// Piecewise-linear samples of x (and z) at each grid y. Grid must be strictly
/// increasing; samples outside the lane's y-span are not visible.
std::vector<LaneSample> resample_at_y(const Lane3D& lane, std::span<const double> y_grid);
std::vector<LaneSample> resample_at_y(const LaneBev& lane, std::span<const double> y_grid);

}  // namespace lane3d
