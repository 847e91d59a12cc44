#include "lane3d/geometry.hpp"

#include <cmath>
#include <string>

#include "lane3d/error.hpp"

namespace lane3d {

namespace {

bool finite(double v) { return std::isfinite(v); }

void check_grid(std::span<const double> y_grid) {
    for (std::size_t i = 1; i < y_grid.size(); ++i) {
        if (!(y_grid[i] > y_grid[i - 1])) {
            throw Error(ErrorKind::InvalidInput, "y grid must be strictly increasing");
        }
    }
}

// Camera-frame coordinates (right, down, forward) of a world point.
struct CameraCoords {
    double right, down, forward;
};

CameraCoords to_camera(const Point3& p, const CameraPose& pose) {
    const double s = std::sin(pose.pitch_rad);
    const double c = std::cos(pose.pitch_rad);
    const double rz = p.z - pose.height_m;
    return {p.x, -s * p.y - c * rz, c * p.y - s * rz};
}

// Interpolates a y-ordered polyline; `y_at(k)`, `x_at(k)`, `z_at(k)` and
// `vis_at(k)` read the k-th vertex.
template <typename Y, typename X, typename Z, typename V>
std::vector<LaneSample> resample(std::size_t n, Y y_at, X x_at, Z z_at, V vis_at,
                                 std::span<const double> y_grid) {
    check_grid(y_grid);
    if (n < 2) throw Error(ErrorKind::InvalidLane, "lane needs at least 2 points");

    std::vector<LaneSample> out(y_grid.size());
    std::size_t seg = 0;
    for (std::size_t g = 0; g < y_grid.size(); ++g) {
        const double y = y_grid[g];
        if (y < y_at(0) || y > y_at(n - 1)) continue;
        while (seg + 2 < n && y_at(seg + 1) <= y) ++seg;
        const double y0 = y_at(seg);
        const double y1 = y_at(seg + 1);
        LaneSample& s = out[g];
        if (y == y0) {
            s = {x_at(seg), z_at(seg), vis_at(seg)};
        } else if (y == y1) {
            s = {x_at(seg + 1), z_at(seg + 1), vis_at(seg + 1)};
        } else {
            const double t = (y - y0) / (y1 - y0);
            s.x = x_at(seg) + t * (x_at(seg + 1) - x_at(seg));
            s.z = z_at(seg) + t * (z_at(seg + 1) - z_at(seg));
            s.visible = vis_at(seg) && vis_at(seg + 1);
        }
    }
    return out;
}

}  // namespace

void CameraPose::validate() const {
    if (!finite(height_m) || height_m <= 0.0) {
        throw Error(ErrorKind::InvalidInput, "camera height must be positive");
    }
    if (!finite(pitch_rad) || std::abs(pitch_rad) >= M_PI / 2) {
        throw Error(ErrorKind::InvalidInput, "camera pitch must lie in (-90, 90) degrees");
    }
}

void Intrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !finite(fx) || !finite(fy)) {
        throw Error(ErrorKind::InvalidInput, "focal lengths must be positive");
    }
    if (image_w <= 0 || image_h <= 0 || !(cx >= 0.0) || !(cx < image_w) || !(cy >= 0.0) ||
        !(cy < image_h)) {
        throw Error(ErrorKind::InvalidInput, "principal point must lie inside the image");
    }
}

Lane3D::Lane3D(std::vector<Point3> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw Error(ErrorKind::InvalidLane, "lane needs at least 2 points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const Point3& p = points_[i];
        if (!finite(p.x) || !finite(p.y) || !finite(p.z)) {
            throw Error(ErrorKind::InvalidLane, "lane point is not finite");
        }
        if (i > 0 && !(p.y > points_[i - 1].y)) {
            throw Error(ErrorKind::InvalidLane, "lane y must be strictly increasing");
        }
    }
}

LaneBev::LaneBev(std::vector<BevPoint> points, std::vector<bool> visible, std::vector<double> z)
    : points_(std::move(points)), visible_(std::move(visible)), z_(std::move(z)) {
    if (z_.empty()) z_.assign(points_.size(), 0.0);
    if (visible_.size() != points_.size() || z_.size() != points_.size()) {
        throw Error(ErrorKind::InvalidLane, "lane field lengths differ");
    }
    if (points_.size() < 2) throw Error(ErrorKind::InvalidLane, "lane needs at least 2 points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!finite(points_[i].x) || !finite(points_[i].y) || !finite(z_[i])) {
            throw Error(ErrorKind::InvalidLane, "lane point is not finite");
        }
        if (i > 0 && !(points_[i].y > points_[i - 1].y)) {
            throw Error(ErrorKind::InvalidLane, "lane y must be strictly increasing");
        }
    }
}

BevPoint project_3d_to_flat(const Point3& p, double height_m) {
    if (!(p.z < height_m)) {
        throw Error(ErrorKind::DegenerateProjection,
                    "point at z=" + std::to_string(p.z) + " is not below the camera");
    }
    const double scale = height_m / (height_m - p.z);
    return {p.x * scale, p.y * scale};
}

Point3 lift_flat_to_3d(const BevPoint& p, double z, double height_m) {
    if (!(z < height_m)) {
        throw Error(ErrorKind::DegenerateProjection,
                    "height z=" + std::to_string(z) + " is not below the camera");
    }
    const double scale = (height_m - z) / height_m;
    return {p.x * scale, p.y * scale, z};
}

BevPoint image_to_flat(const Pixel& uv, const Intrinsics& K, const CameraPose& pose) {
    const double s = std::sin(pose.pitch_rad);
    const double c = std::cos(pose.pitch_rad);
    const double right = (uv.u - K.cx) / K.fx;
    const double down = (uv.v - K.cy) / K.fy;
    // Ray direction in world coordinates for camera direction (right, down, 1).
    const double dx = right;
    const double dy = -s * down + c;
    const double dz = -c * down - s;
    if (!(dz < -1e-12)) {
        throw Error(ErrorKind::NoGroundIntersection, "pixel lies at or above the horizon");
    }
    const double t = pose.height_m / -dz;
    return {t * dx, t * dy};
}

ImageProjection world_to_image(const Point3& p, const Intrinsics& K, const CameraPose& pose) {
    const CameraCoords cam = to_camera(p, pose);
    if (!(cam.forward > 1e-9)) {
        throw Error(ErrorKind::BehindCamera, "point lies behind the camera");
    }
    ImageProjection out;
    out.px.u = K.cx + K.fx * cam.right / cam.forward;
    out.px.v = K.cy + K.fy * cam.down / cam.forward;
    out.in_frame = out.px.u >= 0.0 && out.px.u < K.image_w && out.px.v >= 0.0 &&
                   out.px.v < K.image_h;
    return out;
}

ImageProjection flat_to_image(const BevPoint& p, const Intrinsics& K, const CameraPose& pose) {
    return world_to_image({p.x, p.y, 0.0}, K, pose);
}

std::vector<LaneSample> resample_at_y(const Lane3D& lane, std::span<const double> y_grid) {
    const auto& pts = lane.points();
    return resample(
        pts.size(), [&](std::size_t k) { return pts[k].y; }, [&](std::size_t k) { return pts[k].x; },
        [&](std::size_t k) { return pts[k].z; }, [](std::size_t) { return true; }, y_grid);
}

std::vector<LaneSample> resample_at_y(const LaneBev& lane, std::span<const double> y_grid) {
    const auto& pts = lane.points();
    const auto& z = lane.z();
    const auto& vis = lane.visible();
    return resample(
        pts.size(), [&](std::size_t k) { return pts[k].y; }, [&](std::size_t k) { return pts[k].x; },
        [&](std::size_t k) { return z[k]; }, [&](std::size_t k) { return bool(vis[k]); }, y_grid);
}

}  // namespace lane3d
