#include "lane3d/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "lane3d/error.hpp"

namespace lane3d {

namespace {

constexpr const char* kTruthColor = "#1f4fd1";
constexpr const char* kPredColor = "#d12a1f";

using Polyline = std::vector<std::pair<double, double>>;

struct Canvas {
    double width, height;
    std::string body;

    void line(const Polyline& pts, const char* color, bool dashed = false) {
        if (pts.size() < 2) return;
        std::string d;
        char buf[64];
        for (std::size_t i = 0; i < pts.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", pts[i].first, pts[i].second);
            d += buf;
        }
        body += "<polyline fill=\"none\" stroke=\"";
        body += color;
        body += dashed ? "\" stroke-dasharray=\"6,4\"" : "\"";
        body += " stroke-width=\"1.5\" points=\"" + d + "\"/>\n";
    }

    void dot(double x, double y, const char* color) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.5\" fill=\"%s\"/>\n", x, y,
                      color);
        body += buf;
    }

    void text(double x, double y, const std::string& s) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%.2f\" font-size=\"11\">", x, y);
        body += buf + s + "</text>\n";
    }

    void frame() {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"0\" y=\"0\" width=\"%.0f\" height=\"%.0f\" fill=\"white\" "
                      "stroke=\"#888888\"/>\n",
                      width, height);
        body = buf + body;
    }

    std::string svg() const {
        char head[200];
        std::snprintf(head, sizeof head,
                      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                      "viewBox=\"0 0 %.0f %.0f\">\n",
                      width, height, width, height);
        return head + body + "</svg>\n";
    }
};

void draw_front(Canvas& c, const std::vector<Lane3D>& lanes, const Intrinsics& K,
                const CameraPose& pose, const char* color) {
    for (const auto& lane : lanes) {
        Polyline pl;
        for (const auto& p : lane.points()) {
            try {
                const ImageProjection pr = world_to_image(p, K, pose);
                pl.emplace_back(pr.px.u, pr.px.v);
            } catch (const Error&) {
                c.line(pl, color);
                pl.clear();
            }
        }
        c.line(pl, color);
    }
}

struct BevView {
    double x_min = -12.0, x_max = 12.0, y_max = 100.0, scale_x = 10.0, scale_y = 5.0;
    std::pair<double, double> at(double x, double y) const {
        return {(x - x_min) * scale_x, (y_max - y) * scale_y};
    }
};

}  // namespace

std::vector<Lane3D> lanes_of(const LaneFile& f) {
    if (!f.lanes3d.empty()) return f.lanes3d;
    if (f.anchors) return decode(*f.anchors, f.pose, 0.5);
    std::vector<Lane3D> out;
    for (const auto& b : f.lanes_bev) {
        std::vector<Point3> pts;
        for (std::size_t i = 0; i < b.size(); ++i) {
            if (!b.visible()[i] || !(b.z()[i] < f.pose.height_m)) continue;
            const Point3 p = lift_flat_to_3d(b.points()[i], b.z()[i], f.pose.height_m);
            if (!pts.empty() && !(p.y > pts.back().y)) continue;
            pts.push_back(p);
        }
        if (pts.size() >= 2) out.emplace_back(std::move(pts));
    }
    return out;
}

PlotSet render_plots(const LaneFile& gt, const LaneFile* pred) {
    PlotSet out;
    const std::vector<Lane3D> truth = lanes_of(gt);
    const std::vector<Lane3D> guess = pred ? lanes_of(*pred) : std::vector<Lane3D>{};
    if (truth.empty() && guess.empty() && gt.lanes_2d.empty()) {
        out.warnings.push_back("no lanes to draw; panels are empty");
    }
    CameraPose true_pose = gt.pose;
    if (gt.true_pitch_rad) true_pose.pitch_rad = *gt.true_pitch_rad;

    // Front view in image coordinates.
    {
        Canvas c{static_cast<double>(gt.K.image_w), static_cast<double>(gt.K.image_h), {}};
        for (const auto& im : gt.lanes_2d) {
            for (std::size_t i = 0; i < im.points.size(); ++i) {
                if (im.in_frame[i]) c.dot(im.points[i].u, im.points[i].v, kTruthColor);
            }
        }
        draw_front(c, truth, gt.K, true_pose, kTruthColor);
        if (pred) draw_front(c, guess, pred->K, pred->pose, kPredColor);
        c.frame();
        c.text(6, 14, "front view");
        out.front = c.svg();
    }

    // Flat-ground top view.
    {
        const BevView v;
        Canvas c{(v.x_max - v.x_min) * v.scale_x, v.y_max * v.scale_y, {}};
        auto draw = [&](const std::vector<Lane3D>& lanes, double h, const char* color) {
            for (const auto& lane : lanes) {
                Polyline pl;
                for (const auto& p : lane.points()) {
                    if (!(p.z < h)) continue;
                    const BevPoint b = project_3d_to_flat(p, h);
                    if (b.y > v.y_max) break;
                    pl.push_back(v.at(b.x, b.y));
                }
                c.line(pl, color);
            }
        };
        draw(truth, gt.pose.height_m, kTruthColor);
        if (pred) draw(guess, pred->pose.height_m, kPredColor);
        for (const auto& im : gt.lanes_2d) {
            Polyline pl;
            for (const auto& px : im.points) {
                try {
                    const BevPoint b = image_to_flat(px, gt.K, gt.pose);
                    if (b.y < 0.0 || b.y > v.y_max) continue;
                    pl.push_back(v.at(b.x, b.y));
                } catch (const Error&) {
                }
            }
            c.line(pl, kTruthColor, true);
        }
        c.frame();
        c.text(6, 14, "bev");
        out.bev = c.svg();
    }

    // Elevation profile.
    {
        double z_lo = -0.5, z_hi = 0.5;
        for (const auto* set : {&truth, &guess}) {
            for (const auto& lane : *set) {
                for (const auto& p : lane.points()) {
                    z_lo = std::min(z_lo, p.z);
                    z_hi = std::max(z_hi, p.z);
                }
            }
        }
        const double pad = 0.1 * (z_hi - z_lo);
        z_lo -= pad;
        z_hi += pad;
        const double w = 600.0, h = 240.0, y_max = 120.0;
        Canvas c{w, h, {}};
        auto at = [&](double y, double z) {
            return std::make_pair(y / y_max * w, (z_hi - z) / (z_hi - z_lo) * h);
        };
        c.line({at(0.0, 0.0), at(y_max, 0.0)}, "#bbbbbb", true);
        auto draw = [&](const std::vector<Lane3D>& lanes, const char* color) {
            for (const auto& lane : lanes) {
                Polyline pl;
                for (const auto& p : lane.points()) {
                    if (p.y > y_max) break;
                    pl.push_back(at(p.y, p.z));
                }
                c.line(pl, color);
            }
        };
        draw(truth, kTruthColor);
        draw(guess, kPredColor);
        c.frame();
        char label[80];
        std::snprintf(label, sizeof label, "z vs y, z in [%.2f, %.2f] m", z_lo, z_hi);
        c.text(6, 14, label);
        out.elevation = c.svg();
    }
    return out;
}

}  // namespace lane3d
