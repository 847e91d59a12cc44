#include "lane3d/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "lane3d/error.hpp"

namespace lane3d {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

Json num(double v) { return round9(v); }

Json nums(const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

Json flags(const std::vector<bool>& v) {
    Json a = Json::array();
    for (bool b : v) a.push_back(b);
    return a;
}

const Json& field(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw Error(ErrorKind::Format, std::string("missing field '") + key + "'");
    }
    return j.at(key);
}

double get_num(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_number()) throw Error(ErrorKind::Format, std::string("field '") + key + "' is not a number");
    return v.get<double>();
}

std::vector<double> get_nums(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_array()) throw Error(ErrorKind::Format, std::string("field '") + key + "' is not a list");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw Error(ErrorKind::Format, std::string("non-numeric entry in '") + key + "'");
        out.push_back(e.get<double>());
    }
    return out;
}

std::vector<bool> get_flags(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_array()) throw Error(ErrorKind::Format, std::string("field '") + key + "' is not a list");
    std::vector<bool> out;
    for (const auto& e : v) {
        if (!e.is_boolean()) throw Error(ErrorKind::Format, std::string("non-boolean entry in '") + key + "'");
        out.push_back(e.get<bool>());
    }
    return out;
}

std::vector<std::vector<double>> get_rows(const Json& j, const char* key, std::size_t width) {
    const Json& v = field(j, key);
    if (!v.is_array()) throw Error(ErrorKind::Format, std::string("field '") + key + "' is not a list");
    std::vector<std::vector<double>> out;
    for (const auto& row : v) {
        if (!row.is_array() || row.size() != width) {
            throw Error(ErrorKind::Format, std::string("rows of '") + key + "' must have " +
                                               std::to_string(width) + " entries");
        }
        std::vector<double> r;
        for (const auto& e : row) {
            if (!e.is_number()) throw Error(ErrorKind::Format, "non-numeric point coordinate");
            r.push_back(e.get<double>());
        }
        out.push_back(std::move(r));
    }
    return out;
}

Json camera_json(const LaneFile& f) {
    Json c;
    c["fx"] = num(f.K.fx);
    c["fy"] = num(f.K.fy);
    c["cx"] = num(f.K.cx);
    c["cy"] = num(f.K.cy);
    c["image_w"] = f.K.image_w;
    c["image_h"] = f.K.image_h;
    c["pitch_deg"] = num(f.pose.pitch_rad * kRadToDeg);
    c["height_m"] = num(f.pose.height_m);
    if (f.true_pitch_rad) c["true_pitch_deg"] = num(*f.true_pitch_rad * kRadToDeg);
    return c;
}

Json anchors_json(const AnchorTensor& t) {
    const AnchorGridSpec& g = t.grid();
    Json a;
    a["x_centers"] = nums(g.x_centers);
    a["y_steps"] = nums(g.y_steps);
    a["y_ref"] = num(g.y_ref);
    a["x_range"] = Json::array({num(g.x_range.first), num(g.x_range.second)});
    a["y_range"] = Json::array({num(g.y_range.first), num(g.y_range.second)});
    Json slots = Json::array();
    for (std::size_t s = 0; s < t.lanes().size(); ++s) {
        const AnchorLane& l = t.lanes()[s];
        Json e;
        e["anchor"] = AnchorTensor::anchor_of(s);
        e["layer"] = l.layer;
        e["prob"] = num(l.prob);
        e["x"] = nums(l.x_offsets);
        e["z"] = nums(l.z);
        e["vis"] = nums(l.vis);
        slots.push_back(std::move(e));
    }
    a["slots"] = std::move(slots);
    return a;
}

AnchorTensor anchors_from(const Json& a) {
    AnchorGridSpec g;
    g.x_centers = get_nums(a, "x_centers");
    g.y_steps = get_nums(a, "y_steps");
    g.y_ref = get_num(a, "y_ref");
    const auto xr = get_nums(a, "x_range");
    const auto yr = get_nums(a, "y_range");
    if (xr.size() != 2 || yr.size() != 2) throw Error(ErrorKind::Format, "ranges need two entries");
    g.x_range = {xr[0], xr[1]};
    g.y_range = {yr[0], yr[1]};
    AnchorTensor t(g);
    const Json& slots = field(a, "slots");
    if (!slots.is_array() || slots.size() != t.lanes().size()) {
        throw Error(ErrorKind::Format, "anchor block must list every slot");
    }
    for (std::size_t s = 0; s < slots.size(); ++s) {
        AnchorLane& l = t.lanes()[s];
        if (static_cast<int>(get_num(slots[s], "layer")) != l.layer ||
            static_cast<std::size_t>(get_num(slots[s], "anchor")) != AnchorTensor::anchor_of(s)) {
            throw Error(ErrorKind::Format, "anchor slots out of order");
        }
        l.prob = get_num(slots[s], "prob");
        l.x_offsets = get_nums(slots[s], "x");
        l.z = get_nums(slots[s], "z");
        l.vis = get_nums(slots[s], "vis");
    }
    t.validate();
    return t;
}

}  // namespace

double round9(double v) {
    if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

std::string to_text(const LaneFile& f) {
    Json j;
    j["format"] = kLaneFileFormat;
    j["version"] = kLaneFileVersion;
    j["camera"] = camera_json(f);
    if (!f.meta.empty()) {
        Json m = Json::object();
        for (const auto& [k, v] : f.meta) m[k] = v;
        j["meta"] = std::move(m);
    }
    if (!f.scores.empty() && f.scores.size() != f.lanes3d.size()) {
        throw Error(ErrorKind::InvalidInput, "one score per 3D lane is required");
    }

    Json lanes = Json::array();
    int id = 0;
    for (std::size_t i = 0; i < f.lanes3d.size(); ++i) {
        Json l;
        l["id"] = id++;
        l["kind"] = "3d";
        if (!f.scores.empty()) l["score"] = num(f.scores[i]);
        Json pts = Json::array();
        for (const auto& p : f.lanes3d[i].points()) pts.push_back({num(p.x), num(p.y), num(p.z)});
        l["points"] = std::move(pts);
        lanes.push_back(std::move(l));
    }
    for (const auto& b : f.lanes_bev) {
        Json l;
        l["id"] = id++;
        l["kind"] = "bev";
        Json pts = Json::array();
        for (const auto& p : b.points()) pts.push_back({num(p.x), num(p.y)});
        l["points"] = std::move(pts);
        l["visible"] = flags(b.visible());
        l["z"] = nums(b.z());
        lanes.push_back(std::move(l));
    }
    for (const auto& im : f.lanes_2d) {
        Json l;
        l["id"] = id++;
        l["kind"] = "image";
        Json pts = Json::array();
        for (const auto& p : im.points) pts.push_back({num(p.u), num(p.v)});
        l["points"] = std::move(pts);
        l["in_frame"] = flags(im.in_frame);
        lanes.push_back(std::move(l));
    }
    j["lanes"] = std::move(lanes);
    if (f.anchors) j["anchors"] = anchors_json(*f.anchors);
    return j.dump(1) + "\n";
}

LaneFile from_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, std::string("lane file is not valid JSON: ") + e.what());
    }
    const Json& fmt = field(j, "format");
    if (!fmt.is_string() || fmt.get<std::string>() != kLaneFileFormat) {
        throw Error(ErrorKind::Format, "not a lane3d file");
    }
    if (get_num(j, "version") != kLaneFileVersion) {
        throw Error(ErrorKind::Format, "unsupported lane file version");
    }

    LaneFile f;
    const Json& c = field(j, "camera");
    f.K.fx = get_num(c, "fx");
    f.K.fy = get_num(c, "fy");
    f.K.cx = get_num(c, "cx");
    f.K.cy = get_num(c, "cy");
    f.K.image_w = static_cast<int>(get_num(c, "image_w"));
    f.K.image_h = static_cast<int>(get_num(c, "image_h"));
    f.pose.pitch_rad = get_num(c, "pitch_deg") / kRadToDeg;
    f.pose.height_m = get_num(c, "height_m");
    if (c.contains("true_pitch_deg")) f.true_pitch_rad = get_num(c, "true_pitch_deg") / kRadToDeg;
    f.K.validate();
    f.pose.validate();

    if (j.contains("meta")) {
        for (const auto& [k, v] : j.at("meta").items()) {
            if (!v.is_string()) throw Error(ErrorKind::Format, "meta values must be strings");
            f.meta[k] = v.get<std::string>();
        }
    }

    bool any_score = false, all_score = true;
    for (const auto& l : field(j, "lanes")) {
        const Json& kind = field(l, "kind");
        const std::string k = kind.is_string() ? kind.get<std::string>() : "";
        if (k == "3d") {
            std::vector<Point3> pts;
            for (const auto& r : get_rows(l, "points", 3)) pts.push_back({r[0], r[1], r[2]});
            f.lanes3d.emplace_back(std::move(pts));
            if (l.contains("score")) {
                any_score = true;
                f.scores.push_back(get_num(l, "score"));
            } else {
                all_score = false;
            }
        } else if (k == "bev") {
            std::vector<BevPoint> pts;
            for (const auto& r : get_rows(l, "points", 2)) pts.push_back({r[0], r[1]});
            f.lanes_bev.emplace_back(std::move(pts), get_flags(l, "visible"), get_nums(l, "z"));
        } else if (k == "image") {
            ImageLane im;
            for (const auto& r : get_rows(l, "points", 2)) im.points.push_back({r[0], r[1]});
            im.in_frame = get_flags(l, "in_frame");
            if (im.in_frame.size() != im.points.size()) {
                throw Error(ErrorKind::Format, "image lane in_frame length differs from points");
            }
            f.lanes_2d.push_back(std::move(im));
        } else {
            throw Error(ErrorKind::Format, "unknown lane kind '" + k + "'");
        }
    }
    if (any_score && !all_score) throw Error(ErrorKind::Format, "either all or no 3D lanes carry a score");
    if (j.contains("anchors")) f.anchors = anchors_from(j.at("anchors"));
    return f;
}

LaneFile read_lane_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::InvalidInput, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void write_lane_file(const std::string& path, const LaneFile& f) { write_text_file(path, to_text(f)); }

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + path);
    out << text;
    if (!out) throw Error(ErrorKind::InvalidInput, "failed writing " + path);
}

}  // namespace lane3d
