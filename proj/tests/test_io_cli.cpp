#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lane3d/cli.hpp"
#include "lane3d/error.hpp"
#include "lane3d/io.hpp"
#include "lane3d/plot.hpp"
#include "support.hpp"

using namespace lane3d;
using namespace lane3d::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "lane3d");
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::map<std::string, std::string> parse_report(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("lane3d_test_" + std::to_string(std::rand()) + "_" +
                                            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

LaneFile sample_file() {
    SceneSpec spec = SceneSpec::defaults(Profile::Fork);
    spec.pixel_noise_px = 0.7;
    spec.seed = 3;
    const SceneSample s = make_scene(spec);
    LaneFile f;
    f.K = s.K;
    f.pose = s.pose;
    f.true_pitch_rad = 0.0123;
    f.lanes3d = s.lanes3d;
    for (std::size_t i = 0; i < s.lanes3d.size(); ++i) f.scores.push_back(0.5 + 0.1 * i);
    f.lanes_bev = s.lanes_bev;
    f.lanes_2d = s.lanes_2d;
    f.anchors = encode_gt(s.lanes_bev, AnchorGridSpec::make_default());
    f.meta["profile"] = "fork";
    return f;
}

}  // namespace

TEST_CASE("lane files round-trip byte for byte") {
    const std::string a = to_text(sample_file());
    const LaneFile back = from_text(a);
    CHECK(to_text(back) == a);
    CHECK(back.lanes3d.size() == 5);
    CHECK(back.scores.size() == 5);
    CHECK(back.anchors.has_value());
    CHECK(back.meta.at("profile") == "fork");
    CHECK(*back.true_pitch_rad == doctest::Approx(0.0123).epsilon(1e-8));

    TempDir dir;
    write_lane_file(dir / "a.lanes", back);
    CHECK(slurp(dir / "a.lanes") == a);
    CHECK(to_text(read_lane_file(dir / "a.lanes")) == a);
}

TEST_CASE("round9 keeps nine significant digits") {
    CHECK(round9(1.0 / 3.0) == 0.333333333);
    CHECK(round9(0.0) == 0.0);
    CHECK(round9(-0.0) == 0.0);
    CHECK(round9(round9(2.0 / 7.0)) == round9(2.0 / 7.0));
}

TEST_CASE("malformed lane files are rejected") {
    auto kind = [](const std::string& text) {
        try {
            from_text(text);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::InvalidInput;
    };
    CHECK(kind("{") == ErrorKind::Format);
    CHECK(kind("{\"format\":\"other\"}") == ErrorKind::Format);
    std::string good = to_text(sample_file());
    std::string bad = good;
    bad.replace(bad.find("\"kind\": \"3d\""), 12, "\"kind\": \"4d\"");
    CHECK(kind(bad) == ErrorKind::Format);
    CHECK_THROWS_AS(read_lane_file("/nonexistent/file.lanes"), Error);
}

TEST_CASE("plots use two colors and warn on empty input") {
    const LaneFile f = sample_file();
    const PlotSet p = render_plots(f, &f);
    for (const std::string* svg : {&p.front, &p.bev, &p.elevation}) {
        CHECK(svg->find("<svg") == 0);
        CHECK(svg->find("#1f4fd1") != std::string::npos);
        CHECK(svg->find("#d12a1f") != std::string::npos);
    }
    CHECK(p.warnings.empty());

    LaneFile empty;
    const PlotSet e = render_plots(empty);
    CHECK_FALSE(e.warnings.empty());
    CHECK(e.bev.find("<polyline") == std::string::npos);
}

TEST_CASE("cli usage errors") {
    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"synth", "--bogus", "-o", "x"}).code == cli::kExitUsage);
    CHECK(run({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run({"--help"}).code == cli::kExitOk);
    CHECK(run({"calibrate", "/nonexistent.lanes"}).code == cli::kExitInvalid);

    TempDir dir;
    CHECK(run({"synth", "--profile", "hilly", "-o", dir / "x.lanes"}).code == cli::kExitInvalid);
    CHECK(run({"synth", "--pitch", "7", "-o", dir / "x.lanes"}).code == cli::kExitInvalid);
}

TEST_CASE("cli synth is deterministic and calibrate recovers the pitch") {
    TempDir dir;
    const Run a = run({"synth", "--profile", "flat", "--seed", "7", "--pitch", "1", "-o", dir / "a.lanes"});
    const Run b = run({"synth", "--profile", "flat", "--seed", "7", "--pitch", "1", "-o", dir / "b.lanes"});
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "a.lanes") == slurp(dir / "b.lanes"));

    const Run c = run({"calibrate", dir / "a.lanes"});
    REQUIRE(c.code == 0);
    const auto kv = parse_report(c.out);
    CHECK(std::abs(std::stod(kv.at("pitch_deg")) - 1.0) <= 0.11);
}

TEST_CASE("cli pipeline on an uphill scene") {
    TempDir dir;
    REQUIRE(run({"synth", "--profile", "uphill", "--seed", "7", "-o", dir / "s.lanes"}).code == 0);
    REQUIRE(run({"encode", dir / "s.lanes", "-o", dir / "e.lanes"}).code == 0);

    const Run fit = run({"fit", dir / "e.lanes", "--mode", "ws", "-o", dir / "f.lanes"});
    REQUIRE(fit.code == 0);
    CHECK(std::stod(parse_report(fit.out).at("z_rms_closed_form")) <= 1e-3);

    const Run loss = run({"loss", dir / "e.lanes", "--gt", dir / "e.lanes"});
    REQUIRE(loss.code == 0);
    // Files hold nine significant digits.
    CHECK(std::stod(parse_report(loss.out).at("l_width")) < 1e-5);

    const Run nms = run({"nms", dir / "f.lanes", "-o", dir / "n.lanes"});
    REQUIRE(nms.code == 0);
    CHECK(parse_report(nms.out).at("suppressed") == "0");

    const Run ev = run({"eval", dir / "n.lanes", dir / "s.lanes"});
    REQUIRE(ev.code == 0);
    const auto kv = parse_report(ev.out);
    CHECK(std::stod(kv.at("f_score")) == 100.0);

    const Run plot = run({"plot", dir / "s.lanes", "--pred", dir / "f.lanes", "-o", dir / "p"});
    REQUIRE(plot.code == 0);
    CHECK(fs::exists(dir / "p.front.svg"));
    CHECK(fs::exists(dir / "p.bev.svg"));
    CHECK(fs::exists(dir / "p.elevation.svg"));

    CHECK(run({"loss", dir / "e.lanes", "--weights", "bev=abc"}).code == cli::kExitInvalid);
}

TEST_CASE("cli fork encode reports a second layer") {
    TempDir dir;
    REQUIRE(run({"synth", "--profile", "fork", "-o", dir / "s.lanes"}).code == 0);
    const Run e = run({"encode", dir / "s.lanes", "-o", dir / "e.lanes"});
    REQUIRE(e.code == 0);
    CHECK(parse_report(e.out).at("layer2") == "1");
}
