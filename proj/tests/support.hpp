#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "lane3d/anchors.hpp"
#include "lane3d/losses.hpp"
#include "lane3d/scenes.hpp"

namespace lane3d::testing {

struct SceneTensor {
    SceneSample sample;
    AnchorTensor gt;
};

inline SceneTensor scene_tensor(SceneSpec spec) {
    SceneTensor out;
    out.sample = make_scene(spec);
    out.gt = encode_gt(out.sample.lanes_bev, AnchorGridSpec::make_default());
    return out;
}

inline SceneTensor scene_tensor(Profile p, std::uint64_t seed) {
    SceneSpec spec = SceneSpec::defaults(p);
    spec.seed = seed;
    return scene_tensor(spec);
}

inline double dist3(const Point3& a, const Point3& b) {
    return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z);
}

/// Exact distance from p to a segment: foot of the perpendicular clamped to the ends.
inline double point_segment_distance(const Point3& p, const Point3& a, const Point3& b) {
    const double dx = b.x - a.x, dy = b.y - a.y, dz = b.z - a.z;
    const double len2 = dx * dx + dy * dy + dz * dz;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy + (p.z - a.z) * dz) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return dist3(p, {a.x + t * dx, a.y + t * dy, a.z + t * dz});
}

inline double point_polyline_distance(const Point3& p, std::span<const Point3> line) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
    }
    return best;
}

/// Distance from p to a smooth curve c(s), s in [lo, hi]: dense scan, then
/// golden-section refinement around the best sample.
inline double point_curve_distance(const Point3& p, const std::function<Point3(double)>& c, double lo,
                                   double hi, int samples = 4000) {
    auto d = [&](double s) { return dist3(p, c(s)); };
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    const double ds = (hi - lo) / samples;
    for (int i = 0; i <= samples; ++i) {
        const double v = d(lo + i * ds);
        if (v < best_d) {
            best_d = v;
            best = i;
        }
    }
    double a = lo + std::max(best - 1, 0) * ds, b = lo + std::min(best + 1, samples) * ds;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double m1 = b - g * (b - a), m2 = a + g * (b - a);
        if (d(m1) < d(m2)) {
            b = m2;
        } else {
            a = m1;
        }
    }
    return std::min(best_d, d(0.5 * (a + b)));
}

// Finite differences over selected tensor entries.

enum class Field { X, Z, Vis, Prob };

struct ParamRef {
    std::size_t slot = 0;
    Field field = Field::Z;
    std::size_t step = 0;
};

inline double& entry(AnchorTensor& t, const ParamRef& r) {
    AnchorLane& l = t.lanes()[r.slot];
    switch (r.field) {
        case Field::X: return l.x_offsets[r.step];
        case Field::Z: return l.z[r.step];
        case Field::Vis: return l.vis[r.step];
        case Field::Prob: return l.prob;
    }
    return l.prob;
}

inline double entry(const TensorGrad& g, const ParamRef& r) {
    const SlotGrad& s = g.slots[r.slot];
    switch (r.field) {
        case Field::X: return s.x[r.step];
        case Field::Z: return s.z[r.step];
        case Field::Vis: return s.vis[r.step];
        case Field::Prob: return s.prob;
    }
    return s.prob;
}

/// max |analytic - central difference| / max(1, max |central difference|).
inline double fd_relative_error(const std::function<LossTerm(const AnchorTensor&)>& loss,
                                const AnchorTensor& at, std::span<const ParamRef> refs,
                                double step = 1e-6) {
    const LossTerm base = loss(at);
    AnchorTensor t = at;
    double worst = 0.0, scale = 1.0;
    for (const ParamRef& r : refs) {
        const double x0 = entry(t, r);
        entry(t, r) = x0 + step;
        const double fp = loss(t).value;
        entry(t, r) = x0 - step;
        const double fm = loss(t).value;
        entry(t, r) = x0;
        const double fd = (fp - fm) / (2.0 * step);
        worst = std::max(worst, std::abs(entry(base.grad, r) - fd));
        scale = std::max(scale, std::abs(fd));
    }
    return worst / scale;
}

// Brute-force suppression: the kept set is the unique subset K of candidates
// such that a candidate is in K exactly when no member of K with strictly
// higher probability lies closer than the threshold.
inline std::vector<std::size_t> brute_force_nms(const AnchorTensor& t, double d_thresh) {
    std::vector<std::size_t> cand;
    for (std::size_t a = 0; a < t.grid().anchor_count(); ++a) {
        const std::size_t s = AnchorTensor::slot_index(a, 1);
        if (t.lanes()[s].prob > 0.0) cand.push_back(s);
    }
    const std::size_t n = cand.size();
    std::vector<std::vector<bool>> close(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            if (i == k) continue;
            double sum = 0.0;
            int m = 0;
            for (std::size_t j = 0; j < t.grid().step_count(); ++j) {
                if (t.lanes()[cand[i]].vis[j] >= 0.5 && t.lanes()[cand[k]].vis[j] >= 0.5) {
                    sum += std::abs(t.x_flat(cand[i], j) - t.x_flat(cand[k], j));
                    ++m;
                }
            }
            close[i][k] = m > 0 && sum / m < d_thresh;
        }
    }
    std::vector<std::size_t> found;
    int solutions = 0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            bool beaten = false;
            for (std::size_t k = 0; k < n; ++k) {
                if ((mask >> k & 1) && close[i][k] &&
                    t.lanes()[cand[k]].prob > t.lanes()[cand[i]].prob) {
                    beaten = true;
                }
            }
            ok = ((mask >> i & 1) != 0) == !beaten;
        }
        if (!ok) continue;
        ++solutions;
        found.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (mask >> i & 1) found.push_back(cand[i]);
        }
    }
    if (solutions != 1) return {static_cast<std::size_t>(-1)};
    std::sort(found.begin(), found.end());
    return found;
}

inline std::vector<std::size_t> surviving_layer1(const AnchorTensor& t) {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < t.grid().anchor_count(); ++a) {
        const std::size_t s = AnchorTensor::slot_index(a, 1);
        if (t.lanes()[s].prob > 0.0) out.push_back(s);
    }
    return out;
}

/// Random tensor on the default grid with `active` nonzero layer-1 slots
/// clustered so that some pairs fall under the default 0.05 m threshold.
inline AnchorTensor random_nms_tensor(std::mt19937_64& rng, std::size_t active) {
    AnchorTensor t(AnchorGridSpec::make_default());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::size_t> anchors(t.grid().anchor_count());
    std::iota(anchors.begin(), anchors.end(), 0);
    std::shuffle(anchors.begin(), anchors.end(), rng);
    anchors.resize(active);
    const double base = -0.5 + u(rng);
    for (std::size_t a : anchors) {
        AnchorLane& l = t.slot(a, 1);
        l.prob = 0.05 + 0.95 * u(rng);
        const double target = base + 0.12 * u(rng);
        const double slope = 0.002 * (u(rng) - 0.5);
        for (std::size_t j = 0; j < t.grid().step_count(); ++j) {
            l.x_offsets[j] = target - t.grid().x_centers[a] + slope * t.grid().y_steps[j];
            l.vis[j] = u(rng) < 0.85 ? 1.0 : 0.0;
        }
    }
    return t;
}

/// Minimum summed cost over all injective row-to-column maps (rows <= cols).
inline double brute_force_assignment_cost(const std::vector<std::vector<double>>& cost) {
    const std::size_t rows = cost.size(), cols = cost.empty() ? 0 : cost[0].size();
    std::vector<std::size_t> perm(cols);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t r = 0; r < rows; ++r) c += cost[r][perm[r]];
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Random evaluation points for the loss gradients.

enum class LossUnderTest { Width, Height, Bev, Z };

struct LossPoint {
    AnchorTensor pred, gt;
    CameraPose pose;
    std::vector<ParamRef> refs;
};

/// Perturbs a generated scene tensor. Width and height points keep the
/// labelled probabilities and visibility so the lane set is unchanged; bev
/// points also draw probabilities and visibilities inside (0, 1).
inline LossPoint random_loss_point(std::mt19937_64& rng, LossUnderTest which, std::size_t n_refs = 40) {
    static const Profile profiles[] = {Profile::Flat, Profile::Uphill, Profile::Downhill,
                                       Profile::Bend, Profile::Fork, Profile::Curb};
    const Profile p = profiles[rng() % 6];
    const SceneTensor st = scene_tensor(p, rng() % 1000);
    LossPoint out{st.gt, st.gt, st.sample.pose, {}};
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    const bool bev = which == LossUnderTest::Bev;
    std::vector<ParamRef> pool;
    for (std::size_t s = 0; s < out.pred.lanes().size(); ++s) {
        AnchorLane& l = out.pred.lanes()[s];
        if (bev) l.prob = l.prob > 0.0 ? 0.5 + 0.45 * u(rng) : 0.45 * u(rng);
        if (st.gt.lanes()[s].prob == 0.0) {
            if (bev) pool.push_back({s, Field::Prob, 0});
            continue;
        }
        if (bev) pool.push_back({s, Field::Prob, 0});
        for (std::size_t j = 0; j < l.z.size(); ++j) {
            l.z[j] += 0.05 * n(rng);
            l.x_offsets[j] += 0.1 * n(rng);
            if (bev) l.vis[j] = u(rng);
            if (st.gt.lanes()[s].vis[j] < 0.5 && !bev) continue;
            switch (which) {
                case LossUnderTest::Width:
                    pool.push_back({s, Field::X, j});
                    pool.push_back({s, Field::Z, j});
                    break;
                case LossUnderTest::Height:
                case LossUnderTest::Z:
                    pool.push_back({s, Field::Z, j});
                    break;
                case LossUnderTest::Bev:
                    pool.push_back({s, Field::X, j});
                    pool.push_back({s, Field::Vis, j});
                    break;
            }
        }
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    if (pool.size() > n_refs) pool.resize(n_refs);
    out.refs = std::move(pool);
    return out;
}

inline std::function<LossTerm(const AnchorTensor&)> loss_fn(const LossPoint& lp, LossUnderTest which,
                                                            const LossOptions& opts = {}) {
    switch (which) {
        case LossUnderTest::Width:
            return [&lp, opts](const AnchorTensor& t) {
                return width_loss(t, lp.pose, second_layer_mask(lp.gt), opts);
            };
        case LossUnderTest::Height:
            return [&lp, opts](const AnchorTensor& t) {
                return height_loss(t, second_layer_mask(lp.gt), opts);
            };
        case LossUnderTest::Bev:
            return [&lp, opts](const AnchorTensor& t) { return bev_loss(t, lp.gt, opts); };
        case LossUnderTest::Z:
            return [&lp, opts](const AnchorTensor& t) { return z_loss(t, lp.gt, opts); };
    }
    return {};
}

/// Straight lane through (x0, 0) with slope dx/dy, sampled every `step` meters of y.
inline Lane3D straight_lane(double x0, double slope, double y_max, double step = 1.0,
                            double z_grade = 0.0) {
    std::vector<Point3> pts;
    for (double y = 0.0; y <= y_max + 1e-9; y += step) pts.push_back({x0 + slope * y, y, z_grade * y});
    return Lane3D(std::move(pts));
}

}  // namespace lane3d::testing
