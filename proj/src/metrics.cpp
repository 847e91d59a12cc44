#include "lane3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lane3d {

namespace {

constexpr double kUnmatchable = 1e9;

struct PairStats {
    bool matchable = false;
    double cost = 0.0;
};

PairStats pair_stats(const std::vector<LaneSample>& p, const std::vector<LaneSample>& g,
                     const MetricConfig& cfg) {
    std::size_t mutual = 0, close = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (!p[k].visible || !g[k].visible) continue;
        const double d = std::hypot(p[k].x - g[k].x, p[k].z - g[k].z);
        ++mutual;
        sum += d;
        if (d < cfg.dist_thresh) ++close;
    }
    PairStats s;
    if (mutual == 0) return s;
    s.cost = sum / static_cast<double>(mutual);
    s.matchable = static_cast<double>(close) >= cfg.min_coverage * static_cast<double>(mutual);
    return s;
}

std::vector<std::vector<LaneSample>> sample_all(std::span<const Lane3D> lanes,
                                                const MetricConfig& cfg) {
    std::vector<std::vector<LaneSample>> out;
    out.reserve(lanes.size());
    for (const auto& l : lanes) out.push_back(resample_at_y(l, cfg.y_grid));
    return out;
}

std::vector<LaneMatch> match_sampled(const std::vector<std::vector<LaneSample>>& pred,
                                     const std::vector<std::vector<LaneSample>>& gt,
                                     const MetricConfig& cfg) {
    if (pred.empty() || gt.empty()) return {};
    std::vector<std::vector<double>> cost(pred.size(), std::vector<double>(gt.size()));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = 0; j < gt.size(); ++j) {
            const PairStats s = pair_stats(pred[i], gt[j], cfg);
            cost[i][j] = s.matchable ? s.cost : kUnmatchable;
        }
    }
    std::vector<LaneMatch> out;
    for (const auto& [i, j] : min_cost_assignment(cost)) {
        if (cost[i][j] < kUnmatchable) out.push_back({i, j, cost[i][j]});
    }
    std::sort(out.begin(), out.end(),
              [](const LaneMatch& a, const LaneMatch& b) { return a.gt < b.gt; });
    return out;
}

std::vector<Point3> visible_points(const std::vector<LaneSample>& s, const MetricConfig& cfg) {
    std::vector<Point3> out;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (s[k].visible) out.push_back({s[k].x, cfg.y_grid[k], s[k].z});
    }
    return out;
}

double ratio_pct(std::size_t num, std::size_t den) {
    return den ? 100.0 * static_cast<double>(num) / static_cast<double>(den) : 100.0;
}

double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

MetricConfig MetricConfig::make_default() {
    MetricConfig c;
    for (int k = 0; k <= 100; ++k) c.y_grid.push_back(k);
    return c;
}

std::vector<std::pair<std::size_t, std::size_t>> min_cost_assignment(
    const std::vector<std::vector<double>>& cost) {
    const std::size_t rows = cost.size();
    if (rows == 0 || cost[0].empty()) return {};
    const std::size_t cols = cost[0].size();
    if (rows > cols) {
        std::vector<std::vector<double>> tr(cols, std::vector<double>(rows));
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) tr[j][i] = cost[i][j];
        auto out = min_cost_assignment(tr);
        for (auto& [a, b] : out) std::swap(a, b);
        std::sort(out.begin(), out.end());
        return out;
    }

    // Shortest augmenting path Hungarian method, 1-based potentials.
    const double inf = std::numeric_limits<double>::infinity();
    const std::size_t n = rows, m = cols;
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<bool> used(m + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t j = 1; j <= m; ++j) {
        if (p[j] != 0) out.emplace_back(p[j] - 1, j - 1);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<LaneMatch> match_lanes(std::span<const Lane3D> pred, std::span<const Lane3D> gt,
                                   const MetricConfig& cfg) {
    return match_sampled(sample_all(pred, cfg), sample_all(gt, cfg), cfg);
}

double chamfer_distance(std::span<const Point3> a, std::span<const Point3> b) {
    if (a.empty() || b.empty()) return 0.0;
    auto directed = [](std::span<const Point3> from, std::span<const Point3> to) {
        double sum = 0.0;
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                best = std::min(best, std::sqrt((p.x - q.x) * (p.x - q.x) +
                                                (p.y - q.y) * (p.y - q.y) +
                                                (p.z - q.z) * (p.z - q.z)));
            }
            sum += best;
        }
        return sum / static_cast<double>(from.size());
    };
    return 0.5 * (directed(a, b) + directed(b, a));
}

EvalReport evaluate(std::span<const ScoredLane> pred, std::span<const Lane3D> gt,
                    const MetricConfig& cfg) {
    std::vector<double> scores;
    for (const auto& p : pred) scores.push_back(p.score);
    const auto gt_samples = sample_all(gt, cfg);

    std::vector<std::vector<LaneSample>> all_pred;
    for (const auto& p : pred) all_pred.push_back(resample_at_y(p.lane, cfg.y_grid));

    auto select = [&](double threshold) {
        std::vector<std::vector<LaneSample>> sel;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i].score >= threshold) {
                sel.push_back(all_pred[i]);
                idx.push_back(i);
            }
        }
        return std::make_pair(std::move(sel), std::move(idx));
    };

    EvalReport rep;
    rep.n_gt = gt.size();
    {
        auto [sel, idx] = select(cfg.score_threshold);
        auto matches = match_sampled(sel, gt_samples, cfg);
        rep.n_pred = sel.size();
        rep.n_matched = matches.size();
        rep.precision = ratio_pct(matches.size(), sel.size());
        rep.recall = ratio_pct(matches.size(), gt.size());
        rep.f_score = f_measure(rep.precision, rep.recall);

        double xn = 0, xf = 0, zn = 0, zf = 0, cd = 0;
        std::size_t nn = 0, nf = 0;
        for (auto& m : matches) {
            const auto& ps = sel[m.pred];
            const auto& gs = gt_samples[m.gt];
            for (std::size_t k = 0; k < cfg.y_grid.size(); ++k) {
                if (!ps[k].visible || !gs[k].visible) continue;
                const double dx = std::abs(ps[k].x - gs[k].x);
                const double dz = std::abs(ps[k].z - gs[k].z);
                if (cfg.y_grid[k] < cfg.near_far_y) {
                    xn += dx;
                    zn += dz;
                    ++nn;
                } else {
                    xf += dx;
                    zf += dz;
                    ++nf;
                }
            }
            cd += chamfer_distance(visible_points(ps, cfg), visible_points(gs, cfg));
            m.pred = idx[m.pred];
        }
        if (nn) {
            rep.x_err_near = xn / nn;
            rep.z_err_near = zn / nn;
        }
        if (nf) {
            rep.x_err_far = xf / nf;
            rep.z_err_far = zf / nf;
        }
        if (!matches.empty()) rep.cd_error = cd / static_cast<double>(matches.size());
        rep.matches = std::move(matches);
    }

    // Step-wise area under the precision-recall curve over score thresholds.
    if (gt.empty()) {
        rep.ap = pred.empty() ? 100.0 : 0.0;
    } else {
        std::sort(scores.begin(), scores.end(), std::greater<>());
        scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
        double ap = 0.0, prev_recall = 0.0;
        for (double t : scores) {
            auto [sel, idx] = select(t);
            const auto m = match_sampled(sel, gt_samples, cfg);
            const double r = ratio_pct(m.size(), gt.size());
            const double p = ratio_pct(m.size(), sel.size());
            ap += (r - prev_recall) / 100.0 * p;
            prev_recall = r;
        }
        rep.ap = std::clamp(ap, 0.0, 100.0);
    }
    return rep;
}

EvalReport evaluate(std::span<const Lane3D> pred, std::span<const Lane3D> gt,
                    const MetricConfig& cfg) {
    std::vector<ScoredLane> scored;
    for (const auto& l : pred) scored.push_back({l, 1.0});
    return evaluate(std::span<const ScoredLane>(scored), gt, cfg);
}

}  // namespace lane3d
