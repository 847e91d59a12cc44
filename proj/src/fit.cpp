#include "lane3d/fit.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <functional>
#include <string>

#include "lane3d/error.hpp"

namespace lane3d {

namespace {

using Evaluate = std::function<double(const std::vector<double>& x, std::vector<double>& grad,
                                      const Penalty& penalty)>;

struct Param {
    std::size_t slot;
    std::size_t step;
};

struct Progress {
    std::vector<double> trace;
    std::vector<std::size_t> stage_starts;
    int iterations = 0;
};

std::string trace_tail(const std::vector<double>& trace) {
    std::string s;
    const std::size_t from = trace.size() > 10 ? trace.size() - 10 : 0;
    for (std::size_t i = from; i < trace.size(); ++i) s += " " + std::to_string(trace[i]);
    return s;
}

// Gradient descent on one penalty: the step grows by 10% after an accepted
// move and halves after a rejected one.
void run_stage(const Evaluate& eval, std::vector<double>& x, const Penalty& penalty,
               const FitConfig& cfg, double& lr, Progress& prog) {
    prog.stage_starts.push_back(prog.trace.size());
    std::vector<double> g(x.size()), gn(x.size()), xn(x.size());
    double f = eval(x, g, penalty);
    if (!std::isfinite(f)) throw Error(ErrorKind::Diverged, "objective is not finite at start");
    int rejects = 0;
    int rises = 0;
    double f_check = f;
    int it_check = prog.iterations;
    while (prog.iterations < cfg.steps) {
        if (f <= cfg.tol) break;
        double g2 = 0.0;
        for (double v : g) g2 += v * v;
        if (g2 == 0.0) break;

        ++prog.iterations;
        for (std::size_t i = 0; i < x.size(); ++i) xn[i] = x[i] - lr * g[i];
        const double fn = eval(xn, gn, penalty);
        if (cfg.backtracking) {
            if (!(std::isfinite(fn) && fn <= f)) {
                lr *= 0.5;
                if (++rejects > 60) break;
                continue;
            }
            rejects = 0;
            lr = std::min(lr * 1.1, 1e3);
        } else {
            if (!std::isfinite(fn)) {
                throw Error(ErrorKind::Diverged, "objective became non-finite:" +
                                                     trace_tail(prog.trace));
            }
            rises = fn > f ? rises + 1 : 0;
            if (rises >= 10) {
                prog.trace.push_back(fn);
                throw Error(ErrorKind::Diverged,
                            "objective rose on 10 consecutive steps:" + trace_tail(prog.trace));
            }
        }
        x.swap(xn);
        g.swap(gn);
        f = fn;
        prog.trace.push_back(f);

        if (prog.iterations - it_check >= 2000) {
            if (f_check - f <= 1e-7 * f_check) break;
            f_check = f;
            it_check = prog.iterations;
        }
    }
}

// Limited-memory BFGS direction with a halving Armijo line search. Falls
// back to the scaled gradient whenever the curvature memory is empty.
void run_lbfgs_stage(const Evaluate& eval, std::vector<double>& x, const Penalty& penalty,
                     const FitConfig& cfg, double& lr, Progress& prog) {
    prog.stage_starts.push_back(prog.trace.size());
    const std::size_t n = x.size();
    std::vector<double> g(n), gn(n), xn(n), d(n);
    double f = eval(x, g, penalty);
    if (!std::isfinite(f)) throw Error(ErrorKind::Diverged, "objective is not finite at start");
    std::deque<std::vector<double>> S, Y;
    std::deque<double> rho;
    double f_check = f;
    int it_check = prog.iterations;

    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };

    while (prog.iterations < cfg.steps) {
        if (f <= cfg.tol) break;
        if (dot(g, g) == 0.0) break;

        d = g;
        std::vector<double> alpha(S.size());
        for (std::size_t k = S.size(); k-- > 0;) {
            alpha[k] = rho[k] * dot(S[k], d);
            for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * Y[k][i];
        }
        const double gamma = S.empty() ? lr : dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
        for (double& v : d) v *= gamma;
        for (std::size_t k = 0; k < S.size(); ++k) {
            const double beta = rho[k] * dot(Y[k], d);
            for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - beta) * S[k][i];
        }
        for (double& v : d) v = -v;
        double slope = dot(g, d);
        if (!(slope < 0.0)) {
            S.clear();
            Y.clear();
            rho.clear();
            for (std::size_t i = 0; i < n; ++i) d[i] = -lr * g[i];
            slope = dot(g, d);
        }

        double t = 1.0;
        double fn = 0.0;
        bool accepted = false;
        for (int halvings = 0; halvings <= 60 && prog.iterations < cfg.steps; ++halvings) {
            ++prog.iterations;
            for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + t * d[i];
            fn = eval(xn, gn, penalty);
            if (std::isfinite(fn) && fn <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (S.empty()) break;
            S.clear();
            Y.clear();
            rho.clear();
            continue;
        }

        std::vector<double> s(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = xn[i] - x[i];
            y[i] = gn[i] - g[i];
        }
        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (S.size() > static_cast<std::size_t>(cfg.lbfgs_memory)) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        if (S.empty()) lr *= t;
        x.swap(xn);
        g.swap(gn);
        const double f_prev = f;
        f = fn;
        prog.trace.push_back(f);
        if (f_prev - f <= 1e-15 * std::abs(f_prev) && S.empty()) break;

        if (prog.iterations - it_check >= 2000) {
            if (f_check - f <= 1e-7 * f_check) break;
            f_check = f;
            it_check = prog.iterations;
        }
    }
}

void minimize_into(const Evaluate& eval, std::vector<double>& x, const FitConfig& cfg,
                   bool continuation, double& lr, Progress& prog) {
    const bool lbfgs = cfg.method == FitMethod::Lbfgs && cfg.backtracking;
    auto stage = [&](const Penalty& p) {
        if (lbfgs) {
            run_lbfgs_stage(eval, x, p, cfg, lr, prog);
        } else {
            run_stage(eval, x, p, cfg, lr, prog);
        }
    };
    if (continuation && cfg.penalty.kind == PenaltyKind::L1) {
        for (double delta : {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
            stage(Penalty{PenaltyKind::SmoothL1, delta});
        }
    } else {
        stage(cfg.penalty);
    }
}

Progress minimize(const Evaluate& eval, std::vector<double>& x, const FitConfig& cfg,
                  bool continuation) {
    Progress prog;
    double lr = cfg.learning_rate;
    minimize_into(eval, x, cfg, continuation, lr, prog);
    return prog;
}

}  // namespace

void FitConfig::validate() const {
    if (steps < 1) throw Error(ErrorKind::InvalidInput, "steps must be at least 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidInput, "learning rate must be positive");
    if (grow_steps < 0) throw Error(ErrorKind::InvalidInput, "grow_steps must be nonnegative");
    if (lbfgs_memory < 1) throw Error(ErrorKind::InvalidInput, "lbfgs memory must be at least 1");
    if (penalty.kind == PenaltyKind::SmoothL1 && !(penalty.delta > 0.0)) {
        throw Error(ErrorKind::InvalidInput, "smooth-L1 delta must be positive");
    }
}

std::vector<double> closed_form_z(std::span<const double> bev_widths, double height_m) {
    if (bev_widths.empty()) return {};
    for (double w : bev_widths) {
        if (!(w > 0.0)) throw Error(ErrorKind::InvalidInput, "flat-ground widths must be positive");
    }
    std::vector<double> z;
    z.reserve(bev_widths.size());
    for (double w : bev_widths) z.push_back(height_m * (1.0 - bev_widths[0] / w));
    return z;
}

AnchorTensor closed_form_oracle(const AnchorTensor& t, const CameraPose& pose) {
    const auto mask = second_layer_mask(t);
    const auto active = active_slots(t);
    const std::size_t steps = t.grid().step_count();
    std::vector<std::vector<double>> sum(t.lanes().size(), std::vector<double>(steps, 0.0));
    std::vector<std::vector<int>> count(t.lanes().size(), std::vector<int>(steps, 0));
    std::vector<std::size_t> lanes;
    for (std::size_t s : active) {
        if (!mask[AnchorTensor::anchor_of(s)]) lanes.push_back(s);
    }
    for (std::size_t p = 0; p + 1 < lanes.size(); ++p) {
        const std::size_t a = lanes[p], b = lanes[p + 1];
        std::vector<double> widths;
        std::vector<std::size_t> idx;
        for (std::size_t j = 0; j < steps; ++j) {
            if (t.lanes()[a].vis[j] < 0.5 || t.lanes()[b].vis[j] < 0.5) continue;
            widths.push_back(t.x_flat(b, j) - t.x_flat(a, j));
            idx.push_back(j);
        }
        const auto z = closed_form_z(widths, pose.height_m);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            for (std::size_t s : {a, b}) {
                sum[s][idx[k]] += z[k];
                ++count[s][idx[k]];
            }
        }
    }

    AnchorTensor out = t;
    for (std::size_t s = 0; s < out.lanes().size(); ++s) {
        for (std::size_t j = 0; j < steps; ++j) {
            out.lanes()[s].z[j] = count[s][j] ? sum[s][j] / count[s][j] : 0.0;
            if (!count[s][j]) out.lanes()[s].vis[j] = 0.0;
        }
    }
    return out;
}

std::pair<double, std::size_t> z_rms(const AnchorTensor& fitted, const AnchorTensor& reference,
                                     bool weak_only) {
    const auto mask = second_layer_mask(reference);
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t s : active_slots(reference)) {
        if (weak_only && mask[AnchorTensor::anchor_of(s)]) continue;
        const AnchorLane& ref = reference.lanes()[s];
        for (std::size_t j = 0; j < ref.z.size(); ++j) {
            if (ref.vis[j] < 0.5) continue;
            const double d = fitted.lanes()[s].z[j] - ref.z[j];
            ss += d * d;
            ++n;
        }
    }
    return {n ? std::sqrt(ss / n) : 0.0, n};
}

FitReport fit_ws(const AnchorTensor& gt_bev, const CameraPose& pose, const FitConfig& cfg,
                 const AnchorTensor* truth) {
    cfg.validate();
    gt_bev.validate();
    pose.validate();

    AnchorTensor work = gt_bev;
    for (auto& l : work.lanes()) std::fill(l.z.begin(), l.z.end(), 0.0);
    const auto mask = second_layer_mask(gt_bev);

    std::vector<Param> params;
    for (std::size_t s : active_slots(work)) {
        bool pinned = false;
        const AnchorLane& l = work.lanes()[s];
        for (std::size_t j = 0; j < l.vis.size(); ++j) {
            if (l.vis[j] < 0.5) continue;
            if (!pinned) {
                pinned = true;  // gauge: nearest visible point stays on the ground
                continue;
            }
            params.push_back({s, j});
        }
    }

    // The objective sees only steps up to `frontier`; the rest are hidden.
    std::size_t frontier = gt_bev.grid().step_count();
    std::vector<Param> live;
    auto reveal = [&](std::size_t last) {
        frontier = last;
        for (std::size_t s = 0; s < work.lanes().size(); ++s) {
            for (std::size_t j = 0; j < work.grid().step_count(); ++j) {
                work.lanes()[s].vis[j] = j <= last ? gt_bev.lanes()[s].vis[j] : 0.0;
            }
        }
        live.clear();
        for (const Param& p : params) {
            if (p.step <= last) live.push_back(p);
        }
    };

    const Evaluate eval = [&](const std::vector<double>& x, std::vector<double>& grad,
                              const Penalty& penalty) {
        for (std::size_t i = 0; i < live.size(); ++i) {
            work.lanes()[live[i].slot].z[live[i].step] = x[i];
        }
        LossOptions opts = cfg.loss;
        opts.penalty = penalty;
        double f = 0.0;
        try {
            const LossTerm w = width_loss(work, pose, mask, opts);
            const LossTerm h = height_loss(work, mask, opts);
            f = cfg.weights.width * w.value + cfg.weights.height * h.value;
            for (std::size_t i = 0; i < live.size(); ++i) {
                const auto [s, j] = live[i];
                grad[i] = cfg.weights.width * w.grad.slots[s].z[j] +
                          cfg.weights.height * h.grad.slots[s].z[j];
            }
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateSegment) throw;
            f = std::numeric_limits<double>::infinity();
        }
        return f;
    };

    // Heights are recovered near to far: each block of newly revealed steps
    // starts from a linear extrapolation of the already fitted near field.
    Progress prog;
    double lr = cfg.learning_rate;
    const std::size_t steps = gt_bev.grid().step_count();
    const std::size_t grow = cfg.grow_steps > 0 ? static_cast<std::size_t>(cfg.grow_steps) : steps;
    for (std::size_t last = std::min(grow, steps) - 1;; last = std::min(last + grow, steps - 1)) {
        const std::size_t before = frontier == steps ? 0 : frontier + 1;
        reveal(last);
        for (const Param& p : live) {
            if (p.step < before) continue;
            const AnchorLane& l = work.lanes()[p.slot];
            const auto& ys = work.grid().y_steps;
            std::size_t j2 = p.step, j1 = p.step;
            for (std::size_t j = p.step; j-- > 0;) {
                if (l.vis[j] < 0.5 || j >= before) continue;
                if (j2 == p.step) j2 = j;
                else { j1 = j; break; }
            }
            double z = 0.0;
            if (j2 != p.step && j1 != p.step) {
                z = l.z[j2] + (ys[p.step] - ys[j2]) * (l.z[j2] - l.z[j1]) / (ys[j2] - ys[j1]);
            } else if (j2 != p.step) {
                z = l.z[j2];
            }
            work.lanes()[p.slot].z[p.step] = z;
        }
        std::vector<double> x;
        for (const Param& p : live) x.push_back(work.lanes()[p.slot].z[p.step]);
        const bool final_block = last == steps - 1;
        if (final_block) {
            minimize_into(eval, x, cfg, /*continuation=*/true, lr, prog);
        } else {
            FitConfig coarse = cfg;
            coarse.penalty = Penalty{PenaltyKind::SmoothL1, 1.0};
            minimize_into(eval, x, coarse, /*continuation=*/false, lr, prog);
        }
        for (std::size_t i = 0; i < live.size(); ++i) {
            work.lanes()[live[i].slot].z[live[i].step] = x[i];
        }
        if (final_block) break;
    }

    FitReport rep;
    LossOptions exact = cfg.loss;
    exact.penalty = cfg.penalty;
    rep.final = total_ws(work, gt_bev, pose, cfg.weights, std::nullopt, exact);
    const auto [cf_rms, n] = z_rms(work, closed_form_oracle(gt_bev, pose), true);
    rep.z_rms_closed_form = cf_rms;
    rep.z_points = n;
    if (truth) rep.z_rms_truth = z_rms(work, *truth, true).first;
    rep.fitted = std::move(work);
    rep.trace = std::move(prog.trace);
    rep.stage_starts = std::move(prog.stage_starts);
    rep.iterations = prog.iterations;
    return rep;
}

FitReport fit_sup(const AnchorTensor& gt, const FitConfig& cfg) {
    cfg.validate();
    gt.validate();
    AnchorTensor work = gt;
    for (auto& l : work.lanes()) std::fill(l.z.begin(), l.z.end(), 0.0);

    std::vector<Param> params;
    for (std::size_t s = 0; s < work.lanes().size(); ++s) {
        for (std::size_t j = 0; j < work.grid().step_count(); ++j) params.push_back({s, j});
    }
    const Evaluate eval = [&](const std::vector<double>& x, std::vector<double>& grad,
                              const Penalty& penalty) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            work.lanes()[params[i].slot].z[params[i].step] = x[i];
        }
        LossOptions opts = cfg.loss;
        opts.penalty = penalty;
        const LossTerm z = z_loss(work, gt, opts);
        for (std::size_t i = 0; i < params.size(); ++i) {
            grad[i] = cfg.weights.z * z.grad.slots[params[i].slot].z[params[i].step];
        }
        return cfg.weights.z * z.value;
    };

    std::vector<double> x(params.size(), 0.0);
    Progress prog = minimize(eval, x, cfg, /*continuation=*/false);
    for (std::size_t i = 0; i < params.size(); ++i) {
        work.lanes()[params[i].slot].z[params[i].step] = x[i];
    }

    FitReport rep;
    LossOptions exact = cfg.loss;
    exact.penalty = cfg.penalty;
    rep.final = total_sup(work, gt, cfg.weights, std::nullopt, exact);
    const auto [rms, n] = z_rms(work, gt, false);
    rep.z_rms_truth = rms;
    rep.z_points = n;
    rep.fitted = std::move(work);
    rep.trace = std::move(prog.trace);
    rep.stage_starts = std::move(prog.stage_starts);
    rep.iterations = prog.iterations;
    return rep;
}

}  // namespace lane3d
