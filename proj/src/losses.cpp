#include "lane3d/losses.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <optional>

#include "lane3d/error.hpp"

namespace lane3d {

namespace {

double sign(double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); }

bool shown(double v) { return v >= 0.5; }

void check_same_grid(const AnchorTensor& a, const AnchorTensor& b) {
    if (a.lanes().size() != b.lanes().size() ||
        a.grid().step_count() != b.grid().step_count()) {
        throw Error(ErrorKind::InvalidInput, "prediction and ground truth grids differ");
    }
}

// Chooses the neighbor-lane chord partner for step j: the previous step when
// visible, otherwise the next one.
// Foot of the perpendicular from P beyond Q by more than this share of the
// chord moves the chord to the next step.
constexpr double kChordSwitch = 0.05;

struct Lifted {
    Point3 p;
    double x_flat, y_flat;
};

Lifted lift(const AnchorTensor& t, std::size_t slot, std::size_t j, double h) {
    const double xf = t.x_flat(slot, j);
    const double yf = t.grid().y_steps[j];
    const double z = t.lanes()[slot].z[j];
    const double s = (h - z) / h;
    return {{xf * s, yf * s, z}, xf, yf};
}

// Pulls a gradient on a lifted 3D point back to the slot's (x offset, z).
void accumulate(SlotGrad& g, std::size_t j, const Lifted& l, const Point3& d, double scale,
                double h) {
    const double z = l.p.z;
    g.x[j] += scale * d.x * (h - z) / h;
    g.z[j] += scale * (-d.x * l.x_flat / h - d.y * l.y_flat / h + d.z);
}

struct PairWidths {
    std::size_t left, right;
    std::vector<bool> valid;
    std::vector<WidthGrad> w;
    std::vector<std::size_t> partner;
    double switch_margin = std::numeric_limits<double>::infinity();
};

// Position of the perpendicular foot of p on line q->r, in chord lengths from q.
double foot_param(const Point3& p, const Point3& q, const Point3& r) {
    const Point3 u{p.x - q.x, p.y - q.y, p.z - q.z};
    const Point3 d{r.x - q.x, r.y - q.y, r.z - q.z};
    const double dd = d.x * d.x + d.y * d.y + d.z * d.z;
    if (!(dd > 0.0)) return 0.0;
    return (u.x * d.x + u.y * d.y + u.z * d.z) / dd;
}

PairWidths pair_widths(const AnchorTensor& t, std::size_t left, std::size_t right, double h) {
    const std::size_t steps = t.grid().step_count();
    PairWidths pw{left, right, std::vector<bool>(steps, false), std::vector<WidthGrad>(steps),
                  std::vector<std::size_t>(steps, 0)};
    const AnchorLane& a = t.lanes()[left];
    const AnchorLane& b = t.lanes()[right];
    for (std::size_t j = 0; j < steps; ++j) {
        if (!shown(a.vis[j]) || !shown(b.vis[j])) continue;
        const bool has_prev = j >= 1 && shown(a.vis[j - 1]);
        const bool has_next = j + 1 < steps && shown(a.vis[j + 1]);
        if (!has_prev && !has_next) continue;
        const Lifted p = lift(t, right, j, h);
        const Lifted q = lift(t, left, j, h);
        std::size_t partner = has_prev ? j - 1 : j + 1;
        if (has_prev && has_next) {
            // Decided on flat ground so the choice does not move with z.
            const Point3 pf{p.x_flat, p.y_flat, 0.0};
            const Point3 qf{q.x_flat, q.y_flat, 0.0};
            const Point3 rf{t.x_flat(left, j - 1), t.grid().y_steps[j - 1], 0.0};
            const double tau = foot_param(pf, qf, rf);
            if (tau < -kChordSwitch) partner = j + 1;
            const double chord = std::hypot(qf.x - rf.x, qf.y - rf.y);
            pw.switch_margin = std::min(pw.switch_margin, std::abs(tau + kChordSwitch) * chord);
        }
        const Lifted r = lift(t, left, partner, h);
        pw.w[j] = lane_width_with_grad(p.p, q.p, r.p);
        pw.partner[j] = partner;
        pw.valid[j] = true;
    }
    return pw;
}

std::vector<std::pair<std::size_t, std::size_t>> adjacent_pairs(const AnchorTensor& t,
                                                                const std::vector<bool>& mask) {
    const auto active = active_slots(t);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t k = 1; k < active.size(); ++k) {
        const std::size_t a = active[k - 1];
        const std::size_t b = active[k];
        if (!mask.empty() &&
            (mask[AnchorTensor::anchor_of(a)] || mask[AnchorTensor::anchor_of(b)])) {
            continue;
        }
        pairs.emplace_back(a, b);
    }
    return pairs;
}

void finish(LossTerm& term, const LossOptions& opts) {
    if (!opts.mean_reduction || term.terms == 0) return;
    const double inv = 1.0 / static_cast<double>(term.terms);
    term.value *= inv;
    for (auto& s : term.grad.slots) {
        for (auto* v : {&s.x, &s.z, &s.vis}) {
            for (double& e : *v) e *= inv;
        }
        s.prob *= inv;
    }
}

void note_kink(LossTerm& term, const Penalty& pen, double r) {
    if (pen.kind == PenaltyKind::L1) term.kink_margin = std::min(term.kink_margin, std::abs(r));
}

}  // namespace

double Penalty::value(double r) const {
    const double a = std::abs(r);
    if (kind == PenaltyKind::SmoothL1 && a < delta) return 0.5 * r * r / delta;
    if (kind == PenaltyKind::SmoothL1) return a - 0.5 * delta;
    return a;
}

double Penalty::slope(double r) const {
    if (kind == PenaltyKind::SmoothL1 && std::abs(r) < delta) return r / delta;
    return sign(r);
}

TensorGrad TensorGrad::zeros_like(const AnchorTensor& t) {
    TensorGrad g;
    const std::size_t steps = t.grid().step_count();
    g.slots.resize(t.lanes().size());
    for (auto& s : g.slots) {
        s.x.assign(steps, 0.0);
        s.z.assign(steps, 0.0);
        s.vis.assign(steps, 0.0);
    }
    return g;
}

void TensorGrad::add_scaled(const TensorGrad& other, double w) {
    if (slots.size() != other.slots.size()) {
        throw Error(ErrorKind::InvalidInput, "gradient shapes differ");
    }
    for (std::size_t s = 0; s < slots.size(); ++s) {
        for (std::size_t j = 0; j < slots[s].x.size(); ++j) {
            slots[s].x[j] += w * other.slots[s].x[j];
            slots[s].z[j] += w * other.slots[s].z[j];
            slots[s].vis[j] += w * other.slots[s].vis[j];
        }
        slots[s].prob += w * other.slots[s].prob;
    }
}

double lane_width(const Point3& p, const Point3& q_j, const Point3& q_prev) {
    return lane_width_with_grad(p, q_j, q_prev).value;
}

WidthGrad lane_width_with_grad(const Point3& p, const Point3& q, const Point3& r) {
    const Point3 u{p.x - q.x, p.y - q.y, p.z - q.z};
    const Point3 d{q.x - r.x, q.y - r.y, q.z - r.z};
    const double chord = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
    if (!(chord > 1e-12)) {
        throw Error(ErrorKind::DegenerateSegment, "neighbor lane segment has zero length");
    }
    const double span = std::sqrt(u.x * u.x + u.y * u.y + u.z * u.z);
    const double along = std::sqrt(d.y * d.y + d.z * d.z);  // chord length with x dropped

    WidthGrad g;
    g.value = span * along / chord;

    const double c_span = along / chord;
    const double c_along = span / chord;
    const double c_chord = -span * along / (chord * chord);

    Point3 d_span{0, 0, 0};
    if (span > 0.0) d_span = {u.x / span, u.y / span, u.z / span};
    Point3 d_along{0, 0, 0};
    if (along > 0.0) d_along = {0.0, d.y / along, d.z / along};
    const Point3 d_chord{d.x / chord, d.y / chord, d.z / chord};

    // span depends on (p, q); along and chord on (q, r).
    g.d_p = {c_span * d_span.x, c_span * d_span.y, c_span * d_span.z};
    const Point3 dq_chordwise{c_along * d_along.x + c_chord * d_chord.x,
                              c_along * d_along.y + c_chord * d_chord.y,
                              c_along * d_along.z + c_chord * d_chord.z};
    g.d_q = {dq_chordwise.x - g.d_p.x, dq_chordwise.y - g.d_p.y, dq_chordwise.z - g.d_p.z};
    g.d_r = {-dq_chordwise.x, -dq_chordwise.y, -dq_chordwise.z};
    return g;
}

std::vector<std::size_t> active_slots(const AnchorTensor& t) {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < t.lanes().size(); ++s) {
        if (t.lanes()[s].prob >= 0.5) out.push_back(s);
    }
    return out;
}

std::vector<bool> second_layer_mask(const AnchorTensor& t) {
    std::vector<bool> mask(t.grid().anchor_count(), false);
    for (std::size_t a = 0; a < mask.size(); ++a) mask[a] = t.slot(a, 2).prob >= 0.5;
    return mask;
}

WidthProfile width_profile_3d(const AnchorTensor& t, const CameraPose& pose) {
    WidthProfile prof;
    for (const auto& [a, b] : adjacent_pairs(t, {})) {
        const PairWidths pw = pair_widths(t, a, b, pose.height_m);
        prof.pairs.emplace_back(a, b);
        std::vector<double> w(pw.w.size(), 0.0);
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (pw.valid[j]) w[j] = pw.w[j].value;
        }
        prof.widths.push_back(std::move(w));
        prof.valid.push_back(pw.valid);
    }
    return prof;
}

LossTerm width_loss(const AnchorTensor& t, const CameraPose& pose, const std::vector<bool>& mask,
                    const LossOptions& opts) {
    const double h = pose.height_m;
    LossTerm term;
    term.grad = TensorGrad::zeros_like(t);
    for (const auto& [a, b] : adjacent_pairs(t, mask)) {
        const PairWidths pw = pair_widths(t, a, b, h);
        term.kink_margin = std::min(term.kink_margin, pw.switch_margin);
        auto push = [&](std::size_t j, double scale) {
            const WidthGrad& wg = pw.w[j];
            accumulate(term.grad.slots[b], j, lift(t, b, j, h), wg.d_p, scale, h);
            accumulate(term.grad.slots[a], j, lift(t, a, j, h), wg.d_q, scale, h);
            accumulate(term.grad.slots[a], pw.partner[j], lift(t, a, pw.partner[j], h), wg.d_r,
                       scale, h);
        };
        for (std::size_t j = 1; j < pw.valid.size(); ++j) {
            if (!pw.valid[j] || !pw.valid[j - 1]) continue;
            const double r = pw.w[j].value - pw.w[j - 1].value;
            term.value += opts.penalty.value(r);
            ++term.terms;
            note_kink(term, opts.penalty, r);
            const double s = opts.penalty.slope(r);
            if (s == 0.0) continue;
            push(j, s);
            push(j - 1, -s);
        }
    }
    finish(term, opts);
    return term;
}

LossTerm height_loss(const AnchorTensor& t, const std::vector<bool>& mask,
                     const LossOptions& opts) {
    LossTerm term;
    term.grad = TensorGrad::zeros_like(t);
    const std::size_t first = opts.height_include_first_step ? 0 : 1;
    for (const auto& [a, b] : adjacent_pairs(t, mask)) {
        const AnchorLane& la = t.lanes()[a];
        const AnchorLane& lb = t.lanes()[b];
        for (std::size_t j = first; j < t.grid().step_count(); ++j) {
            if (!shown(la.vis[j]) || !shown(lb.vis[j])) continue;
            const double r = lb.z[j] - la.z[j];
            term.value += opts.penalty.value(r);
            ++term.terms;
            note_kink(term, opts.penalty, r);
            const double s = opts.penalty.slope(r);
            term.grad.slots[b].z[j] += s;
            term.grad.slots[a].z[j] -= s;
        }
    }
    finish(term, opts);
    return term;
}

LossTerm bev_loss(const AnchorTensor& pred, const AnchorTensor& gt, const LossOptions& opts) {
    check_same_grid(pred, gt);
    const double eps = opts.bce_eps;
    const std::size_t steps = gt.grid().step_count();
    double bce = 0.0, x_part = 0.0, v_part = 0.0;
    std::size_t n_bce = 0, n_x = 0, n_v = 0;
    TensorGrad g_bce = TensorGrad::zeros_like(pred);
    TensorGrad g_x = g_bce;
    TensorGrad g_v = g_bce;
    LossTerm term;

    for (std::size_t s = 0; s < gt.lanes().size(); ++s) {
        const AnchorLane& P = pred.lanes()[s];
        const AnchorLane& G = gt.lanes()[s];
        const double ph = G.prob;
        const double p = std::clamp(P.prob, eps, 1.0 - eps);
        bce -= ph * std::log(p) + (1.0 - ph) * std::log(1.0 - p);
        ++n_bce;
        if (P.prob > eps && P.prob < 1.0 - eps) {
            g_bce.slots[s].prob += -ph / p + (1.0 - ph) / (1.0 - p);
        }
        if (ph == 0.0) continue;
        for (std::size_t j = 0; j < steps; ++j) {
            const double vh = G.vis[j];
            if (vh != 0.0) {
                const double r = vh * (P.x_offsets[j] - G.x_offsets[j]);
                x_part += ph * opts.penalty.value(r);
                ++n_x;
                note_kink(term, opts.penalty, r);
                g_x.slots[s].x[j] += ph * vh * opts.penalty.slope(r);
            }
            const double rv = P.vis[j] - vh;
            v_part += ph * opts.penalty.value(rv);
            ++n_v;
            note_kink(term, opts.penalty, rv);
            g_v.slots[s].vis[j] += ph * opts.penalty.slope(rv);
        }
    }

    auto scale = [&](std::size_t n) {
        return opts.mean_reduction && n > 0 ? 1.0 / static_cast<double>(n) : 1.0;
    };
    term.value = bce * scale(n_bce) + x_part * scale(n_x) + v_part * scale(n_v);
    term.terms = n_bce + n_x + n_v;
    term.grad = TensorGrad::zeros_like(pred);
    term.grad.add_scaled(g_bce, scale(n_bce));
    term.grad.add_scaled(g_x, scale(n_x));
    term.grad.add_scaled(g_v, scale(n_v));
    return term;
}

LossTerm z_loss(const AnchorTensor& pred, const AnchorTensor& gt, const LossOptions& opts) {
    check_same_grid(pred, gt);
    LossTerm term;
    term.grad = TensorGrad::zeros_like(pred);
    for (std::size_t s = 0; s < gt.lanes().size(); ++s) {
        const AnchorLane& P = pred.lanes()[s];
        const AnchorLane& G = gt.lanes()[s];
        if (G.prob == 0.0) continue;
        for (std::size_t j = 0; j < gt.grid().step_count(); ++j) {
            const double vh = G.vis[j];
            if (vh == 0.0) continue;
            const double r = vh * (P.z[j] - G.z[j]);
            term.value += G.prob * opts.penalty.value(r);
            ++term.terms;
            note_kink(term, opts.penalty, r);
            term.grad.slots[s].z[j] += G.prob * vh * opts.penalty.slope(r);
        }
    }
    finish(term, opts);
    return term;
}

std::pair<double, double> pitch_loss(double predicted_rad, double calibrated_rad) {
    const double r = predicted_rad - calibrated_rad;
    return {std::abs(r), sign(r)};
}

LossBreakdown total_ws(const AnchorTensor& pred, const AnchorTensor& gt, const CameraPose& pose,
                       const LossWeights& weights, const std::optional<PitchPair>& pitch,
                       const LossOptions& opts) {
    check_same_grid(pred, gt);
    LossBreakdown out;
    out.grad = TensorGrad::zeros_like(pred);

    const LossTerm bev = bev_loss(pred, gt, opts);
    out.l_bev = bev.value;
    out.grad.add_scaled(bev.grad, weights.bev);

    // Weak terms see the labelled lane set, labelled visibility and predicted heights.
    AnchorTensor weak = gt;
    for (std::size_t s = 0; s < weak.lanes().size(); ++s) {
        weak.lanes()[s].z = pred.lanes()[s].z;
        if (opts.weak_terms_use_predicted_x) weak.lanes()[s].x_offsets = pred.lanes()[s].x_offsets;
    }
    const auto mask = second_layer_mask(gt);
    const LossTerm width = width_loss(weak, pose, mask, opts);
    const LossTerm height = height_loss(weak, mask, opts);
    out.l_width = width.value;
    out.l_height = height.value;
    for (std::size_t s = 0; s < out.grad.slots.size(); ++s) {
        for (std::size_t j = 0; j < out.grad.slots[s].z.size(); ++j) {
            out.grad.slots[s].z[j] += weights.width * width.grad.slots[s].z[j] +
                                      weights.height * height.grad.slots[s].z[j];
            if (opts.weak_terms_use_predicted_x) {
                out.grad.slots[s].x[j] += weights.width * width.grad.slots[s].x[j];
            }
        }
    }

    if (pitch) {
        const auto [v, d] = pitch_loss(pitch->predicted_rad, pitch->calibrated_rad);
        out.l_pitch = v;
        out.d_pitch = weights.pitch * d;
    }
    out.total = weights.bev * out.l_bev + weights.width * out.l_width +
                weights.height * out.l_height + weights.pitch * out.l_pitch;
    return out;
}

LossBreakdown total_sup(const AnchorTensor& pred, const AnchorTensor& gt,
                        const LossWeights& weights, const std::optional<PitchPair>& pitch,
                        const LossOptions& opts) {
    LossBreakdown out;
    out.grad = TensorGrad::zeros_like(pred);
    const LossTerm bev = bev_loss(pred, gt, opts);
    const LossTerm z = z_loss(pred, gt, opts);
    out.l_bev = bev.value;
    out.l_z = z.value;
    out.grad.add_scaled(bev.grad, weights.bev);
    out.grad.add_scaled(z.grad, weights.z);
    if (pitch) {
        const auto [v, d] = pitch_loss(pitch->predicted_rad, pitch->calibrated_rad);
        out.l_pitch = v;
        out.d_pitch = weights.pitch * d;
    }
    out.total = weights.bev * out.l_bev + weights.z * out.l_z + weights.pitch * out.l_pitch;
    return out;
}

}  // namespace lane3d
