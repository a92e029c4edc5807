// SPDX-License-Identifier: Apache-2.0
#include "coop/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coop/errors.hpp"
#include "coop/random.hpp"

namespace coop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Neighbour {
    bool present = false;
    double gap = 0.0;
    double ttc = kInf;
};

Neighbour draw_neighbour(Rng& rng, double p_present, double p_risky)
{
    Neighbour n;
    n.present = draw_bernoulli(rng, p_present);
    if (!n.present) return n;
    n.gap = draw_uniform(rng, 1.0, 30.0);
    double closing;
    if (draw_bernoulli(rng, p_risky)) {
        closing = n.gap / draw_uniform(rng, 0.5, 4.5);
    } else {
        closing = draw_normal(rng, 0.0, 0.6);
    }
    if (closing > 0.0) n.ttc = n.gap / closing;
    return n;
}

bool safe(const Neighbour& a, const Neighbour& b) { return a.ttc >= 4.0 && b.ttc >= 4.0; }

}  // namespace

void CorpusConfig::validate() const
{
    if (scenes == 0) throw ConfigError("corpus needs at least one scene");
    if (lane_count < 1 || lane_count > 3) throw ConfigError("corpus lane_count must be 1..3");
    if (!(lane_width > 0.0)) throw ConfigError("corpus lane_width must be > 0");
    for (double p : {preceding_prob, neighbor_prob, risky_front_prob, left_given_risk, right_given_risk,
                     change_given_gap})
        if (p < 0.0 || p > 1.0) throw ConfigError("corpus probabilities must be in [0,1]");
}

std::vector<LabeledScene> generate_corpus(const CorpusConfig& cfg)
{
    cfg.validate();
    Rng rng = make_stream(cfg.seed, 0xC0);
    std::vector<LabeledScene> out;
    out.reserve(cfg.scenes);

    for (std::size_t i = 0; i < cfg.scenes; ++i) {
        NumericFeatures n;
        n.lane_count = cfg.lane_count;
        n.lane_width = cfg.lane_width;
        n.lane_index = static_cast<int>(std::uniform_int_distribution<int>(0, cfg.lane_count - 1)(rng));
        const bool has_left = n.lane_index + 1 < n.lane_count;
        const bool has_right = n.lane_index > 0;
        const double v_ego = draw_uniform(rng, 0.5, 3.5);

        const auto pre = draw_neighbour(rng, cfg.preceding_prob, cfg.risky_front_prob);
        const auto lp = draw_neighbour(rng, has_left ? cfg.neighbor_prob : 0.0, 0.2);
        const auto lf = draw_neighbour(rng, has_left ? cfg.neighbor_prob : 0.0, 0.2);
        const auto rp = draw_neighbour(rng, has_right ? cfg.neighbor_prob : 0.0, 0.2);
        const auto rf = draw_neighbour(rng, has_right ? cfg.neighbor_prob : 0.0, 0.2);

        n.ttc_preceding = pre.ttc;
        n.ttc_left_preceding = lp.ttc;
        n.ttc_left_following = lf.ttc;
        n.ttc_right_preceding = rp.ttc;
        n.ttc_right_following = rf.ttc;
        n.thw_preceding = pre.present ? pre.gap / v_ego : kInf;

        const auto lane_speed = [&](bool exists) -> std::optional<double> {
            if (!exists) return std::nullopt;
            return std::max(0.0, v_ego + draw_normal(rng, 0.0, 0.5));
        };
        n.lane_mean_speed = {lane_speed(has_left), lane_speed(true), lane_speed(has_right)};
        if (has_left && lp.present) n.frontal_gap[0] = lp.gap;
        if (pre.present) n.frontal_gap[1] = pre.gap;
        if (has_right && rp.present) n.frontal_gap[2] = rp.gap;

        const bool front_risk = pre.ttc < 4.0;
        const bool left_ok = has_left && safe(lp, lf);
        const bool right_ok = has_right && safe(rp, rf);
        const LaneSide best_gap = highest_gap_lane(n);

        Maneuver label = Maneuver::laneKeep;
        if (front_risk && left_ok && draw_bernoulli(rng, cfg.left_given_risk)) {
            label = Maneuver::leftLaneChange;
        } else if (front_risk && right_ok && draw_bernoulli(rng, cfg.right_given_risk)) {
            label = Maneuver::rightLaneChange;
        } else if (best_gap == LaneSide::left && left_ok && draw_bernoulli(rng, cfg.change_given_gap)) {
            label = Maneuver::leftLaneChange;
        } else if (best_gap == LaneSide::right && right_ok && draw_bernoulli(rng, cfg.change_given_gap)) {
            label = Maneuver::rightLaneChange;
        }

        // Lateral motion depends on how far into the manoeuvre the snapshot is.
        const double phase = draw_uniform(rng, 0.0, 1.0);
        const double sign = label == Maneuver::leftLaneChange ? 1.0 : label == Maneuver::rightLaneChange ? -1.0 : 0.0;
        n.lateral_velocity = sign * 0.6 * phase + draw_normal(rng, 0.0, 0.06);
        n.lateral_acceleration = sign * 0.4 * std::sin(3.14159 * phase) + draw_normal(rng, 0.0, 0.06);
        n.lane_offset = sign * 0.4 * cfg.lane_width * phase * phase + draw_normal(rng, 0.0, 0.08 * cfg.lane_width);

        out.push_back({n, label});
    }
    return out;
}

Thresholds fit_lateral_thresholds(const std::vector<LabeledScene>& corpus, Thresholds base)
{
    if (corpus.empty()) throw InputError("cannot fit thresholds on an empty corpus");
    double sv = 0, sv2 = 0, sa = 0, sa2 = 0;
    for (const auto& s : corpus) {
        sv += s.numeric.lateral_velocity;
        sv2 += s.numeric.lateral_velocity * s.numeric.lateral_velocity;
        sa += s.numeric.lateral_acceleration;
        sa2 += s.numeric.lateral_acceleration * s.numeric.lateral_acceleration;
    }
    const double n = static_cast<double>(corpus.size());
    base.lat_vel_mean = sv / n;
    base.lat_acc_mean = sa / n;
    base.lat_vel_std = std::sqrt(std::max(sv2 / n - base.lat_vel_mean * base.lat_vel_mean, 1e-12));
    base.lat_acc_std = std::sqrt(std::max(sa2 / n - base.lat_acc_mean * base.lat_acc_mean, 1e-12));
    return base;
}

std::vector<LabeledFrame> categorize_corpus(const std::vector<LabeledScene>& corpus, const Thresholds& th,
                                            const Ontology& ontology)
{
    std::vector<LabeledFrame> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus) out.push_back({categorize(s.numeric, th, ontology), s.label});
    return out;
}

std::vector<Triple> toy_fact_corpus(const std::vector<LabeledFrame>& frames, const Ontology& ontology,
                                    std::size_t triple_count)
{
    std::vector<Triple> out;
    for (std::size_t i = 0; i < frames.size() && out.size() < triple_count; ++i) {
        auto facts = reify(frames[i].frame, ontology, frames[i].label, "vehicle_" + std::to_string(i));
        for (auto& f : facts) {
            if (out.size() == triple_count) break;
            out.push_back(std::move(f));
        }
    }
    if (out.size() < triple_count) throw InputError("not enough scenes for the requested fact count");
    return out;
}

}  // namespace coop
