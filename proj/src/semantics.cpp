// SPDX-License-Identifier: Apache-2.0
#include "coop/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include "coop/errors.hpp"

namespace coop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::string> risk() { return {"highRisk", "mediumRisk", "lowRisk"}; }
std::vector<std::string> lane_sides() { return {"laneLeft", "laneCurrent", "laneRight"}; }

std::vector<FeatureDef> base_features(std::vector<std::string> lane_labels)
{
    return {
        {"lateral_velocity", "LATERAL_VELOCITY_IS", {"movingLeft", "movingStraight", "movingRight"}},
        {"lateral_acceleration", "LATERAL_ACCELERATION_IS",
         {"acceleratingLeft", "noLateralAcceleration", "acceleratingRight"}},
        {"ttc_preceding", "TTC_WITH_PRECEDING_VEHICLE_IS", risk()},
        {"ttc_left_preceding", "TTC_WITH_LEFT_PRECEDING_VEHICLE_IS", risk()},
        {"ttc_right_preceding", "TTC_WITH_RIGHT_PRECEDING_VEHICLE_IS", risk()},
        {"ttc_left_following", "TTC_WITH_LEFT_FOLLOWING_VEHICLE_IS", risk()},
        {"ttc_right_following", "TTC_WITH_RIGHT_FOLLOWING_VEHICLE_IS", risk()},
        {"lane_id", "LANE_ID_IS", std::move(lane_labels)},
        {"position_in_lane", "POSITION_IN_LANE_IS", {"leftSide", "center", "rightSide"}},
        {"thw_preceding", "THW_WITH_PRECEDING_VEHICLE_IS", risk()},
        {"highest_frontal_gap_lane", "HIGHEST_FRONTAL_GAP_LANE_IS", lane_sides()},
        {"highest_attraction_lane", "HIGHEST_ATTRACTION_LANE_IS", lane_sides()},
    };
}

void check_number(double v, const char* what)
{
    if (std::isnan(v)) throw InputError(std::string("NaN in numeric feature ") + what);
}

std::uint8_t three_way(double v, double mean, double std)
{
    if (v >= mean + std) return 0;
    if (v <= mean - std) return 2;
    return 1;
}

bool lane_exists(const NumericFeatures& n, LaneSide side)
{
    switch (side) {
    case LaneSide::left: return n.lane_index + 1 < n.lane_count;
    case LaneSide::right: return n.lane_index > 0;
    case LaneSide::current: return true;
    }
    return false;
}

template <class Value>
LaneSide argmax_lane(const NumericFeatures& n, Value value)
{
    LaneSide best = LaneSide::current;
    double best_v = value(LaneSide::current);
    for (LaneSide side : {LaneSide::left, LaneSide::right}) {
        if (!lane_exists(n, side)) continue;
        const double v = value(side);
        if (v > best_v) {
            best = side;
            best_v = v;
        }
    }
    return best;
}

std::string_view trim_cr(std::string_view s)
{
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::string_view to_string(Maneuver m)
{
    switch (m) {
    case Maneuver::laneKeep: return "laneKeep";
    case Maneuver::leftLaneChange: return "leftLaneChange";
    case Maneuver::rightLaneChange: return "rightLaneChange";
    }
    return "?";
}

Maneuver parse_maneuver(std::string_view text)
{
    for (Maneuver m : kAllManeuvers)
        if (to_string(m) == text) return m;
    throw VocabularyError("unknown maneuver: " + std::string(text));
}

std::optional<std::size_t> FeatureDef::find(std::string_view label) const
{
    for (std::size_t i = 0; i < categories.size(); ++i)
        if (categories[i] == label) return i;
    return std::nullopt;
}

Ontology::Ontology(std::vector<FeatureDef> features, std::string subject, std::string intention_relation)
    : features_(std::move(features)), subject_(std::move(subject)), intention_relation_(std::move(intention_relation))
{
    validate();
}

void Ontology::validate() const
{
    if (features_.size() != kFeatureCount) throw ConfigError("ontology needs exactly 12 features");
    std::set<std::string> names;
    std::set<std::string> relations{intention_relation_};
    for (const auto& f : features_) {
        if (f.categories.size() < 2) throw ConfigError("feature " + f.name + " needs >= 2 categories");
        if (f.categories.size() > 255) throw ConfigError("feature " + f.name + " has too many categories");
        if (!names.insert(f.name).second) throw ConfigError("duplicate feature name " + f.name);
        if (!relations.insert(f.relation).second) throw ConfigError("duplicate relation " + f.relation);
        std::set<std::string> cats(f.categories.begin(), f.categories.end());
        if (cats.size() != f.categories.size()) throw ConfigError("duplicate category in " + f.name);
        for (const auto& c : f.categories) {
            if (c.empty() || c.find_first_of("|,\n\"") != std::string::npos)
                throw ConfigError("bad category label in " + f.name);
        }
    }
    if (subject_.empty()) throw ConfigError("empty subject label");
}

Ontology Ontology::three_lane() { return Ontology(base_features({"leftLane", "middleLane", "rightLane"})); }

Ontology Ontology::two_lane() { return Ontology(base_features({"leftLane", "rightLane"})); }

Ontology Ontology::for_lanes(int lane_count)
{
    if (lane_count == 2) return two_lane();
    if (lane_count == 3) return three_lane();
    throw ConfigError("only 2- and 3-lane ontologies are defined");
}

std::uint64_t Ontology::raw_combinations() const
{
    std::uint64_t n = 1;
    for (const auto& f : features_) n *= f.categories.size();
    return n;
}

std::uint64_t Ontology::fingerprint() const
{
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0x1f;
        h *= 1099511628211ull;
    };
    mix(subject_);
    mix(intention_relation_);
    for (const auto& f : features_) {
        mix(f.name);
        mix(f.relation);
        for (const auto& c : f.categories) mix(c);
    }
    return h;
}

std::vector<std::string> Ontology::object_vocabulary() const
{
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& f : features_)
        for (const auto& c : f.categories)
            if (seen.insert(c).second) out.push_back(c);
    for (Maneuver m : kAllManeuvers) out.emplace_back(to_string(m));
    return out;
}

void validate_frame(const LinguisticFrame& frame, const Ontology& ontology)
{
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        if (frame.values[i] >= ontology.feature(i).categories.size())
            throw VocabularyError("category index out of range for " + ontology.feature(i).name);
}

std::string_view label_of(const LinguisticFrame& frame, std::size_t feature, const Ontology& ontology)
{
    const auto& cats = ontology.feature(feature).categories;
    if (frame.values.at(feature) >= cats.size())
        throw VocabularyError("category index out of range for " + ontology.feature(feature).name);
    return cats[frame.values[feature]];
}

LinguisticFrame frame_from_labels(const std::vector<std::string>& labels, const Ontology& ontology)
{
    if (labels.size() != kFeatureCount) throw VocabularyError("frame needs exactly 12 labels");
    LinguisticFrame f;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        auto idx = ontology.feature(i).find(labels[i]);
        if (!idx) throw VocabularyError("unknown category '" + labels[i] + "' for " + ontology.feature(i).name);
        f.values[i] = static_cast<std::uint8_t>(*idx);
    }
    return f;
}

std::vector<std::string> frame_labels(const LinguisticFrame& frame, const Ontology& ontology)
{
    std::vector<std::string> out;
    out.reserve(kFeatureCount);
    for (std::size_t i = 0; i < kFeatureCount; ++i) out.emplace_back(label_of(frame, i, ontology));
    return out;
}

void Thresholds::validate() const
{
    if (!(lat_vel_std > 0.0) || !(lat_acc_std > 0.0)) throw ConfigError("threshold sigma must be > 0");
    if (!(ttc_high < ttc_medium)) throw ConfigError("ttc_high must be < ttc_medium");
    if (!(thw_high < thw_medium)) throw ConfigError("thw_high must be < thw_medium");
    if (!(lane_position_boundary > 0.0 && lane_position_boundary < 0.5))
        throw ConfigError("lane_position_boundary must be in (0, 0.5)");
    if (attraction_speed_weight < 0.0) throw ConfigError("attraction_speed_weight must be >= 0");
}

std::uint8_t risk_category(double seconds, double high, double medium)
{
    if (std::isnan(seconds)) throw InputError("NaN time-to-collision/headway");
    if (seconds < high) return 0;
    if (seconds < medium) return 1;
    return 2;
}

LaneSide highest_gap_lane(const NumericFeatures& n)
{
    return argmax_lane(n, [&](LaneSide s) { return n.frontal_gap[static_cast<int>(s)].value_or(kInf); });
}

LaneSide highest_attraction_lane(const NumericFeatures& n, double w)
{
    return argmax_lane(n, [&](LaneSide s) {
        const auto i = static_cast<int>(s);
        return n.frontal_gap[i].value_or(kInf) + w * n.lane_mean_speed[i].value_or(0.0);
    });
}

LinguisticFrame categorize(const NumericFeatures& n, const Thresholds& th, const Ontology& ontology)
{
    check_number(n.lateral_velocity, "lateral_velocity");
    check_number(n.lateral_acceleration, "lateral_acceleration");
    check_number(n.lane_offset, "lane_offset");
    check_number(n.lane_width, "lane_width");
    for (const auto& g : n.frontal_gap)
        if (g) check_number(*g, "frontal_gap");
    for (const auto& s : n.lane_mean_speed)
        if (s) check_number(*s, "lane_mean_speed");
    if (n.lane_count != static_cast<int>(ontology.lane_count()))
        throw InputError("lane_count does not match the ontology");
    if (n.lane_index < 0 || n.lane_index >= n.lane_count) throw InputError("lane_index outside the road");
    if (!(n.lane_width > 0.0)) throw InputError("lane_width must be > 0");

    LinguisticFrame f;
    auto& v = f.values;
    v[kLateralVelocity] = three_way(n.lateral_velocity, th.lat_vel_mean, th.lat_vel_std);
    v[kLateralAcceleration] = three_way(n.lateral_acceleration, th.lat_acc_mean, th.lat_acc_std);
    v[kTtcPreceding] = risk_category(n.ttc_preceding, th.ttc_high, th.ttc_medium);
    v[kTtcLeftPreceding] = risk_category(n.ttc_left_preceding, th.ttc_high, th.ttc_medium);
    v[kTtcRightPreceding] = risk_category(n.ttc_right_preceding, th.ttc_high, th.ttc_medium);
    v[kTtcLeftFollowing] = risk_category(n.ttc_left_following, th.ttc_high, th.ttc_medium);
    v[kTtcRightFollowing] = risk_category(n.ttc_right_following, th.ttc_high, th.ttc_medium);
    v[kLaneId] = static_cast<std::uint8_t>(n.lane_count - 1 - n.lane_index);
    v[kLanePosition] = three_way(n.lane_offset, 0.0, th.lane_position_boundary * n.lane_width);
    v[kThwPreceding] = risk_category(n.thw_preceding, th.thw_high, th.thw_medium);
    v[kHighestGapLane] = static_cast<std::uint8_t>(highest_gap_lane(n));
    v[kHighestAttractionLane] = static_cast<std::uint8_t>(highest_attraction_lane(n, th.attraction_speed_weight));
    return f;
}

std::vector<Triple> reify(const LinguisticFrame& frame, const Ontology& ontology, std::optional<Maneuver> intention,
                          const std::string& subject)
{
    const std::string& s = subject.empty() ? ontology.subject() : subject;
    std::vector<Triple> out;
    out.reserve(kFeatureCount + 1);
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        out.push_back({s, ontology.feature(i).relation, std::string(label_of(frame, i, ontology))});
    if (intention) out.push_back({s, ontology.intention_relation(), std::string(to_string(*intention))});
    return out;
}

void write_facts_csv(std::ostream& out, const std::vector<Triple>& triples)
{
    out << "subject,relation,object\n";
    for (const auto& t : triples) {
        for (const auto* field : {&t.subject, &t.relation, &t.object})
            if (field->find_first_of(",\n\"") != std::string::npos)
                throw InputError("fact labels may not contain commas, quotes or newlines");
        out << t.subject << ',' << t.relation << ',' << t.object << '\n';
    }
}

std::vector<Triple> read_facts_csv(std::istream& in)
{
    std::vector<Triple> out;
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = trim_cr(line);
        if (row.empty()) continue;
        if (header) {
            header = false;
            if (row != "subject,relation,object") throw InputError("fact CSV: missing header");
            continue;
        }
        const auto a = row.find(',');
        const auto b = a == std::string_view::npos ? a : row.find(',', a + 1);
        if (b == std::string_view::npos || row.find(',', b + 1) != std::string_view::npos)
            throw InputError("fact CSV: line " + std::to_string(line_no) + " needs three columns");
        out.push_back({std::string(row.substr(0, a)), std::string(row.substr(a + 1, b - a - 1)),
                       std::string(row.substr(b + 1))});
    }
    if (header) throw InputError("fact CSV: empty input");
    return out;
}

void append_frame_key(std::string& out, const LinguisticFrame& frame, const Ontology& ontology)
{
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (i) out.push_back('|');
        out.append(label_of(frame, i, ontology));
    }
}

std::string frame_key(const LinguisticFrame& frame, const Ontology& ontology)
{
    std::string key;
    key.reserve(160);
    append_frame_key(key, frame, ontology);
    return key;
}

LinguisticFrame parse_frame_key(std::string_view key, const Ontology& ontology)
{
    LinguisticFrame f;
    std::size_t feature = 0;
    std::size_t start = 0;
    while (true) {
        const auto bar = key.find('|', start);
        const auto label = key.substr(start, bar == std::string_view::npos ? bar : bar - start);
        if (feature >= kFeatureCount) throw VocabularyError("frame key has more than 12 labels");
        auto idx = ontology.feature(feature).find(label);
        if (!idx) throw VocabularyError("unknown label in frame key: " + std::string(label));
        f.values[feature++] = static_cast<std::uint8_t>(*idx);
        if (bar == std::string_view::npos) break;
        start = bar + 1;
    }
    if (feature != kFeatureCount) throw VocabularyError("frame key has fewer than 12 labels");
    return f;
}

}  // namespace coop
