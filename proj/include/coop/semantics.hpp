// SPDX-License-Identifier: Apache-2.0
//
// Ontology of the twelve linguistic features, numeric-to-linguistic
// categorization, triple reification and canonical frame keys.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coop {

enum class Maneuver : std::uint8_t { laneKeep = 0, leftLaneChange = 1, rightLaneChange = 2 };
inline constexpr std::size_t kManeuverCount = 3;
inline constexpr std::array<Maneuver, kManeuverCount> kAllManeuvers{
    Maneuver::laneKeep, Maneuver::leftLaneChange, Maneuver::rightLaneChange};

std::string_view to_string(Maneuver m);
Maneuver parse_maneuver(std::string_view text);

inline constexpr std::size_t kFeatureCount = 12;

/// Ontology order of the features.
enum FeatureIndex : std::size_t {
    kLateralVelocity = 0,
    kLateralAcceleration,
    kTtcPreceding,
    kTtcLeftPreceding,
    kTtcRightPreceding,
    kTtcLeftFollowing,
    kTtcRightFollowing,
    kLaneId,
    kLanePosition,
    kThwPreceding,
    kHighestGapLane,
    kHighestAttractionLane,
};

struct FeatureDef {
    std::string name;
    std::string relation;
    std::vector<std::string> categories;

    std::optional<std::size_t> find(std::string_view label) const;
};

class Ontology {
public:
    Ontology(std::vector<FeatureDef> features, std::string subject = "vehicle",
             std::string intention_relation = "INTENTION_IS");

    /// Lane identifier categories ordered left to right: {leftLane, middleLane, rightLane}.
    static Ontology three_lane();
    /// {leftLane, rightLane}.
    static Ontology two_lane();
    /// Ontology for a road with `lane_count` lanes (2 or 3).
    static Ontology for_lanes(int lane_count);

    const std::vector<FeatureDef>& features() const { return features_; }
    const FeatureDef& feature(std::size_t i) const { return features_.at(i); }
    const std::string& subject() const { return subject_; }
    const std::string& intention_relation() const { return intention_relation_; }
    std::size_t lane_count() const { return features_[kLaneId].categories.size(); }

    /// Product of the category counts.
    std::uint64_t raw_combinations() const;
    /// Stable 64-bit digest of every label in order.
    std::uint64_t fingerprint() const;
    /// Every distinct object label (categories and maneuvers).
    std::vector<std::string> object_vocabulary() const;

private:
    void validate() const;

    std::vector<FeatureDef> features_;
    std::string subject_;
    std::string intention_relation_;
};

/// One category index per ontology feature.
struct LinguisticFrame {
    std::array<std::uint8_t, kFeatureCount> values{};

    friend bool operator==(const LinguisticFrame&, const LinguisticFrame&) = default;
};

void validate_frame(const LinguisticFrame& frame, const Ontology& ontology);
std::string_view label_of(const LinguisticFrame& frame, std::size_t feature, const Ontology& ontology);
LinguisticFrame frame_from_labels(const std::vector<std::string>& labels, const Ontology& ontology);
std::vector<std::string> frame_labels(const LinguisticFrame& frame, const Ontology& ontology);

enum class LaneSide : std::uint8_t { left = 0, current = 1, right = 2 };

/// Raw feature vector as produced by perception. Missing neighbours are
/// encoded as +inf TTC. Lanes that do not exist (per lane_index/lane_count)
/// are ignored; an empty frontal gap in an existing lane means open road.
struct NumericFeatures {
    double lateral_velocity = 0.0;      // m/s, +left
    double lateral_acceleration = 0.0;  // m/s^2, +left
    double ttc_preceding = 0.0;
    double ttc_left_preceding = 0.0;
    double ttc_right_preceding = 0.0;
    double ttc_left_following = 0.0;
    double ttc_right_following = 0.0;
    int lane_index = 0;  // 0 = rightmost
    int lane_count = 1;
    double lane_offset = 0.0;  // m from the lane center, +left
    double lane_width = 3.5;
    double thw_preceding = 0.0;
    std::array<std::optional<double>, 3> frontal_gap;      // indexed by LaneSide
    std::array<std::optional<double>, 3> lane_mean_speed;  // indexed by LaneSide

    friend bool operator==(const NumericFeatures&, const NumericFeatures&) = default;
};

struct Thresholds {
    double lat_vel_mean = 0.0;
    double lat_vel_std = 0.1;
    double lat_acc_mean = 0.0;
    double lat_acc_std = 0.1;
    double ttc_high = 2.0;
    double ttc_medium = 4.0;
    double thw_high = 1.0;
    double thw_medium = 2.0;
    double lane_position_boundary = 0.15;  // fraction of lane width
    double attraction_speed_weight = 2.0;  // s, weights lane speed against frontal gap

    void validate() const;
};

/// Index of the risk category for a TTC/THW value: 0 high, 1 medium, 2 low.
std::uint8_t risk_category(double seconds, double high, double medium);

LinguisticFrame categorize(const NumericFeatures& numeric, const Thresholds& th, const Ontology& ontology);

/// Lane with the highest frontal gap among the existing ones; ties go to
/// current, then left, then right.
LaneSide highest_gap_lane(const NumericFeatures& numeric);
/// argmax of frontal gap + w * lane mean speed over the existing lanes.
LaneSide highest_attraction_lane(const NumericFeatures& numeric, double speed_weight);

struct Triple {
    std::string subject;
    std::string relation;
    std::string object;

    friend bool operator==(const Triple&, const Triple&) = default;
};

std::vector<Triple> reify(const LinguisticFrame& frame, const Ontology& ontology,
                          std::optional<Maneuver> intention = std::nullopt,
                          const std::string& subject = {});

void write_facts_csv(std::ostream& out, const std::vector<Triple>& triples);
std::vector<Triple> read_facts_csv(std::istream& in);

/// Ontology-ordered labels joined with '|'.
std::string frame_key(const LinguisticFrame& frame, const Ontology& ontology);
void append_frame_key(std::string& out, const LinguisticFrame& frame, const Ontology& ontology);
LinguisticFrame parse_frame_key(std::string_view key, const Ontology& ontology);

}  // namespace coop
