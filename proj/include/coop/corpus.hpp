// SPDX-License-Identifier: Apache-2.0
//
// Synthetic labelled highway scenes. Stands in for a recorded naturalistic
// dataset: it feeds the frequency likelihoods, the lateral mean/std
// thresholds and the toy knowledge graph.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "coop/semantics.hpp"

namespace coop {

struct CorpusConfig {
    std::size_t scenes = 20000;
    int lane_count = 2;
    double lane_width = 3.5;
    double preceding_prob = 0.8;
    double neighbor_prob = 0.6;
    double risky_front_prob = 0.35;  // share of scenes with a closing leader inside 4.5 s
    double left_given_risk = 0.85;
    double right_given_risk = 0.75;
    double change_given_gap = 0.15;
    std::uint64_t seed = 7;

    void validate() const;
};

struct LabeledScene {
    NumericFeatures numeric;
    Maneuver label = Maneuver::laneKeep;
};

struct LabeledFrame {
    LinguisticFrame frame;
    Maneuver label = Maneuver::laneKeep;
};

std::vector<LabeledScene> generate_corpus(const CorpusConfig& config);

/// Copies `base` with lateral velocity/acceleration mean and std taken from the corpus.
Thresholds fit_lateral_thresholds(const std::vector<LabeledScene>& corpus, Thresholds base = {});

std::vector<LabeledFrame> categorize_corpus(const std::vector<LabeledScene>& corpus, const Thresholds& th,
                                            const Ontology& ontology);

/// Reifies the first scenes as subjects vehicle_0, vehicle_1, ... (12 facts plus
/// the intention each) and truncates to `triple_count`.
std::vector<Triple> toy_fact_corpus(const std::vector<LabeledFrame>& frames, const Ontology& ontology,
                                    std::size_t triple_count);

}  // namespace coop
