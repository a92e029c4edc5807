// SPDX-License-Identifier: Apache-2.0
#include "coop/inference.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

#include "coop/errors.hpp"

namespace coop {

Maneuver argmax_maneuver(const Probabilities& p)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return static_cast<Maneuver>(best);
}

void ManeuverPosterior::validate() const
{
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0 && x <= 1.0)) throw DomainError("posterior entry outside [0,1]");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DomainError("posterior does not sum to 1");
}

std::string_view to_string(LikelihoodSource s)
{
    switch (s) {
    case LikelihoodSource::uniform: return "uniform";
    case LikelihoodSource::frequency: return "frequency";
    case LikelihoodSource::embedding: return "embedding";
    case LikelihoodSource::fixture: return "fixture";
    }
    return "?";
}

LikelihoodModel::LikelihoodModel(Ontology ontology, LikelihoodSource source)
    : ontology_(std::move(ontology)), source_(source)
{
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        const auto n = ontology_.feature(f).categories.size();
        for (auto& row : rows_[f]) row.assign(n, 1.0 / static_cast<double>(n));
    }
}

void LikelihoodModel::set_prior(const Probabilities& prior)
{
    prior_ = prior;
}

const std::vector<double>& LikelihoodModel::row(std::size_t feature, Maneuver h) const
{
    return rows_.at(feature)[static_cast<std::size_t>(h)];
}

std::vector<double>& LikelihoodModel::mutable_row(std::size_t feature, Maneuver h)
{
    return rows_.at(feature)[static_cast<std::size_t>(h)];
}

void LikelihoodModel::set_row(std::size_t feature, Maneuver h, std::vector<double> row)
{
    if (row.size() != ontology_.feature(feature).categories.size())
        throw ConfigError("likelihood row size does not match the feature's categories");
    mutable_row(feature, h) = std::move(row);
}

double LikelihoodModel::likelihood(std::size_t feature, Maneuver h, std::size_t category) const
{
    const auto& r = row(feature, h);
    if (category >= r.size()) throw VocabularyError("category index out of range for " + ontology_.feature(feature).name);
    return r[category];
}

void LikelihoodModel::validate() const
{
    double ps = 0.0;
    for (double p : prior_) {
        if (!(p > 0.0)) throw ConfigError("prior entries must be > 0");
        ps += p;
    }
    if (std::abs(ps - 1.0) > 1e-9) throw ConfigError("prior does not sum to 1");
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        for (Maneuver h : kAllManeuvers) {
            double s = 0.0;
            for (double x : row(f, h)) {
                if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError("likelihood entries must be finite and > 0");
                s += x;
            }
            if (std::abs(s - 1.0) > 1e-9)
                throw ConfigError("likelihood row does not sum to 1 for " + ontology_.feature(f).name);
        }
    }
}

void LikelihoodModel::save_json(std::ostream& out) const
{
    nlohmann::ordered_json j;
    j["source"] = std::string(to_string(source_));
    for (Maneuver h : kAllManeuvers) j["prior"][std::string(to_string(h))] = prior_[static_cast<std::size_t>(h)];
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        const auto& def = ontology_.feature(f);
        for (Maneuver h : kAllManeuvers) {
            const auto& r = row(f, h);
            for (std::size_t c = 0; c < r.size(); ++c)
                j["likelihoods"][def.name][std::string(to_string(h))][def.categories[c]] = r[c];
        }
    }
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed to write likelihood model");
}

LikelihoodModel LikelihoodModel::load_json(std::istream& in, const Ontology& ontology)
{
    LikelihoodModel m(ontology, LikelihoodSource::fixture);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed likelihood JSON: ") + e.what());
    }
    try {
        if (j.contains("prior")) {
            Probabilities p{1.0, 1.0, 1.0};
            for (auto it = j["prior"].begin(); it != j["prior"].end(); ++it)
                p[static_cast<std::size_t>(parse_maneuver(it.key()))] = it.value().get<double>();
            const double s = p[0] + p[1] + p[2];
            if (!(s > 0.0)) throw ConfigError("prior must have positive mass");
            for (auto& x : p) x /= s;
            m.set_prior(p);
        }
        if (j.contains("likelihoods")) {
            for (auto fit = j["likelihoods"].begin(); fit != j["likelihoods"].end(); ++fit) {
                std::optional<std::size_t> feature;
                for (std::size_t f = 0; f < kFeatureCount; ++f)
                    if (ontology.feature(f).name == fit.key()) feature = f;
                if (!feature) throw VocabularyError("unknown feature in likelihood JSON: " + fit.key());
                const auto& def = ontology.feature(*feature);
                for (auto hit = fit.value().begin(); hit != fit.value().end(); ++hit) {
                    const Maneuver h = parse_maneuver(hit.key());
                    const double fill = 1.0 / static_cast<double>(def.categories.size());
                    std::vector<double> row(def.categories.size(), -1.0);
                    for (auto cit = hit.value().begin(); cit != hit.value().end(); ++cit) {
                        auto c = def.find(cit.key());
                        if (!c) throw VocabularyError("unknown category in likelihood JSON: " + cit.key());
                        row[*c] = cit.value().get<double>();
                    }
                    double s = 0.0;
                    for (auto& x : row) {
                        if (x < 0.0) x = fill;
                        s += x;
                    }
                    for (auto& x : row) x /= s;
                    m.set_row(*feature, h, std::move(row));
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed likelihood JSON: ") + e.what());
    }
    m.validate();
    return m;
}

ManeuverPosterior posterior(const LinguisticFrame& frame, const LikelihoodModel& model)
{
    validate_frame(frame, model.ontology());
    Probabilities p = model.prior();
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        for (Maneuver h : kAllManeuvers) p[static_cast<std::size_t>(h)] *= model.likelihood(f, h, frame.values[f]);
    const double z = p[0] + p[1] + p[2];
    if (!(z > 0.0)) throw DomainError("posterior underflow");
    for (auto& x : p) x /= z;
    return {p};
}

ManeuverPosterior update(const ManeuverPosterior& current, std::size_t feature, std::size_t category,
                         const LikelihoodModel& model)
{
    Probabilities p = current.p;
    for (Maneuver h : kAllManeuvers) p[static_cast<std::size_t>(h)] *= model.likelihood(feature, h, category);
    const double z = p[0] + p[1] + p[2];
    if (!(z > 0.0)) throw DomainError("posterior underflow");
    for (auto& x : p) x /= z;
    return {p};
}

ManeuverPosterior posterior_sequential(const LinguisticFrame& frame, const LikelihoodModel& model,
                                       std::span<const std::size_t> order)
{
    validate_frame(frame, model.ontology());
    ManeuverPosterior post{model.prior()};
    if (order.empty()) {
        for (std::size_t f = 0; f < kFeatureCount; ++f) post = update(post, f, frame.values[f], model);
        return post;
    }
    for (std::size_t f : order) post = update(post, f, frame.values.at(f), model);
    return post;
}

LikelihoodModel fit_likelihoods_frequency(const std::vector<LabeledFrame>& corpus, const Ontology& ontology,
                                          double alpha)
{
    if (corpus.empty()) throw InputError("cannot fit likelihoods on an empty corpus");
    if (!(alpha > 0.0)) throw ConfigError("smoothing alpha must be > 0");
    std::array<std::size_t, kManeuverCount> label_count{};
    std::array<std::array<std::vector<double>, kManeuverCount>, kFeatureCount> counts;
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        for (auto& c : counts[f]) c.assign(ontology.feature(f).categories.size(), 0.0);

    for (const auto& s : corpus) {
        validate_frame(s.frame, ontology);
        const auto h = static_cast<std::size_t>(s.label);
        ++label_count[h];
        for (std::size_t f = 0; f < kFeatureCount; ++f) counts[f][h][s.frame.values[f]] += 1.0;
    }
    for (auto c : label_count)
        if (c == 0) throw InputError("corpus must contain every maneuver label");

    LikelihoodModel m(ontology, LikelihoodSource::frequency);
    const double n = static_cast<double>(corpus.size());
    m.set_prior({label_count[0] / n, label_count[1] / n, label_count[2] / n});
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        for (Maneuver h : kAllManeuvers) {
            const auto hi = static_cast<std::size_t>(h);
            const double total = static_cast<double>(label_count[hi]);
            const double k = static_cast<double>(counts[f][hi].size());
            std::vector<double> row(counts[f][hi].size());
            for (std::size_t c = 0; c < row.size(); ++c) row[c] = (counts[f][hi][c] + alpha) / (total + alpha * k);
            m.set_row(f, h, std::move(row));
        }
    }
    return m;
}

std::vector<double> softmax(std::span<const double> scores, double temperature)
{
    if (!(temperature > 0.0)) throw DomainError("softmax temperature must be > 0");
    if (scores.empty()) return {};
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp((scores[i] - mx) / temperature);
        z += out[i];
    }
    for (auto& x : out) x /= z;
    return out;
}

LikelihoodModel likelihoods_from_embeddings(const EmbeddingModel& model, const Ontology& ontology,
                                            const EmbeddingLikelihoodOptions& options)
{
    const auto& ents = model.entities();
    const auto& rels = model.relations();
    const int r_intent = rels.id(ontology.intention_relation());
    const std::size_t k = model.dim();

    std::array<std::vector<double>, kManeuverCount> vehicle;
    for (Maneuver h : kAllManeuvers) {
        const auto e = model.entity(ents.id(std::string(to_string(h))));
        const auto r = model.relation(r_intent);
        auto& v = vehicle[static_cast<std::size_t>(h)];
        v.resize(k);
        for (std::size_t i = 0; i < k; ++i) v[i] = e[i] - r[i];
    }

    LikelihoodModel out(ontology, LikelihoodSource::embedding);
    std::vector<double> scores;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        const auto& def = ontology.feature(f);
        const int r = rels.id(def.relation);
        for (Maneuver h : kAllManeuvers) {
            scores.clear();
            for (const auto& c : def.categories)
                scores.push_back(model.score_vector(vehicle[static_cast<std::size_t>(h)], r, ents.id(c)));
            out.set_row(f, h, softmax(scores, options.temperature));
        }
    }

    // Prior: where the average scene subject translates to under INTENTION_IS.
    std::vector<std::string> subjects = options.prior_entities;
    if (subjects.empty()) {
        const auto vocab = ontology.object_vocabulary();
        const std::set<std::string> known(vocab.begin(), vocab.end());
        for (const auto& label : ents.labels())
            if (!known.count(label)) subjects.push_back(label);
    }
    if (!subjects.empty()) {
        std::vector<double> mean(k, 0.0);
        for (const auto& s : subjects) {
            const auto e = model.entity(ents.id(s));
            for (std::size_t i = 0; i < k; ++i) mean[i] += e[i] / static_cast<double>(subjects.size());
        }
        std::array<double, kManeuverCount> ps{};
        for (Maneuver h : kAllManeuvers)
            ps[static_cast<std::size_t>(h)] = model.score_vector(mean, r_intent, ents.id(std::string(to_string(h))));
        const auto sm = softmax(ps, options.temperature);
        out.set_prior({sm[0], sm[1], sm[2]});
    }
    return out;
}

std::vector<FeasibilityRule> default_feasibility_rules(const Ontology& ontology)
{
    const auto& lane = ontology.feature(kLaneId);
    const auto leftmost = static_cast<std::uint8_t>(0);
    const auto rightmost = static_cast<std::uint8_t>(lane.categories.size() - 1);
    const auto side = [&](std::size_t f, std::string_view label) {
        auto idx = ontology.feature(f).find(label);
        if (!idx) throw ConfigError("ontology lacks category " + std::string(label));
        return static_cast<std::uint8_t>(*idx);
    };
    const std::uint8_t gap_left = side(kHighestGapLane, "laneLeft");
    const std::uint8_t gap_right = side(kHighestGapLane, "laneRight");
    const std::uint8_t att_left = side(kHighestAttractionLane, "laneLeft");
    const std::uint8_t att_right = side(kHighestAttractionLane, "laneRight");
    const std::uint8_t low = side(kTtcLeftPreceding, "lowRisk");

    std::vector<FeasibilityRule> rules;
    auto add = [&](std::string reason, std::uint8_t lane_value, std::size_t feature, std::uint8_t bad, bool must_equal) {
        rules.push_back({std::move(reason), [=](const LinguisticFrame& f) {
                             if (f.values[kLaneId] != lane_value) return true;
                             return must_equal ? f.values[feature] == bad : f.values[feature] != bad;
                         }});
    };
    add("leftmost lane: highest frontal gap cannot be on the left", leftmost, kHighestGapLane, gap_left, false);
    add("leftmost lane: highest attraction cannot be on the left", leftmost, kHighestAttractionLane, att_left, false);
    add("leftmost lane: no left-preceding vehicle", leftmost, kTtcLeftPreceding, low, true);
    add("leftmost lane: no left-following vehicle", leftmost, kTtcLeftFollowing, low, true);
    add("rightmost lane: highest frontal gap cannot be on the right", rightmost, kHighestGapLane, gap_right, false);
    add("rightmost lane: highest attraction cannot be on the right", rightmost, kHighestAttractionLane, att_right,
        false);
    add("rightmost lane: no right-preceding vehicle", rightmost, kTtcRightPreceding, low, true);
    add("rightmost lane: no right-following vehicle", rightmost, kTtcRightFollowing, low, true);
    return rules;
}

bool is_feasible(const LinguisticFrame& frame, std::span<const FeasibilityRule> rules)
{
    for (const auto& r : rules)
        if (!r.feasible(frame)) return false;
    return true;
}

std::uint64_t enumerate_feasible(const Ontology& ontology, std::span<const FeasibilityRule> rules,
                                 const std::function<void(const LinguisticFrame&)>& visit)
{
    std::array<std::uint8_t, kFeatureCount> card{};
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        card[f] = static_cast<std::uint8_t>(ontology.feature(f).categories.size());
    LinguisticFrame frame;
    std::uint64_t count = 0;
    while (true) {
        if (is_feasible(frame, rules)) {
            ++count;
            if (visit) visit(frame);
        }
        std::size_t f = kFeatureCount;
        while (f > 0) {
            --f;
            if (++frame.values[f] < card[f]) break;
            frame.values[f] = 0;
            if (f == 0) return count;
        }
    }
}

std::vector<LinguisticFrame> feasible_frames(const Ontology& ontology, std::span<const FeasibilityRule> rules)
{
    std::vector<LinguisticFrame> out;
    enumerate_feasible(ontology, rules, [&](const LinguisticFrame& f) { out.push_back(f); });
    return out;
}

}  // namespace coop
