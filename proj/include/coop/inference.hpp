// SPDX-License-Identifier: Apache-2.0
//
// Naive-Bayes manoeuvre posterior, likelihood sources, feasibility-filtered
// frame enumeration, compiled lookup tables (hash and CSV-scan backends) and
// the query latency benchmark.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "coop/corpus.hpp"
#include "coop/kge.hpp"
#include "coop/semantics.hpp"

namespace coop {

using Probabilities = std::array<double, kManeuverCount>;

/// First maximum in laneKeep < leftLaneChange < rightLaneChange order.
Maneuver argmax_maneuver(const Probabilities& p);

struct ManeuverPosterior {
    Probabilities p{1.0 / 3, 1.0 / 3, 1.0 / 3};

    Maneuver argmax() const { return argmax_maneuver(p); }
    double operator[](Maneuver m) const { return p[static_cast<std::size_t>(m)]; }
    void validate() const;
};

enum class LikelihoodSource { uniform, frequency, embedding, fixture };
std::string_view to_string(LikelihoodSource s);

class LikelihoodModel {
public:
    explicit LikelihoodModel(Ontology ontology, LikelihoodSource source = LikelihoodSource::uniform);

    const Ontology& ontology() const { return ontology_; }
    LikelihoodSource source() const { return source_; }

    const Probabilities& prior() const { return prior_; }
    void set_prior(const Probabilities& prior);

    /// P(category | feature, H) row over the feature's categories.
    const std::vector<double>& row(std::size_t feature, Maneuver h) const;
    void set_row(std::size_t feature, Maneuver h, std::vector<double> row);
    double likelihood(std::size_t feature, Maneuver h, std::size_t category) const;

    /// Rows sum to 1 within 1e-9 and every entry is positive.
    void validate() const;

    void save_json(std::ostream& out) const;
    /// Fixture format: {"prior": {maneuver: p}, "likelihoods": {feature: {maneuver: {category: p}}}}.
    /// Features, maneuvers and categories that are left out keep uniform values;
    /// given rows are renormalized.
    static LikelihoodModel load_json(std::istream& in, const Ontology& ontology);

private:
    std::vector<double>& mutable_row(std::size_t feature, Maneuver h);

    Ontology ontology_;
    LikelihoodSource source_;
    Probabilities prior_{1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::array<std::array<std::vector<double>, kManeuverCount>, kFeatureCount> rows_;
};

/// Batch product P(H) * prod_i P(e_i | H), normalized once.
ManeuverPosterior posterior(const LinguisticFrame& frame, const LikelihoodModel& model);
/// Single-feature Bayes update of `current`.
ManeuverPosterior update(const ManeuverPosterior& current, std::size_t feature, std::size_t category,
                         const LikelihoodModel& model);
/// Prior followed by one update per feature in `order` (default ontology order).
ManeuverPosterior posterior_sequential(const LinguisticFrame& frame, const LikelihoodModel& model,
                                       std::span<const std::size_t> order = {});

/// Laplace-smoothed category counts per manoeuvre; prior from label frequencies.
LikelihoodModel fit_likelihoods_frequency(const std::vector<LabeledFrame>& corpus, const Ontology& ontology,
                                          double alpha = 1.0);

struct EmbeddingLikelihoodOptions {
    double temperature = 1.0;
    /// Entities outside the ontology vocabulary whose mean embedding drives the prior;
    /// empty list falls back to every such entity. No such entity gives a uniform prior.
    std::vector<std::string> prior_entities;
};

/// vehicle_H = e_H - r_INTENTION; P(c | f, H) = softmax_c(score(vehicle_H, r_f, c) / T).
LikelihoodModel likelihoods_from_embeddings(const EmbeddingModel& model, const Ontology& ontology,
                                            const EmbeddingLikelihoodOptions& options = {});

/// Numerically stable softmax(scores / temperature).
std::vector<double> softmax(std::span<const double> scores, double temperature = 1.0);

struct FeasibilityRule {
    std::string reason;
    std::function<bool(const LinguisticFrame&)> feasible;
};

/// The outermost lanes cannot have a neighbour lane further out: no gap or
/// attraction pointing there and low risk for the vehicles that would live there.
std::vector<FeasibilityRule> default_feasibility_rules(const Ontology& ontology);
bool is_feasible(const LinguisticFrame& frame, std::span<const FeasibilityRule> rules);

/// Odometer over ontology order (last feature fastest). Returns the feasible count.
std::uint64_t enumerate_feasible(const Ontology& ontology, std::span<const FeasibilityRule> rules,
                                 const std::function<void(const LinguisticFrame&)>& visit = {});
std::vector<LinguisticFrame> feasible_frames(const Ontology& ontology, std::span<const FeasibilityRule> rules);

struct Prediction {
    Maneuver maneuver = Maneuver::laneKeep;
    Probabilities posterior{};

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

using Predictor = std::function<ManeuverPosterior(const LinguisticFrame&)>;

class LookupTable {
public:
    static LookupTable build(const Ontology& ontology, std::span<const FeasibilityRule> rules,
                             const Predictor& predictor);

    const Ontology& ontology() const { return ontology_; }
    std::uint64_t fingerprint() const { return ontology_.fingerprint(); }
    std::size_t size() const { return frames_.size(); }
    const std::vector<LinguisticFrame>& frames() const { return frames_; }
    const std::vector<Prediction>& predictions() const { return predictions_; }

    /// Keyed lookup on frame_key(frame). InfeasibleFrame when absent.
    const Prediction& query_hash(const LinguisticFrame& frame) const;
    const Prediction& query_key(const std::string& key) const;

    /// 12 feature columns, maneuver, 3 posterior columns; enumeration order.
    void write_csv(std::ostream& out) const;
    /// CorruptTable on duplicate keys or malformed rows.
    static LookupTable read_csv(std::istream& in, const Ontology& ontology);

    /// Little-endian flat file: "CPLT", u32 version, u64 ontology fingerprint,
    /// u64 count, then per entry 12 category bytes, maneuver byte, 3 f64.
    void write_snapshot(std::ostream& out) const;
    /// StaleTable when the fingerprint does not match `ontology`.
    static LookupTable read_snapshot(std::istream& in, const Ontology& ontology);

private:
    // open addressing on the hash of frame_key; a slot holds the frame and its prediction so a hit costs one probe
    struct Slot {
        LinguisticFrame frame;
        bool used = false;
        Prediction prediction;
    };

    explicit LookupTable(Ontology ontology) : ontology_(std::move(ontology)) {}
    void reserve(std::size_t n);
    void add(const LinguisticFrame& frame, const Prediction& prediction);
    const Prediction* find(const LinguisticFrame& frame, std::size_t hash) const;

    Ontology ontology_;
    std::vector<LinguisticFrame> frames_;
    std::vector<Prediction> predictions_;
    std::vector<Slot> slots_;
};

/// Column-store of CSV cells, queried by a row-by-row conjunction of the
/// twelve column equality filters.
class ScanTable {
public:
    static ScanTable from_table(const LookupTable& table);
    static ScanTable from_csv(std::istream& in, const Ontology& ontology);

    std::size_t size() const { return maneuver_.size(); }
    /// InfeasibleFrame when no row matches. `rows_inspected` counts rows up to the match.
    Prediction query(const LinguisticFrame& frame, std::size_t* rows_inspected = nullptr) const;

private:
    explicit ScanTable(Ontology ontology) : ontology_(std::move(ontology)) {}

    Ontology ontology_;
    std::array<std::vector<std::string>, kFeatureCount> columns_;
    std::vector<std::string> maneuver_;
    std::array<std::vector<double>, kManeuverCount> posterior_;
};

enum class Backend { scan, hash };
std::string_view to_string(Backend b);

struct LatencyStats {
    std::size_t table_size = 0;
    std::size_t queries = 0;
    double mean_s = 0.0;
    double p50_s = 0.0;
    double p99_s = 0.0;
};

/// Uniformly random feasible queries, a warm-up pass, then per-query
/// steady_clock timings.
LatencyStats bench_query(const LookupTable& table, const ScanTable* scan, Backend backend, std::size_t queries,
                         std::uint64_t seed);

}  // namespace coop
