// SPDX-License-Identifier: Apache-2.0
//
// TransE embeddings: triple store, scorer, self-adversarial trainer with Adam,
// raw MRR evaluation and a JSON checkpoint.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "coop/random.hpp"
#include "coop/semantics.hpp"

namespace coop {

struct TripleId {
    int h = 0;
    int r = 0;
    int t = 0;

    friend bool operator==(const TripleId&, const TripleId&) = default;
};

class Vocabulary {
public:
    int add(const std::string& label);
    int id(const std::string& label) const;  // VocabularyError when unknown
    bool contains(const std::string& label) const { return index_.count(label) != 0; }
    const std::string& label(int id) const { return labels_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, int> index_;
};

struct TripleStore {
    Vocabulary entities;
    Vocabulary relations;
    std::vector<TripleId> train;
    std::vector<TripleId> validation;

    /// Deduplicates, then holds out `validation_fraction` of the facts with a seeded shuffle.
    static TripleStore from_triples(const std::vector<Triple>& triples, double validation_fraction,
                                    std::uint64_t seed);
    TripleId encode(const Triple& t) const;
    Triple decode(const TripleId& t) const;
};

enum class Norm { L1, L2 };
enum class CorruptionSide { head, tail, both };

std::string_view to_string(Norm n);
std::string_view to_string(CorruptionSide s);
Norm parse_norm(std::string_view text);
CorruptionSide parse_corruption_side(std::string_view text);

class EmbeddingModel {
public:
    EmbeddingModel() = default;
    EmbeddingModel(Vocabulary entities, Vocabulary relations, std::size_t dim, Norm norm);

    /// Uniform in [-6/sqrt(k), 6/sqrt(k)], entity rows then normalized.
    static EmbeddingModel initialize(const TripleStore& store, std::size_t dim, Norm norm, std::uint64_t seed);

    std::size_t dim() const { return dim_; }
    Norm norm() const { return norm_; }
    const Vocabulary& entities() const { return entities_; }
    const Vocabulary& relations() const { return relations_; }

    std::span<double> entity(int id) { return {ent_.data() + static_cast<std::size_t>(id) * dim_, dim_}; }
    std::span<const double> entity(int id) const { return {ent_.data() + static_cast<std::size_t>(id) * dim_, dim_}; }
    std::span<double> relation(int id) { return {rel_.data() + static_cast<std::size_t>(id) * dim_, dim_}; }
    std::span<const double> relation(int id) const
    {
        return {rel_.data() + static_cast<std::size_t>(id) * dim_, dim_};
    }
    std::vector<double>& entity_data() { return ent_; }
    std::vector<double>& relation_data() { return rel_; }
    const std::vector<double>& entity_data() const { return ent_; }
    const std::vector<double>& relation_data() const { return rel_; }

    /// -||h + r - t|| under the configured norm.
    double score(int h, int r, int t) const;
    double score(const std::string& h, const std::string& r, const std::string& t) const;
    /// Score of an arbitrary head vector.
    double score_vector(std::span<const double> h, int r, int t) const;

    void normalize_entities();

    void save_json(std::ostream& out) const;
    static EmbeddingModel load_json(std::istream& in);

    friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b)
    {
        return a.dim_ == b.dim_ && a.norm_ == b.norm_ && a.entities_.labels() == b.entities_.labels() &&
               a.relations_.labels() == b.relations_.labels() && a.ent_ == b.ent_ && a.rel_ == b.rel_;
    }

private:
    Vocabulary entities_;
    Vocabulary relations_;
    std::size_t dim_ = 0;
    Norm norm_ = Norm::L1;
    std::vector<double> ent_;
    std::vector<double> rel_;
};

struct TrainConfig {
    std::size_t dim = 100;
    double learning_rate = 5e-4;
    std::size_t batch_size = 10000;
    std::size_t negatives = 5;
    double adversarial_temperature = 1.0;
    double margin = 0.0;  // 0 = margin-free
    Norm norm = Norm::L1;
    std::size_t max_epochs = 1000;
    std::size_t patience = 50;  // epochs without validation MRR improvement
    std::size_t eval_every = 10;
    CorruptionSide eval_side = CorruptionSide::tail;

    void validate() const;
};

/// One positive with its corruptions.
struct TrainingSample {
    TripleId positive;
    std::vector<TripleId> negatives;
};

class Trainer {
public:
    Trainer(EmbeddingModel model, TrainConfig config, std::uint64_t seed);

    /// Corrupts head or tail (fair coin) with a uniformly drawn entity.
    std::vector<TrainingSample> draw_samples(std::span<const TripleId> positives);
    /// Mean self-adversarial loss without touching the parameters.
    double loss(std::span<const TrainingSample> batch) const;
    /// One Adam step; returns the loss before the step. Entities are renormalized afterwards.
    double step(std::span<const TrainingSample> batch);

    const EmbeddingModel& model() const { return model_; }
    EmbeddingModel& model() { return model_; }
    std::size_t steps() const { return steps_; }

private:
    double accumulate(std::span<const TrainingSample> batch, std::vector<double>* ge, std::vector<double>* gr) const;

    EmbeddingModel model_;
    TrainConfig config_;
    Rng rng_;
    std::vector<double> m_ent_, v_ent_, m_rel_, v_rel_;
    std::size_t steps_ = 0;
};

struct EpochRecord {
    std::size_t epoch;
    double loss;
    double validation_mrr;  // NaN when not evaluated
};

struct TrainResult {
    EmbeddingModel model;  // best checkpoint
    std::size_t best_epoch = 0;
    double best_mrr = 0.0;
    double initial_mrr = 0.0;
    std::size_t epochs_run = 0;
    std::vector<EpochRecord> history;
};

TrainResult train(const TripleStore& store, const TrainConfig& config, std::uint64_t seed);

/// 1 + number of competitors scoring >= the true score.
std::size_t pessimistic_rank(double true_score, std::span<const double> competitor_scores);
std::vector<std::size_t> ranks(const EmbeddingModel& model, std::span<const TripleId> eval, CorruptionSide side);
double mrr(const EmbeddingModel& model, std::span<const TripleId> eval, CorruptionSide side);
/// Mean of 1/rank over uniformly random placements among `candidates`.
double random_mrr_baseline(std::size_t candidates);

}  // namespace coop
