// SPDX-License-Identifier: Apache-2.0
#include "coop/kge.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include <json.hpp>

#include "coop/errors.hpp"

namespace coop {

namespace {

double sigmoid(double x)
{
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// -log(sigmoid(x)) without overflow
double neg_log_sigmoid(double x)
{
    if (x >= 0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

}  // namespace

int Vocabulary::add(const std::string& label)
{
    auto [it, inserted] = index_.emplace(label, static_cast<int>(labels_.size()));
    if (inserted) labels_.push_back(label);
    return it->second;
}

int Vocabulary::id(const std::string& label) const
{
    auto it = index_.find(label);
    if (it == index_.end()) throw VocabularyError("unknown label: " + label);
    return it->second;
}

TripleStore TripleStore::from_triples(const std::vector<Triple>& triples, double validation_fraction,
                                      std::uint64_t seed)
{
    if (triples.empty()) throw InputError("empty triple store");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
        throw ConfigError("validation_fraction must be in [0,1)");
    TripleStore s;
    std::vector<TripleId> all;
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& t : triples) {
        TripleId id{s.entities.add(t.subject), s.relations.add(t.relation), s.entities.add(t.object)};
        if (seen.insert({id.h, id.r, id.t}).second) all.push_back(id);
    }
    Rng rng = make_stream(seed, 0x5B117);
    std::shuffle(all.begin(), all.end(), rng);
    const auto n_valid = static_cast<std::size_t>(std::floor(validation_fraction * static_cast<double>(all.size())));
    s.validation.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_valid));
    s.train.assign(all.begin() + static_cast<std::ptrdiff_t>(n_valid), all.end());
    if (s.train.empty()) throw InputError("no training triples left after the split");
    return s;
}

TripleId TripleStore::encode(const Triple& t) const
{
    return {entities.id(t.subject), relations.id(t.relation), entities.id(t.object)};
}

Triple TripleStore::decode(const TripleId& t) const
{
    return {entities.label(t.h), relations.label(t.r), entities.label(t.t)};
}

std::string_view to_string(Norm n) { return n == Norm::L1 ? "L1" : "L2"; }

std::string_view to_string(CorruptionSide s)
{
    switch (s) {
    case CorruptionSide::head: return "head";
    case CorruptionSide::tail: return "tail";
    case CorruptionSide::both: return "both";
    }
    return "?";
}

Norm parse_norm(std::string_view text)
{
    if (text == "L1") return Norm::L1;
    if (text == "L2") return Norm::L2;
    throw ConfigError("unknown norm: " + std::string(text));
}

CorruptionSide parse_corruption_side(std::string_view text)
{
    if (text == "head") return CorruptionSide::head;
    if (text == "tail") return CorruptionSide::tail;
    if (text == "both") return CorruptionSide::both;
    throw ConfigError("unknown corruption side: " + std::string(text));
}

EmbeddingModel::EmbeddingModel(Vocabulary entities, Vocabulary relations, std::size_t dim, Norm norm)
    : entities_(std::move(entities)), relations_(std::move(relations)), dim_(dim), norm_(norm),
      ent_(entities_.size() * dim, 0.0), rel_(relations_.size() * dim, 0.0)
{
    if (dim == 0) throw ConfigError("embedding dimension must be > 0");
}

EmbeddingModel EmbeddingModel::initialize(const TripleStore& store, std::size_t dim, Norm norm, std::uint64_t seed)
{
    EmbeddingModel m(store.entities, store.relations, dim, norm);
    Rng rng = make_stream(seed, 0x1417);
    const double bound = 6.0 / std::sqrt(static_cast<double>(dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& x : m.ent_) x = u(rng);
    for (auto& x : m.rel_) x = u(rng);
    m.normalize_entities();
    return m;
}

double EmbeddingModel::score_vector(std::span<const double> h, int r, int t) const
{
    const auto rv = relation(r);
    const auto tv = entity(t);
    double acc = 0.0;
    if (norm_ == Norm::L1) {
        for (std::size_t i = 0; i < dim_; ++i) acc += std::abs(h[i] + rv[i] - tv[i]);
        return -acc;
    }
    for (std::size_t i = 0; i < dim_; ++i) {
        const double d = h[i] + rv[i] - tv[i];
        acc += d * d;
    }
    return -std::sqrt(acc);
}

double EmbeddingModel::score(int h, int r, int t) const { return score_vector(entity(h), r, t); }

double EmbeddingModel::score(const std::string& h, const std::string& r, const std::string& t) const
{
    return score(entities_.id(h), relations_.id(r), entities_.id(t));
}

void EmbeddingModel::normalize_entities()
{
    for (std::size_t e = 0; e < entities_.size(); ++e) {
        auto v = entity(static_cast<int>(e));
        double n2 = 0.0;
        for (double x : v) n2 += x * x;
        const double n = std::sqrt(n2);
        if (n > 0.0)
            for (double& x : v) x /= n;
    }
}

void EmbeddingModel::save_json(std::ostream& out) const
{
    nlohmann::json j;
    j["format"] = "coop-transe";
    j["dim"] = dim_;
    j["norm"] = std::string(to_string(norm_));
    j["entities"] = entities_.labels();
    j["relations"] = relations_.labels();
    j["entity_vectors"] = ent_;
    j["relation_vectors"] = rel_;
    out << j.dump() << '\n';
    if (!out) throw IoError("failed to write embedding checkpoint");
}

EmbeddingModel EmbeddingModel::load_json(std::istream& in)
{
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("format") != "coop-transe") throw InputError("not a TransE checkpoint");
        Vocabulary ents, rels;
        for (const auto& s : j.at("entities")) ents.add(s.get<std::string>());
        for (const auto& s : j.at("relations")) rels.add(s.get<std::string>());
        EmbeddingModel m(std::move(ents), std::move(rels), j.at("dim").get<std::size_t>(),
                         parse_norm(j.at("norm").get<std::string>()));
        auto ev = j.at("entity_vectors").get<std::vector<double>>();
        auto rv = j.at("relation_vectors").get<std::vector<double>>();
        if (ev.size() != m.ent_.size() || rv.size() != m.rel_.size())
            throw InputError("checkpoint matrix sizes do not match the vocabulary");
        m.ent_ = std::move(ev);
        m.rel_ = std::move(rv);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed checkpoint: ") + e.what());
    }
}

void TrainConfig::validate() const
{
    if (dim == 0 || batch_size == 0 || negatives == 0) throw ConfigError("train config sizes must be > 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(adversarial_temperature > 0.0)) throw ConfigError("adversarial_temperature must be > 0");
    if (margin < 0.0) throw ConfigError("margin must be >= 0");
    if (eval_every == 0 || patience == 0) throw ConfigError("eval_every and patience must be > 0");
}

Trainer::Trainer(EmbeddingModel model, TrainConfig config, std::uint64_t seed)
    : model_(std::move(model)), config_(config), rng_(make_stream(seed, 0x7A1E)),
      m_ent_(model_.entity_data().size(), 0.0), v_ent_(model_.entity_data().size(), 0.0),
      m_rel_(model_.relation_data().size(), 0.0), v_rel_(model_.relation_data().size(), 0.0)
{
    config_.validate();
}

std::vector<TrainingSample> Trainer::draw_samples(std::span<const TripleId> positives)
{
    const int n_ent = static_cast<int>(model_.entities().size());
    std::uniform_int_distribution<int> pick(0, n_ent - 1);
    std::vector<TrainingSample> out;
    out.reserve(positives.size());
    for (const auto& p : positives) {
        TrainingSample s{p, {}};
        s.negatives.reserve(config_.negatives);
        for (std::size_t k = 0; k < config_.negatives; ++k) {
            TripleId n = p;
            if (draw_bernoulli(rng_, 0.5))
                n.h = pick(rng_);
            else
                n.t = pick(rng_);
            s.negatives.push_back(n);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// Loss per positive: -log s(g - d+) - sum_i w_i log s(d_i - g), w = softmax(-a d_i)
// held constant. Gradients are accumulated when the output buffers are given.
double Trainer::accumulate(std::span<const TrainingSample> batch, std::vector<double>* ge,
                           std::vector<double>* gr) const
{
    if (batch.empty()) throw InputError("empty training batch");
    const std::size_t k = model_.dim();
    const double gamma = config_.margin;
    const double alpha = config_.adversarial_temperature;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<double> diff(k);
    std::vector<double> neg_d;
    std::vector<double> weights;
    double total = 0.0;

    auto distance = [&](const TripleId& t) {
        const auto h = model_.entity(t.h);
        const auto r = model_.relation(t.r);
        const auto tl = model_.entity(t.t);
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            diff[i] = h[i] + r[i] - tl[i];
            acc += model_.norm() == Norm::L1 ? std::abs(diff[i]) : diff[i] * diff[i];
        }
        return model_.norm() == Norm::L1 ? acc : std::sqrt(acc);
    };

    // dL/dd for one triple, pushed through d = ||h + r - t||.
    auto backprop = [&](const TripleId& t, double dist, double coeff) {
        if (!ge || coeff == 0.0) return;
        distance(t);  // refresh diff
        double* eh = ge->data() + static_cast<std::size_t>(t.h) * k;
        double* et = ge->data() + static_cast<std::size_t>(t.t) * k;
        double* er = gr->data() + static_cast<std::size_t>(t.r) * k;
        for (std::size_t i = 0; i < k; ++i) {
            double g;
            if (model_.norm() == Norm::L1)
                g = diff[i] > 0 ? 1.0 : diff[i] < 0 ? -1.0 : 0.0;
            else
                g = dist > 0 ? diff[i] / dist : 0.0;
            g *= coeff;
            eh[i] += g;
            er[i] += g;
            et[i] -= g;
        }
    };

    for (const auto& s : batch) {
        const double d_pos = distance(s.positive);
        double loss = neg_log_sigmoid(gamma - d_pos);
        backprop(s.positive, d_pos, inv_b * sigmoid(d_pos - gamma));

        neg_d.resize(s.negatives.size());
        weights.resize(s.negatives.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < s.negatives.size(); ++i) {
            neg_d[i] = distance(s.negatives[i]);
            mx = std::max(mx, -alpha * neg_d[i]);
        }
        double z = 0.0;
        for (std::size_t i = 0; i < neg_d.size(); ++i) {
            weights[i] = std::exp(-alpha * neg_d[i] - mx);
            z += weights[i];
        }
        for (std::size_t i = 0; i < neg_d.size(); ++i) {
            weights[i] /= z;
            loss += weights[i] * neg_log_sigmoid(neg_d[i] - gamma);
            backprop(s.negatives[i], neg_d[i], -inv_b * weights[i] * sigmoid(gamma - neg_d[i]));
        }
        total += loss;
    }
    return total * inv_b;
}

double Trainer::loss(std::span<const TrainingSample> batch) const { return accumulate(batch, nullptr, nullptr); }

double Trainer::step(std::span<const TrainingSample> batch)
{
    std::vector<double> ge(model_.entity_data().size(), 0.0);
    std::vector<double> gr(model_.relation_data().size(), 0.0);
    const double l = accumulate(batch, &ge, &gr);
    ++steps_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
    auto adam = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1 - kBeta2) * g[i] * g[i];
            p[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
        }
    };
    adam(model_.entity_data(), ge, m_ent_, v_ent_);
    adam(model_.relation_data(), gr, m_rel_, v_rel_);
    model_.normalize_entities();
    return l;
}

TrainResult train(const TripleStore& store, const TrainConfig& config, std::uint64_t seed)
{
    config.validate();
    if (store.train.empty()) throw InputError("cannot train on an empty store");
    TrainResult result;
    Trainer trainer(EmbeddingModel::initialize(store, config.dim, config.norm, seed), config, seed);
    const bool has_valid = !store.validation.empty();

    result.model = trainer.model();
    result.initial_mrr = has_valid ? mrr(result.model, store.validation, config.eval_side) : 0.0;
    result.best_mrr = result.initial_mrr;
    result.history.push_back({0, std::numeric_limits<double>::quiet_NaN(), result.initial_mrr});

    std::vector<TripleId> order = store.train;
    Rng shuffle_rng = make_stream(seed, 0x5EED);
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            const auto batch = trainer.draw_samples(std::span<const TripleId>(order).subspan(start, len));
            epoch_loss += trainer.step(batch);
            ++batches;
        }
        result.epochs_run = epoch;
        double val = std::numeric_limits<double>::quiet_NaN();
        if (has_valid && (epoch % config.eval_every == 0 || epoch == config.max_epochs)) {
            val = mrr(trainer.model(), store.validation, config.eval_side);
            if (val > result.best_mrr) {
                result.best_mrr = val;
                result.best_epoch = epoch;
                result.model = trainer.model();
                since_best = 0;
            } else {
                since_best += config.eval_every;
            }
        }
        result.history.push_back({epoch, epoch_loss / static_cast<double>(batches), val});
        if (has_valid && since_best >= config.patience) break;
    }
    if (!has_valid) {
        result.model = trainer.model();
        result.best_epoch = result.epochs_run;
    }
    return result;
}

std::size_t pessimistic_rank(double true_score, std::span<const double> competitor_scores)
{
    std::size_t rank = 1;
    for (double s : competitor_scores)
        if (s >= true_score) ++rank;
    return rank;
}

std::vector<std::size_t> ranks(const EmbeddingModel& model, std::span<const TripleId> eval, CorruptionSide side)
{
    const int n_ent = static_cast<int>(model.entities().size());
    std::vector<std::size_t> out;
    std::vector<double> competitors;
    competitors.reserve(static_cast<std::size_t>(n_ent));
    for (const auto& t : eval) {
        const double truth = model.score(t.h, t.r, t.t);
        if (side != CorruptionSide::head) {
            competitors.clear();
            for (int e = 0; e < n_ent; ++e)
                if (e != t.t) competitors.push_back(model.score(t.h, t.r, e));
            out.push_back(pessimistic_rank(truth, competitors));
        }
        if (side != CorruptionSide::tail) {
            competitors.clear();
            for (int e = 0; e < n_ent; ++e)
                if (e != t.h) competitors.push_back(model.score(e, t.r, t.t));
            out.push_back(pessimistic_rank(truth, competitors));
        }
    }
    return out;
}

double mrr(const EmbeddingModel& model, std::span<const TripleId> eval, CorruptionSide side)
{
    if (eval.empty()) throw InputError("MRR needs at least one evaluation triple");
    const auto r = ranks(model, eval, side);
    double acc = 0.0;
    for (auto x : r) acc += 1.0 / static_cast<double>(x);
    return acc / static_cast<double>(r.size());
}

double random_mrr_baseline(std::size_t candidates)
{
    if (candidates == 0) throw DomainError("candidate count must be > 0");
    double h = 0.0;
    for (std::size_t i = 1; i <= candidates; ++i) h += 1.0 / static_cast<double>(i);
    return h / static_cast<double>(candidates);
}

}  // namespace coop
