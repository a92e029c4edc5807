// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "coop/corpus.hpp"
#include "coop/errors.hpp"
#include "coop/inference.hpp"

using namespace coop;

namespace {

LikelihoodModel random_model(const Ontology& o, std::uint64_t seed)
{
    Rng rng(seed);
    LikelihoodModel m(o);
    Probabilities prior{draw_uniform(rng, 0.1, 1), draw_uniform(rng, 0.1, 1), draw_uniform(rng, 0.1, 1)};
    const double s = prior[0] + prior[1] + prior[2];
    for (auto& x : prior) x /= s;
    m.set_prior(prior);
    for (std::size_t f = 0; f < kFeatureCount; ++f)
        for (Maneuver h : kAllManeuvers) {
            std::vector<double> row(o.feature(f).categories.size());
            for (auto& x : row) x = draw_uniform(rng, 0.05, 1.0);
            const double z = std::accumulate(row.begin(), row.end(), 0.0);
            for (auto& x : row) x /= z;
            m.set_row(f, h, row);
        }
    return m;
}

LikelihoodModel load_fixture(const Ontology& o)
{
    std::ifstream in(COOP_FIXTURES "/risk_likelihoods.json");
    REQUIRE(in);
    return LikelihoodModel::load_json(in, o);
}

// Written from the feature semantics rather than from the rule closures.
bool oracle_feasible(const std::vector<std::string>& l, std::size_t lanes)
{
    const bool leftmost = l[kLaneId] == "leftLane";
    const bool rightmost = l[kLaneId] == "rightLane";
    (void)lanes;
    if (leftmost && (l[kHighestGapLane] == "laneLeft" || l[kHighestAttractionLane] == "laneLeft" ||
                     l[kTtcLeftPreceding] != "lowRisk" || l[kTtcLeftFollowing] != "lowRisk"))
        return false;
    if (rightmost && (l[kHighestGapLane] == "laneRight" || l[kHighestAttractionLane] == "laneRight" ||
                      l[kTtcRightPreceding] != "lowRisk" || l[kTtcRightFollowing] != "lowRisk"))
        return false;
    return true;
}

// Product of the category sets by mixed-radix decoding, then the filter.
std::set<std::string> brute_force(const Ontology& o, const std::function<bool(const LinguisticFrame&)>& keep)
{
    std::set<std::string> out;
    const std::uint64_t n = o.raw_combinations();
    for (std::uint64_t i = 0; i < n; ++i) {
        LinguisticFrame f;
        std::uint64_t rest = i;
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            const auto card = o.feature(k).categories.size();
            f.values[k] = static_cast<std::uint8_t>(rest % card);
            rest /= card;
        }
        if (keep(f)) out.insert(frame_key(f, o));
    }
    return out;
}

std::set<std::string> enumerated(const Ontology& o, std::span<const FeasibilityRule> rules)
{
    std::set<std::string> out;
    enumerate_feasible(o, rules, [&](const LinguisticFrame& f) { out.insert(frame_key(f, o)); });
    return out;
}

}  // namespace

TEST_CASE("argmax and softmax")
{
    CHECK(argmax_maneuver({0.2, 0.5, 0.3}) == Maneuver::leftLaneChange);
    CHECK(argmax_maneuver({0.4, 0.2, 0.4}) == Maneuver::laneKeep);
    const double s[] = {1.0, 2.0, 3.0};
    const auto p = softmax(s);
    CHECK(p[2] == doctest::Approx(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
    CHECK(p[1] / p[0] == doctest::Approx(std::exp(1.0)));
    const double big[] = {1000.0, 1001.0};
    const auto q = softmax(big, 2.0);
    CHECK(q[1] / q[0] == doctest::Approx(std::exp(0.5)));
    CHECK_THROWS_AS(softmax(s, 0.0), DomainError);
}

TEST_CASE("posterior matches a hand computation")
{
    const auto o = Ontology::two_lane();
    const auto m = random_model(o, 1);
    LinguisticFrame f;
    f.values[kTtcPreceding] = 2;
    f.values[kHighestGapLane] = 1;
    Probabilities p = m.prior();
    for (std::size_t k = 0; k < kFeatureCount; ++k)
        for (std::size_t h = 0; h < 3; ++h) p[h] *= m.row(k, static_cast<Maneuver>(h))[f.values[k]];
    const double z = p[0] + p[1] + p[2];
    const auto post = posterior(f, m);
    for (std::size_t h = 0; h < 3; ++h) CHECK(post.p[h] == doctest::Approx(p[h] / z).epsilon(1e-12));
}

TEST_CASE("posterior normalization and order invariance on every feasible frame")
{
    const auto o = Ontology::two_lane();
    const auto m = random_model(o, 2);
    std::array<std::size_t, kFeatureCount> rev{};
    std::iota(rev.rbegin(), rev.rend(), 0);
    std::array<std::size_t, kFeatureCount> shuffled{};
    std::iota(shuffled.begin(), shuffled.end(), 0);
    Rng rng(3);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::size_t bad = 0;
    const auto n = enumerate_feasible(o, default_feasibility_rules(o), [&](const LinguisticFrame& f) {
        const auto batch = posterior(f, m);
        if (std::abs(batch.p[0] + batch.p[1] + batch.p[2] - 1.0) > 1e-9) ++bad;
        for (const auto& seq :
             {posterior_sequential(f, m), posterior_sequential(f, m, rev), posterior_sequential(f, m, shuffled)})
            for (std::size_t h = 0; h < 3; ++h)
                if (std::abs(seq.p[h] - batch.p[h]) > 1e-12) ++bad;
    });
    CHECK(n == 17496);
    CHECK(bad == 0);
}

TEST_CASE("monotone evidence")
{
    const auto o = Ontology::two_lane();
    Rng rng(5);
    for (int trial = 0; trial < 3000; ++trial) {
        auto m = random_model(o, 100 + trial);
        LinguisticFrame f;
        for (std::size_t k = 0; k < kFeatureCount; ++k)
            f.values[k] = static_cast<std::uint8_t>(rng() % o.feature(k).categories.size());
        const std::size_t k = rng() % kFeatureCount;
        const auto h = static_cast<Maneuver>(rng() % 3);
        const double before = posterior(f, m)[h];
        auto row = m.row(k, h);
        row[f.values[k]] *= draw_uniform(rng, 1.0, 5.0);
        const double z = std::accumulate(row.begin(), row.end(), 0.0);
        for (auto& x : row) x /= z;
        m.set_row(k, h, row);
        CHECK(posterior(f, m)[h] >= before - 1e-15);
    }
}

TEST_CASE("worked example favors the left lane change")
{
    const auto o = Ontology::two_lane();
    const auto m = load_fixture(o);
    CHECK(m.source() == LikelihoodSource::fixture);
    CHECK(m.prior()[0] > m.prior()[1]);

    const auto high = *o.feature(kTtcPreceding).find("highRisk");
    const auto low = *o.feature(kTtcPreceding).find("lowRisk");
    ManeuverPosterior p{m.prior()};
    CHECK(p.argmax() == Maneuver::laneKeep);

    const auto p1 = update(p, kTtcPreceding, high, m);
    CHECK(p1[Maneuver::laneKeep] < p[Maneuver::laneKeep]);
    CHECK(p1[Maneuver::leftLaneChange] > p[Maneuver::leftLaneChange]);
    CHECK(p1[Maneuver::rightLaneChange] > p[Maneuver::rightLaneChange]);

    const auto p2 = update(p1, kTtcRightFollowing, high, m);
    CHECK(p2[Maneuver::rightLaneChange] < p1[Maneuver::rightLaneChange]);

    const auto p3 = update(p2, kTtcLeftFollowing, low, m);
    CHECK(p3[Maneuver::leftLaneChange] > p2[Maneuver::leftLaneChange]);
    CHECK(p3.argmax() == Maneuver::leftLaneChange);

    // same evidence inside a full frame; features left out of the fixture are uninformative
    LinguisticFrame f;
    f.values[kTtcPreceding] = static_cast<std::uint8_t>(high);
    f.values[kTtcRightFollowing] = static_cast<std::uint8_t>(high);
    f.values[kTtcLeftFollowing] = static_cast<std::uint8_t>(low);
    CHECK(posterior(f, m).argmax() == Maneuver::leftLaneChange);
    for (std::size_t h = 0; h < 3; ++h) CHECK(posterior(f, m).p[h] == doctest::Approx(p3.p[h]));
}

TEST_CASE("fixture loader rejects unknown labels")
{
    const auto o = Ontology::two_lane();
    std::stringstream a(R"({"likelihoods": {"nope": {}}})");
    CHECK_THROWS_AS(LikelihoodModel::load_json(a, o), VocabularyError);
    std::stringstream b(R"({"likelihoods": {"ttc_preceding": {"laneKeep": {"veryHigh": 1}}}})");
    CHECK_THROWS_AS(LikelihoodModel::load_json(b, o), VocabularyError);
    std::stringstream c("{not json");
    CHECK_THROWS_AS(LikelihoodModel::load_json(c, o), InputError);
}

TEST_CASE("frequency likelihoods")
{
    const auto o = Ontology::two_lane();
    std::vector<LabeledFrame> corpus;
    LinguisticFrame f;
    corpus.push_back({f, Maneuver::laneKeep});
    corpus.push_back({f, Maneuver::laneKeep});
    f.values[kTtcPreceding] = 0;
    corpus.push_back({f, Maneuver::leftLaneChange});
    corpus.push_back({f, Maneuver::rightLaneChange});
    const auto m = fit_likelihoods_frequency(corpus, o, 1.0);
    CHECK(m.prior()[0] == doctest::Approx(0.5));
    // two laneKeep samples in category 0 of three: (2+1)/(2+3)
    CHECK(m.likelihood(kTtcPreceding, Maneuver::laneKeep, 0) == doctest::Approx(0.6));
    CHECK(m.likelihood(kTtcPreceding, Maneuver::laneKeep, 1) == doctest::Approx(0.2));
    CHECK_NOTHROW(m.validate());
    corpus.pop_back();
    CHECK_THROWS_AS(fit_likelihoods_frequency(corpus, o), InputError);
}

TEST_CASE("frequency likelihoods from the synthetic corpus predict risky scenes as lane changes")
{
    const auto o = Ontology::two_lane();
    CorpusConfig cc;
    cc.scenes = 5000;
    const auto corpus = generate_corpus(cc);
    const auto th = fit_lateral_thresholds(corpus);
    const auto frames = categorize_corpus(corpus, th, o);
    const auto m = fit_likelihoods_frequency(frames, o);
    CHECK(m.prior()[0] > m.prior()[1]);
    std::size_t right = 0;
    for (const auto& s : frames) right += posterior(s.frame, m).argmax() == s.label;
    // well above the majority-class rate
    CHECK(static_cast<double>(right) / frames.size() > m.prior()[0] + 0.05);
}

TEST_CASE("embedding likelihoods are normalized rows")
{
    const auto o = Ontology::two_lane();
    CorpusConfig cc;
    cc.scenes = 40;
    const auto corpus = generate_corpus(cc);
    const auto triples = toy_fact_corpus(categorize_corpus(corpus, fit_lateral_thresholds(corpus), o), o, 520);
    const auto store = TripleStore::from_triples(triples, 0.1, 1);
    TrainConfig tc;
    tc.dim = 16;
    tc.learning_rate = 0.01;
    tc.batch_size = 128;
    tc.max_epochs = 30;
    const auto res = train(store, tc, 1);
    const auto m = likelihoods_from_embeddings(res.model, o);
    CHECK(m.source() == LikelihoodSource::embedding);
    CHECK_NOTHROW(m.validate());
    // the row is exactly the tempered softmax of the scores
    const auto& ents = res.model.entities();
    const int r = res.model.relations().id(o.feature(kTtcPreceding).relation);
    std::vector<double> v(tc.dim);
    const auto eh = res.model.entity(ents.id("leftLaneChange"));
    const auto ri = res.model.relation(res.model.relations().id("INTENTION_IS"));
    for (std::size_t i = 0; i < tc.dim; ++i) v[i] = eh[i] - ri[i];
    std::vector<double> s;
    for (const auto& c : o.feature(kTtcPreceding).categories) s.push_back(res.model.score_vector(v, r, ents.id(c)));
    const auto sm = softmax(s, 0.5);
    const auto m2 = likelihoods_from_embeddings(res.model, o, {0.5, {}});
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(m2.likelihood(kTtcPreceding, Maneuver::leftLaneChange, c) == doctest::Approx(sm[c]));
}

TEST_CASE("feasible counts")
{
    for (int lanes : {2, 3}) {
        const auto o = Ontology::for_lanes(lanes);
        const auto n = enumerate_feasible(o, default_feasibility_rules(o));
        // outer lanes pin four features to lowRisk and exclude one of three sides twice
        const std::uint64_t outer = 2187ull * 4;
        CHECK(n == (lanes == 2 ? 2 * outer : 2 * outer + 177147));
        CHECK(enumerate_feasible(o, {}) == o.raw_combinations());
    }
}

TEST_CASE("enumeration equals the brute-force oracle")
{
    for (int lanes : {2, 3}) {
        const auto o = Ontology::for_lanes(lanes);
        const auto rules = default_feasibility_rules(o);
        const auto oracle = brute_force(
            o, [&](const LinguisticFrame& f) { return oracle_feasible(frame_labels(f, o), o.lane_count()); });
        CHECK(enumerated(o, rules) == oracle);
    }
}

TEST_CASE("enumeration equals the oracle on custom ontologies and rules")
{
    Rng rng(17);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<FeatureDef> defs;
        std::uint64_t product = 1;
        for (std::size_t k = 0; k < kFeatureCount; ++k) {
            std::size_t card = 2 + rng() % 3;
            const std::uint64_t rest = 1ull << (kFeatureCount - k - 1);
            if (product * card * rest > 1000000) card = 2;
            product *= card;
            FeatureDef d{"f" + std::to_string(k), "R" + std::to_string(k), {}};
            for (std::size_t c = 0; c < card; ++c)
                d.categories.push_back("c" + std::to_string(k) + "_" + std::to_string(c));
            defs.push_back(d);
        }
        const Ontology o(defs);
        std::vector<FeasibilityRule> rules;
        for (int r = 0; r < 3; ++r) {
            const std::size_t a = rng() % kFeatureCount, b = rng() % kFeatureCount;
            rules.push_back({"pair", [a, b](const LinguisticFrame& f) { return f.values[a] + f.values[b] != 2; }});
        }
        const auto oracle = brute_force(o, [&](const LinguisticFrame& f) { return is_feasible(f, rules); });
        CHECK(enumerated(o, rules) == oracle);
    }
}

TEST_CASE("lookup table backends agree on every two-lane frame")
{
    const auto o = Ontology::two_lane();
    const auto m = random_model(o, 9);
    const auto rules = default_feasibility_rules(o);
    const auto table = LookupTable::build(o, rules, [&](const LinguisticFrame& f) { return posterior(f, m); });
    const auto scan = ScanTable::from_table(table);
    REQUIRE(table.size() == 17496);
    CHECK(scan.size() == table.size());
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        const auto& f = table.frames()[i];
        const auto& h = table.query_hash(f);
        std::size_t rows = 0;
        const auto s = scan.query(f, &rows);
        if (!(h == s) || !(h == table.predictions()[i]) || rows != i + 1) ++mismatches;
        const auto post = posterior(f, m);
        if (h.posterior != post.p || h.maneuver != post.argmax()) ++mismatches;
    }
    CHECK(mismatches == 0);

    LinguisticFrame infeasible;  // leftLane with highest gap on the left
    infeasible.values[kLaneId] = 0;
    CHECK_THROWS_AS(table.query_hash(infeasible), InfeasibleFrame);
    CHECK_THROWS_AS(scan.query(infeasible), InfeasibleFrame);
}

TEST_CASE("lookup table CSV and snapshot round trips")
{
    const auto o = Ontology::two_lane();
    const auto m = random_model(o, 10);
    const auto rules = default_feasibility_rules(o);
    const auto table = LookupTable::build(o, rules, [&](const LinguisticFrame& f) { return posterior(f, m); });

    std::stringstream csv;
    table.write_csv(csv);
    const std::string text = csv.str();
    const auto back = LookupTable::read_csv(csv, o);
    CHECK(back.frames() == table.frames());
    CHECK(back.predictions() == table.predictions());
    std::stringstream csv2(text);
    const auto scan = ScanTable::from_csv(csv2, o);
    CHECK(scan.query(table.frames()[123]) == table.predictions()[123]);

    std::stringstream snap;
    table.write_snapshot(snap);
    const std::string bytes = snap.str();
    CHECK(bytes.substr(0, 4) == "CPLT");
    CHECK(bytes.size() == 4 + 4 + 8 + 8 + table.size() * (12 + 1 + 24));
    const auto from_snap = LookupTable::read_snapshot(snap, o);
    CHECK(from_snap.predictions() == table.predictions());

    std::stringstream stale(bytes);
    CHECK_THROWS_AS(LookupTable::read_snapshot(stale, Ontology::three_lane()), StaleTable);
    std::stringstream cut(bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(LookupTable::read_snapshot(cut, o), CorruptTable);
    std::stringstream junk("XXXXjunk");
    CHECK_THROWS_AS(LookupTable::read_snapshot(junk, o), CorruptTable);

    // a duplicated row is refused by both readers
    const auto nl = text.find('\n');
    const auto row_end = text.find('\n', nl + 1);
    const std::string dup = text + text.substr(nl + 1, row_end - nl);
    std::stringstream d1(dup), d2(dup);
    CHECK_THROWS_AS(LookupTable::read_csv(d1, o), CorruptTable);
    CHECK_THROWS_AS(ScanTable::from_csv(d2, o), CorruptTable);
    std::stringstream hdr("bad,header\n");
    CHECK_THROWS_AS(LookupTable::read_csv(hdr, o), CorruptTable);
}

TEST_CASE("latency scaling shape")
{
    // four table sizes from the two ontologies, halved by an extra rule
    std::vector<double> sizes, scan_mean, hash_mean;
    for (int lanes : {2, 3})
        for (bool halve : {true, false}) {
            const auto o = Ontology::for_lanes(lanes);
            auto rules = default_feasibility_rules(o);
            if (halve)
                rules.push_back(
                    {"straight only", [](const LinguisticFrame& f) { return f.values[kLateralVelocity] == 1; }});
            const auto table = LookupTable::build(o, rules, [](const LinguisticFrame&) { return ManeuverPosterior{}; });
            const auto scan = ScanTable::from_table(table);
            sizes.push_back(static_cast<double>(table.size()));
            scan_mean.push_back(bench_query(table, &scan, Backend::scan, 100, 1).mean_s);
            hash_mean.push_back(bench_query(table, nullptr, Backend::hash, 20000, 1).mean_s);
        }
    auto slope = [&](const std::vector<double>& y) {
        const double mx = std::accumulate(sizes.begin(), sizes.end(), 0.0) / sizes.size();
        const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            sxy += (sizes[i] - mx) * (y[i] - my);
            sxx += (sizes[i] - mx) * (sizes[i] - mx);
        }
        return sxy / sxx;
    };
    CHECK(slope(scan_mean) > 0.0);
    const double hash_avg = std::accumulate(hash_mean.begin(), hash_mean.end(), 0.0) / hash_mean.size();
    const double n_max = *std::max_element(sizes.begin(), sizes.end());
    CHECK(std::abs(slope(hash_mean)) * n_max < 0.2 * hash_avg);
    // full three-lane over full two-lane
    const double hash_ratio = hash_mean[3] / hash_mean[1];
    CHECK(hash_ratio >= 0.5);
    CHECK(hash_ratio <= 1.5);
    CHECK(scan_mean[3] / scan_mean[0] > 6.0);
}

TEST_CASE("bench needs a scan table for the scan backend")
{
    const auto o = Ontology::two_lane();
    const auto table =
        LookupTable::build(o, default_feasibility_rules(o), [](const LinguisticFrame&) { return ManeuverPosterior{}; });
    CHECK_THROWS(bench_query(table, nullptr, Backend::scan, 10, 1));
    const auto s = bench_query(table, nullptr, Backend::hash, 10, 1);
    CHECK(s.queries == 10);
    CHECK(s.table_size == table.size());
    CHECK(s.p50_s <= s.p99_s);
}
