// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <string>

#include "coop/corpus.hpp"
#include "coop/errors.hpp"
#include "coop/inference.hpp"
#include "coop/kge.hpp"
#include "coop/nodes.hpp"
#include "coop/perception.hpp"
#include "coop/sim.hpp"

using namespace coop;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

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

NumericFeatures random_features(Rng& rng)
{
    NumericFeatures n;
    n.lateral_velocity = draw_normal(rng, 0, 0.2);
    n.lateral_acceleration = draw_normal(rng, 0, 0.2);
    auto ttc = [&] { return draw_bernoulli(rng, 0.3) ? INFINITY : draw_uniform(rng, 0, 10); };
    n.ttc_preceding = ttc();
    n.ttc_left_preceding = ttc();
    n.ttc_right_preceding = ttc();
    n.ttc_left_following = ttc();
    n.ttc_right_following = ttc();
    n.lane_count = 2;
    n.lane_index = static_cast<int>(rng() % 2);
    n.lane_offset = draw_uniform(rng, -1, 1);
    n.thw_preceding = ttc();
    for (int s = 0; s < 3; ++s) {
        if (draw_bernoulli(rng, 0.6)) n.frontal_gap[s] = draw_uniform(rng, 0, 50);
        if (draw_bernoulli(rng, 0.6)) n.lane_mean_speed[s] = draw_uniform(rng, 0, 3);
    }
    return n;
}

// ---- 1
Outcome lookup_scaling()
{
    const auto t0 = Clock::now();
    auto build = [](int lanes) {
        const auto o = Ontology::for_lanes(lanes);
        const auto m = random_model(o, 1);
        return LookupTable::build(o, default_feasibility_rules(o),
                                  [&](const LinguisticFrame& f) { return posterior(f, m); });
    };
    const auto small = build(2);
    const auto large = build(3);
    const auto scan_small = ScanTable::from_table(small);
    const auto scan_large = ScanTable::from_table(large);
    const auto hs = bench_query(small, nullptr, Backend::hash, 20000, 1);
    const auto hl = bench_query(large, nullptr, Backend::hash, 20000, 1);
    const auto ss = bench_query(small, &scan_small, Backend::scan, 2000, 1);
    const auto sl = bench_query(large, &scan_large, Backend::scan, 300, 1);
    const double hash_ratio = hl.mean_s / hs.mean_s;
    const double scan_ratio = sl.mean_s / ss.mean_s;
    const double speedup = sl.mean_s / hl.mean_s;
    const double runtime = seconds_since(t0);
    const bool sizes =
        small.size() >= 15000 && small.size() <= 21000 && large.size() >= 150000 && large.size() <= 300000;
    const bool ok = sizes && hash_ratio >= 0.5 && hash_ratio <= 1.5 && scan_ratio >= 6 && scan_ratio <= 20 &&
                    speedup >= 1e3 && runtime < 120;
    return {ok, fmt("sizes %zu/%zu hash ratio %.2f scan ratio %.2f speedup %.3g runtime %.1f s", small.size(),
                    large.size(), hash_ratio, scan_ratio, speedup, runtime)};
}

// ---- 2
Outcome backend_equivalence()
{
    const auto o = Ontology::two_lane();
    const auto m = random_model(o, 2);
    const auto table =
        LookupTable::build(o, default_feasibility_rules(o), [&](const LinguisticFrame& f) { return posterior(f, m); });
    const auto scan = ScanTable::from_table(table);
    std::size_t mismatches = 0;
    for (const auto& f : table.frames())
        if (!(table.query_hash(f) == scan.query(f))) ++mismatches;
    return {mismatches == 0 && table.size() > 15000, fmt("%zu frames, %zu mismatches", table.size(), mismatches)};
}

// ---- 3
struct Cluster {
    std::unique_ptr<Node> server, relay, client;
};

Cluster start_cluster(Topology mode, double d_cr, double d_rs, double d_cs)
{
    TopologyConfig topo;
    topo.mode = mode;
    topo.client = Endpoint{"127.0.0.1", 0};
    topo.relay = Endpoint{"127.0.0.1", 0};
    topo.server = Endpoint{"127.0.0.1", 0};
    topo.client_relay_delay_ms = d_cr;
    topo.relay_server_delay_ms = d_rs;
    topo.client_server_delay_ms = d_cs;
    auto opts = [&](NodeRole role) {
        NodeOptions o;
        o.role = role;
        o.topology = topo;
        o.predictor = [](const LinguisticFrame&) { return ManeuverPosterior{}; };
        return o;
    };
    Cluster c;
    c.server = std::make_unique<Node>(opts(NodeRole::prediction_server));
    c.server->start();
    topo.server->port = c.server->port();
    if (mode == Topology::relay) {
        c.relay = std::make_unique<Node>(opts(NodeRole::relay));
        c.relay->start();
        topo.relay->port = c.relay->port();
    }
    c.client = std::make_unique<Node>(opts(NodeRole::perception_client));
    c.client->start();
    return c;
}

double mean_one_way(Topology mode, double d_cr, double d_rs, double d_cs, int n)
{
    auto c = start_cluster(mode, d_cr, d_rs, d_cs);
    SensorFeed feed(Endpoint{"127.0.0.1", c.client->port()});
    if (!feed.wait_ready(2000ms)) throw IoError("path to the server never answered");
    Rng rng(3);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!feed.submit(static_cast<std::uint64_t>(i), 0.1 * i, random_features(rng))) throw IoError("submit failed");
        auto p = feed.next(2000ms);
        if (!p) throw IoError("no prediction");
        sum += p->one_way_ms();
    }
    return sum / n;
}

Outcome relay_additivity()
{
    const double relay = mean_one_way(Topology::relay, 3.5, 3.25, 0.0, 100);
    const double direct = mean_one_way(Topology::direct, 0.0, 0.0, 3.25, 100);
    const bool ok = std::abs(relay - 7.25) <= 1.5 && std::abs(direct - 3.25) <= 1.0;
    return {ok, fmt("relay %.3f ms (target 7.25 +- 1.5), direct %.3f ms (target 3.25 +- 1.0), 100 messages each", relay,
                    direct)};
}

// ---- 4
Outcome rtt_estimator()
{
    bool ok = true;
    std::string detail;
    for (double d : {2.0, 5.0, 10.0}) {
        auto c = start_cluster(Topology::direct, 0, 0, d);
        const auto s = measure_rtt(Endpoint{"127.0.0.1", c.server->port()}, 50, 1000ms, LinkShaping{d, 0, 1});
        const bool good = std::abs(s.one_way_ms - d) <= 0.2 * d + 0.5 && s.rtt_ms.size() == 50;
        ok = ok && good;
        detail += fmt("%g->%.3f ms ", d, s.one_way_ms);
    }
    return {ok, detail + "(n=50)"};
}

// ---- 5
Outcome scenario_contrast()
{
    const auto t0 = Clock::now();
    const auto stack = build_prediction_stack(2);
    int collisions = 0, short_horizon = 0, accel_fail = 0, ev_fail = 0;
    double min_h = INFINITY, max_h = -INFINITY;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        ScenarioConfig cfg;
        cfg.rng_seed = seed;
        cfg.prediction_enabled = true;
        const auto on = run_scenario(cfg, &stack);
        cfg.prediction_enabled = false;
        const auto off = run_scenario(cfg, nullptr);
        collisions += on.metrics.collision;
        const double h = on.metrics.anticipation_horizon;
        if (!(h >= 3.0)) ++short_horizon;
        if (std::isfinite(h)) min_h = std::min(min_h, h), max_h = std::max(max_h, h);
        if (!(std::abs(on.metrics.tv_min_accel) < 0.5 * std::abs(off.metrics.tv_min_accel))) ++accel_fail;
        bool ev_ok = on.log.events.prediction_time.has_value();
        double prev = INFINITY;
        for (const auto& v : on.log.vehicles) {
            if (!ev_ok) break;
            if (v.role != Role::EV || v.t < *on.log.events.prediction_time) continue;
            if (v.speed > prev) ev_ok = false;
            prev = v.speed;
        }
        if (!ev_ok || prev != 0.0) ++ev_fail;
    }
    const double runtime = seconds_since(t0);
    const bool ok = collisions == 0 && short_horizon == 0 && accel_fail == 0 && ev_fail == 0 && runtime < 60;
    return {ok, fmt("50 seeds: collisions %d, horizon<3s %d (range %.2f-%.2f s), accel ratio fails %d, EV profile "
                    "fails %d, runtime %.1f s",
                    collisions, short_horizon, min_h, max_h, accel_fail, ev_fail, runtime)};
}

// ---- 6
Outcome depth_geometry()
{
    CameraModel cam;
    double worst = 0.0;
    for (double z = 0.3; z <= 50.0; z += 0.001)
        worst = std::max(worst, std::abs(disparity_to_depth(cam.fx * cam.baseline / z, cam) - z));
    auto rms = [&](double z) {
        Rng rng(11);
        DepthNoise noise;
        double sum = 0.0;
        const int n = 5000;
        for (int i = 0; i < n; ++i) {
            const auto det = synthesize_observation({0, 0, z}, cam, noise, rng);
            if (!det) throw DomainError("no detection");
            const double e = (disparity_to_depth(det->disparity, cam) - z) / z;
            sum += e * e;
        }
        return std::sqrt(sum / n);
    };
    const double r3 = rms(3.0), r12 = rms(12.0);
    const bool ok = worst <= 1e-12 && r12 >= 3.0 * r3 && r3 < 0.01;
    return {ok, fmt("round-trip max error %.2e, RMS %.4f%% at 3 m, %.4f%% at 12 m (ratio %.1f)", worst, 100 * r3,
                    100 * r12, r12 / r3)};
}

// ---- 7
Outcome pid_actuator()
{
    EvDrive drive;
    double settled_at = -1.0;
    for (int k = 1; k <= 200; ++k) {
        drive.track(1.2);
        if (std::abs(1.2 - drive.speed()) < 0.02 * 1.2) {
            if (settled_at < 0) settled_at = 0.1 * k;
        } else {
            settled_at = -1.0;
        }
    }
    Rng rng(42);
    std::size_t bound_fail = 0, stop_fail = 0;
    for (int seq = 0; seq < 100000; ++seq) {
        PwmCommand p{draw_uniform(rng, -50, 150), 0};
        const int len = 1 + static_cast<int>(rng() % 30);
        for (int k = 0; k < len; ++k) {
            const auto s = static_cast<LongitudinalState>(rng() % 3);
            p = apply_state(s, p);
            if (p.duty < 0 || p.duty > 100 || p.mapped < 0 || p.mapped > 255) ++bound_fail;
            if (s == LongitudinalState::Stop && (p.duty != 0.0 || p.mapped != 0)) ++stop_fail;
        }
    }
    const bool ok = settled_at > 0 && settled_at <= 5.0 && bound_fail == 0 && stop_fail == 0;
    return {ok, fmt("0->1.2 m/s settles at %.1f s, bound violations %zu, Stop violations %zu over 1e5 sequences",
                    settled_at, bound_fail, stop_fail)};
}

// ---- 8
Outcome bayes_engine()
{
    const auto o = Ontology::two_lane();
    const auto m = random_model(o, 8);
    std::array<std::size_t, kFeatureCount> rev{};
    std::iota(rev.rbegin(), rev.rend(), 0);
    double worst_norm = 0.0, worst_order = 0.0;
    const auto n = enumerate_feasible(o, default_feasibility_rules(o), [&](const LinguisticFrame& f) {
        const auto b = posterior(f, m);
        worst_norm = std::max(worst_norm, std::abs(b.p[0] + b.p[1] + b.p[2] - 1.0));
        for (const auto& s : {posterior_sequential(f, m), posterior_sequential(f, m, rev)})
            for (std::size_t h = 0; h < 3; ++h) worst_order = std::max(worst_order, std::abs(s.p[h] - b.p[h]));
    });
    std::ifstream in(COOP_FIXTURES "/risk_likelihoods.json");
    const auto fixture = LikelihoodModel::load_json(in, o);
    LinguisticFrame f;
    f.values[kTtcPreceding] = static_cast<std::uint8_t>(*o.feature(kTtcPreceding).find("highRisk"));
    f.values[kTtcRightFollowing] = static_cast<std::uint8_t>(*o.feature(kTtcRightFollowing).find("highRisk"));
    f.values[kTtcLeftFollowing] = static_cast<std::uint8_t>(*o.feature(kTtcLeftFollowing).find("lowRisk"));
    const auto post = posterior(f, fixture);
    const bool ok = worst_norm <= 1e-9 && worst_order <= 1e-12 && post.argmax() == Maneuver::leftLaneChange;
    return {ok, fmt("%llu frames, max |sum-1| %.1e, max batch-sequential gap %.1e, worked example argmax %s",
                    static_cast<unsigned long long>(n), worst_norm, worst_order,
                    std::string(to_string(post.argmax())).c_str())};
}

// ---- 9
Outcome transe_sanity()
{
    const auto t0 = Clock::now();
    const auto o = Ontology::two_lane();
    CorpusConfig cc;
    cc.scenes = 200 / 13 + 2;
    const auto corpus = generate_corpus(cc);
    const auto triples = toy_fact_corpus(categorize_corpus(corpus, fit_lateral_thresholds(corpus), o), o, 200);
    const auto store = TripleStore::from_triples(triples, 0.2, 1);
    TrainConfig tc;
    tc.dim = 32;
    tc.learning_rate = 0.01;
    tc.batch_size = 64;
    tc.max_epochs = 300;
    tc.patience = 100;
    const auto res = train(store, tc, 1);
    const double final_mrr = mrr(res.model, store.validation, CorruptionSide::tail);
    const double baseline = random_mrr_baseline(store.entities.size());
    std::size_t above = 0;
    for (const auto& t : store.validation) {
        double mean = 0.0;
        int k = 0;
        for (int e = 0; e < static_cast<int>(store.entities.size()); ++e)
            if (e != t.t) mean += res.model.score(t.h, t.r, e), ++k;
        above += res.model.score(t.h, t.r, t.t) > mean / k;
    }
    const double frac = static_cast<double>(above) / store.validation.size();
    const bool deterministic = train(store, tc, 1).model == res.model;
    const double runtime = seconds_since(t0);
    const bool ok =
        triples.size() == 200 && final_mrr >= 3 * baseline && frac >= 0.95 && deterministic && runtime < 120;
    return {ok, fmt("MRR %.3f vs random %.3f (x%.1f), true>mean corruption %.1f%%, deterministic %s, runtime %.1f s",
                    final_mrr, baseline, final_mrr / baseline, 100 * frac, deterministic ? "yes" : "no", runtime)};
}

// ---- 10
std::set<std::string> brute_force(const Ontology& o, const std::function<bool(const LinguisticFrame&)>& keep)
{
    std::set<std::string> out;
    for (std::uint64_t i = 0; i < o.raw_combinations(); ++i) {
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

Outcome enumeration_oracle()
{
    bool ok = true;
    std::string detail;
    auto check = [&](const Ontology& o, const std::vector<FeasibilityRule>& rules, const char* name) {
        std::set<std::string> got;
        enumerate_feasible(o, rules, [&](const LinguisticFrame& f) { got.insert(frame_key(f, o)); });
        const auto want = brute_force(o, [&](const LinguisticFrame& f) { return is_feasible(f, rules); });
        ok = ok && got == want;
        detail += fmt("%s %zu/%llu %s; ", name, got.size(), static_cast<unsigned long long>(o.raw_combinations()),
                      got == want ? "equal" : "DIFFER");
    };
    for (int lanes : {2, 3}) {
        const auto o = Ontology::for_lanes(lanes);
        check(o, default_feasibility_rules(o), lanes == 2 ? "two-lane" : "three-lane");
    }
    // a wider ontology near the 1e6 bound
    std::vector<FeatureDef> defs;
    const int cards[kFeatureCount] = {4, 4, 3, 3, 3, 3, 3, 2, 3, 3, 3, 2};
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        FeatureDef d{"f" + std::to_string(k), "R" + std::to_string(k), {}};
        for (int c = 0; c < cards[k]; ++c) d.categories.push_back("c" + std::to_string(k) + "_" + std::to_string(c));
        defs.push_back(d);
    }
    const Ontology wide(defs);
    std::vector<FeasibilityRule> rules{
        {"a", [](const LinguisticFrame& f) { return f.values[0] + f.values[1] != 3; }},
        {"b", [](const LinguisticFrame& f) { return !(f.values[7] == 1 && f.values[11] == 0); }},
    };
    check(wide, rules, "custom");
    return {ok, detail};
}

// ---- 11
Outcome codec_robustness()
{
    Rng rng(5);
    const auto o = Ontology::two_lane();
    std::vector<std::string> seeds;
    std::size_t mismatches = 0, total = 0;
    for (int i = 0; i < 20000; ++i) {
        Message m;
        const auto ts = static_cast<std::int64_t>(rng() >> 2);
        switch (i % 6) {
        case 0: m = make_message(i, ts, HelloPayload{"relay"}); break;
        case 1: {
            FeaturesPayload f;
            f.schema_version = 1 + i % 2;
            f.frame_id = i;
            f.t = 0.1 * i;
            f.features = random_features(rng);
            m = make_message(i, ts, f);
            break;
        }
        case 2: {
            LinguisticPayload l;
            l.frame_id = i;
            LinguisticFrame fr;
            for (std::size_t k = 0; k < kFeatureCount; ++k)
                fr.values[k] = static_cast<std::uint8_t>(rng() % o.feature(k).categories.size());
            l.labels = frame_labels(fr, o);
            m = make_message(i, ts, l);
            break;
        }
        case 3: {
            PredictionPayload p;
            p.request_seq = i;
            p.posterior = {draw_uniform(rng, 0, 1), draw_uniform(rng, 0, 1), draw_uniform(rng, 0, 1)};
            p.maneuver = argmax_maneuver(p.posterior);
            m = make_message(i, ts, p);
            break;
        }
        case 4: m = make_message(i, ts, EchoPayload{}); break;
        default: m = make_message(i, ts, EchoReplyPayload{rng() % 100, ts}); break;
        }
        const auto bytes = frame_encode(m);
        if (!(frame_decode(bytes) == m)) ++mismatches;
        ++total;
        if (seeds.size() < 64) seeds.push_back(bytes);
    }
    std::size_t decoded = 0, rejected = 0, other = 0;
    const int fuzz = 100000;
    for (int i = 0; i < fuzz; ++i) {
        std::string s;
        if (i % 3 == 0) {
            s.resize(rng() % 64);
            for (auto& c : s) c = static_cast<char>(rng());
        } else {
            s = seeds[rng() % seeds.size()];
            if (i % 3 == 1)
                for (int k = 0; k < 3; ++k) s[rng() % s.size()] = static_cast<char>(rng());
            else
                s.resize(rng() % (s.size() + 1));
        }
        try {
            frame_decode(s);
            ++decoded;
        } catch (const DecodeError&) {
            ++rejected;
        } catch (...) {
            ++other;
        }
    }
    const bool ok = mismatches == 0 && other == 0;
    return {ok, fmt("%zu round trips, %zu mismatches; %d fuzz inputs: %zu decoded, %zu DecodeError, %zu other", total,
                    mismatches, fuzz, decoded, rejected, other)};
}

// ---- 12
Outcome cadence_ordering()
{
    CameraModel cam;
    Rng rng(12);
    const auto p1 = pipeline_cadence(yolov8n_profile(), default_pipeline_profile(PipelineVariant::P1), cam, 10000, rng);
    const auto p2 = pipeline_cadence(yolov8n_profile(), default_pipeline_profile(PipelineVariant::P2), cam, 10000, rng);
    const double f1 = mean_fps(p1), f2 = mean_fps(p2);
    const bool ok = f2 > f1 && std::abs(f2 - 5.3) <= 0.1 * 5.3 && std::abs(f1 - 3.75) <= 0.1 * 3.75;
    return {ok, fmt("P2 %.3f FPS (5.3), P1 %.3f FPS (3.75)", f2, f1)};
}

}  // namespace

int main()
{
    const std::pair<const char*, Outcome (*)()> criteria[] = {
        {"lookup scaling", lookup_scaling},       {"backend equivalence", backend_equivalence},
        {"relay additivity", relay_additivity},   {"RTT/2 estimator", rtt_estimator},
        {"scenario contrast", scenario_contrast}, {"depth geometry", depth_geometry},
        {"PID/actuator", pid_actuator},           {"Bayesian engine", bayes_engine},
        {"TransE sanity", transe_sanity},         {"enumeration oracle", enumeration_oracle},
        {"codec robustness", codec_robustness},   {"cadence ordering", cadence_ordering},
    };
    int failed = 0;
    int i = 0;
    for (const auto& [name, fn] : criteria) {
        ++i;
        Outcome r;
        try {
            r = fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        failed += !r.pass;
        std::printf("%s [%2d] %s: %s\n", r.pass ? "PASS" : "FAIL", i, name, r.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/12 criteria passed\n", 12 - failed);
    return failed == 0 ? 0 : 1;
}
