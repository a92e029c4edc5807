// SPDX-License-Identifier: Apache-2.0
//
// coopsim: one subcommand per experiment.
#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "coop/corpus.hpp"
#include "coop/errors.hpp"
#include "coop/inference.hpp"
#include "coop/kge.hpp"
#include "coop/nodes.hpp"
#include "coop/numfmt.hpp"
#include "coop/sim.hpp"

using namespace coop;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int)
{
    g_stop = true;
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    return out;
}

std::ifstream open_in(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

ScenarioConfig load_scenario(const std::string& path)
{
    if (path.empty()) return ScenarioConfig{};
    auto in = open_in(path);
    return scenario_from_json(in);
}

void print_metrics(const RunMetrics& m)
{
    std::printf("anticipation_horizon_s %s\n", format_double(m.anticipation_horizon).c_str());
    std::printf("tv_min_accel %s\n", format_double(m.tv_min_accel).c_str());
    std::printf("ev_stop_time_s %s\n", format_double(m.ev_stop_time).c_str());
    std::printf("min_ttc_s %s\n", format_double(m.min_ttc).c_str());
    std::printf("collision %d\n", m.collision ? 1 : 0);
}

// ON: no collision and an EV that winds down to rest after the prediction.
// OFF: no lane change completes before a harsh brake.
std::vector<std::string> run_violations(const RunLog& log, const RunMetrics& m)
{
    std::vector<std::string> bad;
    if (log.prediction_enabled) {
        if (m.collision) bad.push_back("collision with prediction on");
        if (log.events.prediction_time) {
            double prev = INFINITY;
            bool stopped = false;
            for (const auto& r : log.vehicles) {
                if (r.role != Role::EV || r.t < *log.events.prediction_time) continue;
                if (r.speed > prev) bad.push_back("EV speed rises after the prediction");
                prev = r.speed;
                stopped = stopped || r.speed == 0.0;
            }
            if (!stopped) bad.push_back("EV never stops after the prediction");
        }
    } else if (log.events.crossing_time && !log.events.harsh_brake_time) {
        bad.push_back("TV completed a lane change without prediction");
    }
    std::sort(bad.begin(), bad.end());
    bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
    return bad;
}

Topology topology_from(const std::string& s)
{
    return parse_topology(s);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"coopsim: cooperative lane-change prediction toolkit"};
    app.require_subcommand(1);

    // ---- simulate
    auto* sim = app.add_subcommand("simulate", "run one scenario and report its metrics");
    std::string sim_config, sim_csv, sim_svg, sim_client;
    std::uint64_t sim_seed = 0;
    std::string sim_prediction = "config";
    sim->add_option("--config", sim_config, "scenario JSON (defaults when omitted)");
    sim->add_option("--seed", sim_seed, "override rng_seed");
    sim->add_option("--prediction", sim_prediction, "on, off or config")->check(CLI::IsMember({"on", "off", "config"}));
    sim->add_option("--csv", sim_csv, "write the run log as CSV");
    sim->add_option("--svg", sim_svg, "write the run plot as SVG");
    sim->add_option("--client", sim_client, "networked mode: perception client host:port");

    // ---- compare
    auto* cmp = app.add_subcommand("compare", "run with and without prediction and compare");
    std::string cmp_config, cmp_csv, cmp_svg;
    std::uint64_t cmp_seed = 0;
    cmp->add_option("--config", cmp_config, "scenario JSON");
    cmp->add_option("--seed", cmp_seed, "override rng_seed");
    cmp->add_option("--csv", cmp_csv, "write the metric deltas and series as CSV");
    cmp->add_option("--svg", cmp_svg, "write the side-by-side plot as SVG");

    // ---- build-table
    auto* bt = app.add_subcommand("build-table", "compile the posterior lookup table");
    int bt_lanes = 2;
    std::string bt_out, bt_snapshot, bt_fixture;
    bt->add_option("--lanes", bt_lanes, "lane count (2 or 3)")->check(CLI::IsMember({2, 3}));
    bt->add_option("--csv", bt_out, "write the table as CSV");
    bt->add_option("--snapshot", bt_snapshot, "write the binary snapshot");
    bt->add_option("--likelihoods", bt_fixture, "likelihood fixture JSON instead of corpus frequencies");

    // ---- bench-lookup
    auto* bl = app.add_subcommand("bench-lookup", "time hash and scan queries");
    int bl_lanes = 2;
    std::size_t bl_queries = 2000;
    std::uint64_t bl_seed = 1;
    std::string bl_backend = "both";
    bl->add_option("--lanes", bl_lanes, "lane count (2 or 3)")->check(CLI::IsMember({2, 3}));
    bl->add_option("--queries", bl_queries, "queries per backend");
    bl->add_option("--seed", bl_seed, "query draw seed");
    bl->add_option("--backend", bl_backend, "hash, scan or both")->check(CLI::IsMember({"hash", "scan", "both"}));

    // ---- node
    auto* nd = app.add_subcommand("node", "run one comm node until interrupted");
    std::string nd_role, nd_mode = "relay", nd_client, nd_relay, nd_server;
    double nd_cr = 0, nd_rs = 0, nd_cs = 0, nd_drop = 0;
    int nd_lanes = 2;
    nd->add_option("--role", nd_role, "perception_client, relay or prediction_server")->required();
    nd->add_option("--mode,--topology", nd_mode, "direct or relay")->check(CLI::IsMember({"direct", "relay"}));
    nd->add_option("--client", nd_client, "perception client listen host:port")->required();
    nd->add_option("--relay", nd_relay, "relay host:port");
    nd->add_option("--server", nd_server, "prediction server host:port")->required();
    nd->add_option("--client-relay-delay-ms", nd_cr, "injected delay on the client-relay hop");
    nd->add_option("--relay-server-delay-ms", nd_rs, "injected delay on the relay-server hop");
    nd->add_option("--client-server-delay-ms", nd_cs, "injected delay on the direct hop");
    nd->add_option("--drop,--drop-prob", nd_drop, "injected drop probability");
    nd->add_option("--lanes", nd_lanes, "lane count of the ontology")->check(CLI::IsMember({2, 3}));

    // ---- rtt
    auto* rt = app.add_subcommand("rtt", "estimate one-way latency from ECHO round trips");
    std::string rt_peer, rt_csv;
    std::size_t rt_n = 50;
    double rt_delay = 0.0;
    rt->add_option("--peer", rt_peer, "host:port of any node")->required();
    rt->add_option("-n,--samples", rt_n, "round trips (>= 5)");
    rt->add_option("--delay-ms", rt_delay, "delay on our sends; give the peer node the same for a symmetric link");
    rt->add_option("--csv", rt_csv, "write the samples as CSV");

    // ---- train-kge
    auto* tk = app.add_subcommand("train-kge", "train TransE embeddings on the toy fact corpus");
    std::size_t tk_triples = 200, tk_dim = 32, tk_epochs = 300;
    std::uint64_t tk_seed = 1;
    double tk_lr = 0.01;
    std::string tk_facts, tk_out;
    tk->add_option("--triples", tk_triples, "toy corpus size");
    tk->add_option("--facts", tk_facts, "facts CSV instead of the toy corpus");
    tk->add_option("--dim", tk_dim, "embedding dimension");
    tk->add_option("--epochs", tk_epochs, "maximum epochs");
    tk->add_option("--lr", tk_lr, "Adam learning rate");
    tk->add_option("--seed", tk_seed, "training seed");
    tk->add_option("--out", tk_out, "write the best checkpoint as JSON");

    // ---- export
    auto* ex = app.add_subcommand("export", "re-export a run-log CSV");
    std::string ex_in, ex_out, ex_format = "svg";
    ex->add_option("--in", ex_in, "run-log CSV")->required();
    ex->add_option("--out", ex_out, "output path")->required();
    ex->add_option("--format", ex_format, "csv or svg")->check(CLI::IsMember({"csv", "svg"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            ScenarioConfig cfg = load_scenario(sim_config);
            if (sim->count("--seed")) cfg.rng_seed = sim_seed;
            if (sim_prediction != "config") cfg.prediction_enabled = sim_prediction == "on";
            std::optional<PredictionStack> stack;
            if (cfg.prediction_enabled) stack = build_prediction_stack(cfg.lanes.lane_count);
            std::optional<NetworkedRun> net;
            if (!sim_client.empty()) net = NetworkedRun{parse_endpoint(sim_client)};
            const auto r = run_scenario(cfg, stack ? &*stack : nullptr, net ? &*net : nullptr);
            print_metrics(r.metrics);
            if (!sim_csv.empty()) export_runlog(r.log, sim_csv, "csv");
            if (!sim_svg.empty()) export_runlog(r.log, sim_svg, "svg");
            const auto bad = run_violations(r.log, r.metrics);
            for (const auto& b : bad) std::fprintf(stderr, "check failed: %s\n", b.c_str());
            return bad.empty() ? 0 : 1;
        }
        if (*cmp) {
            ScenarioConfig cfg = load_scenario(cmp_config);
            if (cmp->count("--seed")) cfg.rng_seed = cmp_seed;
            const auto stack = build_prediction_stack(cfg.lanes.lane_count);
            cfg.prediction_enabled = true;
            const auto on = run_scenario(cfg, &stack);
            cfg.prediction_enabled = false;
            const auto off = run_scenario(cfg, nullptr);
            const auto rep = compare_runs(on.log, on.metrics, off.log, off.metrics);
            std::printf("%-22s %12s %12s %12s\n", "metric", "on", "off", "delta");
            for (const auto& d : rep.deltas)
                std::printf("%-22s %12.4f %12.4f %12.4f\n", d.name.c_str(), d.on, d.off, d.delta);
            if (!cmp_csv.empty()) {
                auto out = open_out(cmp_csv);
                rep.write_csv(out);
            }
            if (!cmp_svg.empty()) {
                auto out = open_out(cmp_svg);
                rep.write_svg(out);
            }
            auto bad = run_violations(on.log, on.metrics);
            const auto bad_off = run_violations(off.log, off.metrics);
            bad.insert(bad.end(), bad_off.begin(), bad_off.end());
            for (const auto& b : bad) std::fprintf(stderr, "check failed: %s\n", b.c_str());
            return bad.empty() ? 0 : 1;
        }
        if (*bt) {
            const auto ontology = Ontology::for_lanes(bt_lanes);
            std::optional<LikelihoodModel> model;
            if (!bt_fixture.empty()) {
                auto in = open_in(bt_fixture);
                model = LikelihoodModel::load_json(in, ontology);
            } else {
                CorpusConfig cc;
                cc.lane_count = bt_lanes;
                const auto corpus = generate_corpus(cc);
                model = fit_likelihoods_frequency(categorize_corpus(corpus, fit_lateral_thresholds(corpus), ontology),
                                                  ontology);
            }
            const auto rules = default_feasibility_rules(ontology);
            const auto t0 = std::chrono::steady_clock::now();
            const auto table =
                LookupTable::build(ontology, rules, [&](const LinguisticFrame& f) { return posterior(f, *model); });
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("entries %zu raw_combinations %llu build_s %.3f\n", table.size(),
                        static_cast<unsigned long long>(ontology.raw_combinations()), secs);
            if (!bt_out.empty()) {
                auto out = open_out(bt_out);
                table.write_csv(out);
            }
            if (!bt_snapshot.empty()) {
                auto out = open_out(bt_snapshot);
                table.write_snapshot(out);
            }
            return 0;
        }
        if (*bl) {
            const auto stack = build_prediction_stack(bl_lanes);
            const auto& table = *stack.table;
            std::optional<ScanTable> scan;
            if (bl_backend != "hash") scan = ScanTable::from_table(table);
            std::printf("%-6s %10s %8s %14s %14s %14s\n", "backend", "entries", "queries", "mean_s", "p50_s", "p99_s");
            for (Backend b : {Backend::hash, Backend::scan}) {
                if (bl_backend != "both" && bl_backend != to_string(b)) continue;
                const auto s = bench_query(table, scan ? &*scan : nullptr, b, bl_queries, bl_seed);
                std::printf("%-7s %10zu %8zu %14.3e %14.3e %14.3e\n", std::string(to_string(b)).c_str(), s.table_size,
                            s.queries, s.mean_s, s.p50_s, s.p99_s);
            }
            return 0;
        }
        if (*nd) {
            NodeOptions opt;
            opt.role = parse_node_role(nd_role);
            opt.topology.mode = topology_from(nd_mode);
            opt.topology.client = parse_endpoint(nd_client);
            if (!nd_relay.empty()) opt.topology.relay = parse_endpoint(nd_relay);
            opt.topology.server = parse_endpoint(nd_server);
            opt.topology.client_relay_delay_ms = nd_cr;
            opt.topology.relay_server_delay_ms = nd_rs;
            opt.topology.client_server_delay_ms = nd_cs;
            opt.topology.drop_prob = nd_drop;
            opt.topology.validate();
            std::optional<PredictionStack> stack;
            if (opt.role == NodeRole::prediction_server) {
                stack = build_prediction_stack(nd_lanes);
                opt.predictor = stack->predictor();
            }
            // the relay and client categorize with the same thresholds the server's stack was fitted with
            if (!stack) stack = build_prediction_stack(nd_lanes);
            opt.thresholds = stack->thresholds;
            opt.ontology = stack->ontology;
            Node node(std::move(opt));
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            node.start();
            std::fprintf(stderr, "%s listening on port %u\n", nd_role.c_str(), node.port());
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            node.stop();
            const auto& c = node.counters();
            std::fprintf(stderr, "received %llu forwarded %llu malformed %llu decode_errors %llu reconnects %llu\n",
                         static_cast<unsigned long long>(c.received.load()),
                         static_cast<unsigned long long>(c.forwarded.load()),
                         static_cast<unsigned long long>(c.malformed.load()),
                         static_cast<unsigned long long>(c.decode_errors.load()),
                         static_cast<unsigned long long>(c.reconnects.load()));
            return 0;
        }
        if (*rt) {
            LinkShaping shaping;
            shaping.delay_ms = rt_delay;
            const auto stats = measure_rtt(parse_endpoint(rt_peer), rt_n, std::chrono::milliseconds(1000), shaping);
            std::printf("samples %zu drops %zu one_way_ms %.3f\n", stats.rtt_ms.size(), stats.drops, stats.one_way_ms);
            if (!rt_csv.empty()) {
                auto out = open_out(rt_csv);
                stats.write_csv(out);
            }
            return 0;
        }
        if (*tk) {
            std::vector<Triple> triples;
            if (!tk_facts.empty()) {
                auto in = open_in(tk_facts);
                triples = read_facts_csv(in);
            } else {
                CorpusConfig cc;
                cc.scenes = tk_triples / 13 + 2;
                const auto ontology = Ontology::two_lane();
                const auto corpus = generate_corpus(cc);
                triples = toy_fact_corpus(categorize_corpus(corpus, fit_lateral_thresholds(corpus), ontology), ontology,
                                          tk_triples);
            }
            const auto store = TripleStore::from_triples(triples, 0.2, tk_seed);
            TrainConfig tc;
            tc.dim = tk_dim;
            tc.max_epochs = tk_epochs;
            tc.learning_rate = tk_lr;
            tc.batch_size = 64;
            tc.eval_every = 10;
            tc.patience = 100;
            const auto res = train(store, tc, tk_seed);
            std::printf("entities %zu relations %zu train %zu validation %zu\n", store.entities.size(),
                        store.relations.size(), store.train.size(), store.validation.size());
            std::printf("initial_mrr %.4f best_mrr %.4f best_epoch %zu epochs %zu random_baseline %.4f\n",
                        res.initial_mrr, res.best_mrr, res.best_epoch, res.epochs_run,
                        random_mrr_baseline(store.entities.size()));
            if (!tk_out.empty()) {
                auto out = open_out(tk_out);
                res.model.save_json(out);
            }
            return 0;
        }
        if (*ex) {
            auto in = open_in(ex_in);
            const auto log = read_runlog_csv(in);
            export_runlog(log, ex_out, ex_format);
            return 0;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
