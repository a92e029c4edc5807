// SPDX-License-Identifier: Apache-2.0
#include "coop/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <istream>
#include <ostream>

#include "coop/errors.hpp"
#include "coop/numfmt.hpp"
#include "coop/random.hpp"

namespace coop {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'L', 'T'};
constexpr std::uint32_t kSnapshotVersion = 1;

template <class T>
void put_le(std::ostream& out, T v)
{
    unsigned char b[sizeof(T)];
    std::uint64_t bits = 0;
    if constexpr (std::is_same_v<T, double>) {
        std::memcpy(&bits, &v, sizeof v);
    } else {
        bits = static_cast<std::uint64_t>(v);
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), sizeof b);
}

template <class T>
T get_le(std::istream& in)
{
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof b)) throw CorruptTable("snapshot truncated");
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    if constexpr (std::is_same_v<T, double>) {
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    } else {
        return static_cast<T>(bits);
    }
}

std::string_view trim_cr(std::string_view s)
{
    while (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

std::string csv_header(const Ontology& ontology)
{
    std::string h;
    for (const auto& f : ontology.features()) {
        h += f.name;
        h += ',';
    }
    h += "maneuver";
    for (Maneuver m : kAllManeuvers) {
        h += ",p_";
        h += to_string(m);
    }
    return h;
}

// Parses one data row into labels, maneuver and posterior. CorruptTable on shape errors.
struct CsvRow {
    std::vector<std::string_view> fields;
};

CsvRow split_row(std::string_view line, std::size_t line_no)
{
    CsvRow r{split_fields(line)};
    if (r.fields.size() != kFeatureCount + 1 + kManeuverCount)
        throw CorruptTable("table CSV line " + std::to_string(line_no) + ": wrong column count");
    return r;
}

Probabilities parse_posterior(const CsvRow& r, std::size_t line_no)
{
    Probabilities p{};
    try {
        for (std::size_t i = 0; i < kManeuverCount; ++i) p[i] = parse_double(r.fields[kFeatureCount + 1 + i]);
    } catch (const InputError&) {
        throw CorruptTable("table CSV line " + std::to_string(line_no) + ": bad posterior value");
    }
    return p;
}

template <class RowFn>
void read_table_csv(std::istream& in, const Ontology& ontology, RowFn on_row)
{
    std::string line;
    if (!std::getline(in, line)) throw CorruptTable("table CSV is empty");
    if (trim_cr(line) != csv_header(ontology)) throw CorruptTable("table CSV header does not match the ontology");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto row = trim_cr(line);
        if (row.empty()) continue;
        on_row(split_row(row, line_no), line_no);
    }
}

}  // namespace

namespace {

std::size_t key_hash(std::string_view key)
{
    return std::hash<std::string_view>{}(key);
}

std::size_t hash_of(const LinguisticFrame& frame, const Ontology& ontology)
{
    thread_local std::string key;
    key.clear();
    append_frame_key(key, frame, ontology);
    return key_hash(key);
}

}  // namespace

void LookupTable::reserve(std::size_t n)
{
    std::size_t cap = 16;
    while (2 * n > cap) cap *= 2;
    if (cap <= slots_.size()) return;
    std::vector<Slot> old(cap);
    old.swap(slots_);
    const std::size_t mask = slots_.size() - 1;
    for (const auto& s : old) {
        if (!s.used) continue;
        std::size_t i = hash_of(s.frame, ontology_) & mask;
        while (slots_[i].used) i = (i + 1) & mask;
        slots_[i] = s;
    }
    frames_.reserve(n);
    predictions_.reserve(n);
}

void LookupTable::add(const LinguisticFrame& frame, const Prediction& prediction)
{
    if (2 * (frames_.size() + 1) > slots_.size()) reserve(2 * frames_.size() + 1);
    const std::size_t mask = slots_.size() - 1;
    std::size_t i = hash_of(frame, ontology_) & mask;
    for (; slots_[i].used; i = (i + 1) & mask)
        if (slots_[i].frame == frame) throw CorruptTable("duplicate frame key: " + frame_key(frame, ontology_));
    slots_[i] = {frame, true, prediction};
    frames_.push_back(frame);
    predictions_.push_back(prediction);
}

const Prediction* LookupTable::find(const LinguisticFrame& frame, std::size_t hash) const
{
    if (slots_.empty()) return nullptr;
    const std::size_t mask = slots_.size() - 1;
    for (std::size_t i = hash & mask; slots_[i].used; i = (i + 1) & mask)
        if (slots_[i].frame == frame) return &slots_[i].prediction;
    return nullptr;
}

LookupTable LookupTable::build(const Ontology& ontology, std::span<const FeasibilityRule> rules,
                               const Predictor& predictor)
{
    LookupTable t(ontology);
    const auto expected = enumerate_feasible(ontology, rules);
    t.reserve(expected);
    enumerate_feasible(ontology, rules, [&](const LinguisticFrame& frame) {
        ManeuverPosterior post;
        try {
            post = predictor(frame);
            post.validate();
        } catch (const std::exception& e) {
            throw InputError("predictor failed on frame " + frame_key(frame, ontology) + ": " + e.what());
        }
        t.add(frame, {post.argmax(), post.p});
    });
    return t;
}

const Prediction& LookupTable::query_key(const std::string& key) const
{
    LinguisticFrame frame;
    try {
        frame = parse_frame_key(key, ontology_);
    } catch (const VocabularyError&) {
        throw InfeasibleFrame("no table entry for " + key);
    }
    const Prediction* p = find(frame, key_hash(key));
    if (!p) throw InfeasibleFrame("no table entry for " + key);
    return *p;
}

const Prediction& LookupTable::query_hash(const LinguisticFrame& frame) const
{
    const Prediction* p = find(frame, hash_of(frame, ontology_));
    if (!p) throw InfeasibleFrame("no table entry for " + frame_key(frame, ontology_));
    return *p;
}

void LookupTable::write_csv(std::ostream& out) const
{
    out << csv_header(ontology_) << '\n';
    std::string line;
    for (std::size_t i = 0; i < frames_.size(); ++i) {
        line.clear();
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            line.append(label_of(frames_[i], f, ontology_));
            line.push_back(',');
        }
        line.append(to_string(predictions_[i].maneuver));
        for (double p : predictions_[i].posterior) {
            line.push_back(',');
            append_double(line, p);
        }
        line.push_back('\n');
        out << line;
    }
    if (!out) throw IoError("failed to write table CSV");
}

LookupTable LookupTable::read_csv(std::istream& in, const Ontology& ontology)
{
    LookupTable t(ontology);
    read_table_csv(in, ontology, [&](const CsvRow& r, std::size_t line_no) {
        LinguisticFrame frame;
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            auto idx = ontology.feature(f).find(r.fields[f]);
            if (!idx) throw CorruptTable("table CSV line " + std::to_string(line_no) + ": unknown label");
            frame.values[f] = static_cast<std::uint8_t>(*idx);
        }
        Maneuver m;
        try {
            m = parse_maneuver(r.fields[kFeatureCount]);
        } catch (const VocabularyError&) {
            throw CorruptTable("table CSV line " + std::to_string(line_no) + ": unknown maneuver");
        }
        t.add(frame, {m, parse_posterior(r, line_no)});
    });
    return t;
}

void LookupTable::write_snapshot(std::ostream& out) const
{
    out.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out, kSnapshotVersion);
    put_le<std::uint64_t>(out, fingerprint());
    put_le<std::uint64_t>(out, frames_.size());
    for (std::size_t i = 0; i < frames_.size(); ++i) {
        out.write(reinterpret_cast<const char*>(frames_[i].values.data()), kFeatureCount);
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(predictions_[i].maneuver));
        for (double p : predictions_[i].posterior) put_le<double>(out, p);
    }
    if (!out) throw IoError("failed to write table snapshot");
}

LookupTable LookupTable::read_snapshot(std::istream& in, const Ontology& ontology)
{
    char magic[4];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw CorruptTable("not a lookup table snapshot");
    if (get_le<std::uint32_t>(in) != kSnapshotVersion) throw CorruptTable("unsupported snapshot version");
    if (get_le<std::uint64_t>(in) != ontology.fingerprint())
        throw StaleTable("snapshot was built for a different ontology");
    const auto count = get_le<std::uint64_t>(in);
    if (count > ontology.raw_combinations()) throw CorruptTable("snapshot entry count exceeds the ontology size");
    LookupTable t(ontology);
    t.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        LinguisticFrame frame;
        if (!in.read(reinterpret_cast<char*>(frame.values.data()), kFeatureCount))
            throw CorruptTable("snapshot truncated");
        try {
            validate_frame(frame, ontology);
        } catch (const VocabularyError&) {
            throw CorruptTable("snapshot entry outside the ontology");
        }
        const auto m = get_le<std::uint8_t>(in);
        if (m >= kManeuverCount) throw CorruptTable("snapshot maneuver out of range");
        Prediction p{static_cast<Maneuver>(m), {}};
        for (auto& x : p.posterior) x = get_le<double>(in);
        t.add(frame, p);
    }
    return t;
}

ScanTable ScanTable::from_table(const LookupTable& table)
{
    ScanTable s(table.ontology());
    const auto n = table.size();
    for (auto& c : s.columns_) c.reserve(n);
    s.maneuver_.reserve(n);
    for (auto& c : s.posterior_) c.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            s.columns_[f].emplace_back(label_of(table.frames()[i], f, s.ontology_));
        const auto& p = table.predictions()[i];
        s.maneuver_.emplace_back(to_string(p.maneuver));
        for (std::size_t k = 0; k < kManeuverCount; ++k) s.posterior_[k].push_back(p.posterior[k]);
    }
    return s;
}

ScanTable ScanTable::from_csv(std::istream& in, const Ontology& ontology)
{
    ScanTable s(ontology);
    std::unordered_map<std::string, std::size_t> seen;
    std::string key;
    read_table_csv(in, ontology, [&](const CsvRow& r, std::size_t line_no) {
        key.clear();
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            if (!ontology.feature(f).find(r.fields[f]))
                throw CorruptTable("table CSV line " + std::to_string(line_no) + ": unknown label");
            if (f) key.push_back('|');
            key.append(r.fields[f]);
            s.columns_[f].emplace_back(r.fields[f]);
        }
        if (!seen.emplace(key, line_no).second)
            throw CorruptTable("table CSV line " + std::to_string(line_no) + ": duplicate feature combination");
        try {
            parse_maneuver(r.fields[kFeatureCount]);
        } catch (const VocabularyError&) {
            throw CorruptTable("table CSV line " + std::to_string(line_no) + ": unknown maneuver");
        }
        s.maneuver_.emplace_back(r.fields[kFeatureCount]);
        const auto p = parse_posterior(r, line_no);
        for (std::size_t k = 0; k < kManeuverCount; ++k) s.posterior_[k].push_back(p[k]);
    });
    return s;
}

Prediction ScanTable::query(const LinguisticFrame& frame, std::size_t* rows_inspected) const
{
    std::array<std::string_view, kFeatureCount> want;
    for (std::size_t f = 0; f < kFeatureCount; ++f) want[f] = label_of(frame, f, ontology_);
    const std::size_t n = maneuver_.size();
    for (std::size_t i = 0; i < n; ++i) {
        bool match = true;
        for (std::size_t f = 0; f < kFeatureCount; ++f) match &= (columns_[f][i] == want[f]);
        if (match) {
            if (rows_inspected) *rows_inspected = i + 1;
            return {parse_maneuver(maneuver_[i]), {posterior_[0][i], posterior_[1][i], posterior_[2][i]}};
        }
    }
    if (rows_inspected) *rows_inspected = n;
    throw InfeasibleFrame("no table row matches " + frame_key(frame, ontology_));
}

std::string_view to_string(Backend b)
{
    return b == Backend::scan ? "scan" : "hash";
}

LatencyStats bench_query(const LookupTable& table, const ScanTable* scan, Backend backend, std::size_t queries,
                         std::uint64_t seed)
{
    using clock = std::chrono::steady_clock;
    if (table.size() == 0) throw InputError("cannot benchmark an empty table");
    if (queries == 0) throw ConfigError("benchmark needs at least one query");
    if (backend == Backend::scan && !scan) throw ConfigError("scan benchmark needs a scan table");

    Rng rng = make_stream(seed, 0xBE4C);
    std::uniform_int_distribution<std::size_t> pick(0, table.size() - 1);
    std::vector<LinguisticFrame> plan(queries);
    for (auto& q : plan) q = table.frames()[pick(rng)];

    volatile double sink = 0.0;
    auto run = [&](const LinguisticFrame& f) {
        if (backend == Backend::hash) {
            sink = sink + table.query_hash(f).posterior[0];
        } else {
            sink = sink + scan->query(f).posterior[0];
        }
    };

    const std::size_t warm = std::min<std::size_t>(queries, backend == Backend::hash ? 1000 : 20);
    for (std::size_t i = 0; i < warm; ++i) run(plan[i]);

    std::vector<double> lat;
    lat.reserve(queries);
    for (const auto& f : plan) {
        const auto t0 = clock::now();
        run(f);
        const auto t1 = clock::now();
        lat.push_back(std::chrono::duration<double>(t1 - t0).count());
    }

    LatencyStats s;
    s.table_size = table.size();
    s.queries = queries;
    double sum = 0.0;
    for (double x : lat) sum += x;
    s.mean_s = sum / static_cast<double>(lat.size());
    std::sort(lat.begin(), lat.end());
    auto q = [&](double p) {
        const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(lat.size()))) - 1;
        return lat[std::min(idx, lat.size() - 1)];
    };
    s.p50_s = q(0.50);
    s.p99_s = q(0.99);
    return s;
}

}  // namespace coop
