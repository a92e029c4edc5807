// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "coop/errors.hpp"
#include "coop/numfmt.hpp"
#include "coop/sim.hpp"

namespace coop {

namespace {

constexpr const char* kMagic = "# coop-runlog 1";

const char* const kColumns[] = {
    "columns,meta,base_config_hash,prediction_enabled,seed,timestep,ticks,t0,prediction_time,lane_change_start,"
    "crossing_time,harsh_brake_time,ev_yield_time",
    "columns,vehicle,t,t_rel,role,x,y,lane,speed,accel",
    "columns,perception,frame_id,t_capture,t_available,gap,ttc,thw,frame",
    "columns,comm,frame_id,seq,t_sent,latency_ms",
    "columns,prediction,t,t_rel,frame_id,p_laneKeep,p_leftLaneChange,p_rightLaneChange,argmax",
    "columns,control,t,t_rel,state,duty,mapped,v_desired,v_actual,error",
};

std::string fmt(double v)
{
    return format_double(v);
}

std::string fmt_opt(const std::optional<double>& v)
{
    return v ? format_double(*v) : std::string();
}

std::uint64_t parse_u64(std::string_view text)
{
    std::uint64_t v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw InputError("not an unsigned integer: '" + std::string(text) + "'");
    return v;
}

std::optional<double> parse_opt(std::string_view text)
{
    if (text.empty()) return std::nullopt;
    return parse_double(text);
}

Role parse_role(std::string_view s)
{
    if (s == "EV") return Role::EV;
    if (s == "TV") return Role::TV;
    if (s == "PV") return Role::PV;
    throw InputError("unknown role: " + std::string(s));
}

// ---- tiny SVG plotter

struct Plot {
    double x0, y0, w, h;  // panel rectangle in px
    double tmin, tmax, vmin, vmax;

    double px(double t) const { return x0 + (t - tmin) / (tmax - tmin) * w; }
    double py(double v) const { return y0 + h - (v - vmin) / (vmax - vmin) * h; }
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

void svg_open(std::ostream& out, double width, double height)
{
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void svg_panel(std::ostream& out, const Plot& p, const std::string& title)
{
    out << "<rect x=\"" << p.x0 << "\" y=\"" << p.y0 << "\" width=\"" << p.w << "\" height=\"" << p.h
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << p.x0 << "\" y=\"" << p.y0 - 6 << "\">" << title << "</text>\n";
    out << "<text x=\"" << p.x0 - 4 << "\" y=\"" << p.py(p.vmax) + 4 << "\" text-anchor=\"end\">" << fmt(p.vmax)
        << "</text>\n";
    out << "<text x=\"" << p.x0 - 4 << "\" y=\"" << p.py(p.vmin) << "\" text-anchor=\"end\">" << fmt(p.vmin)
        << "</text>\n";
    out << "<text x=\"" << p.x0 << "\" y=\"" << p.y0 + p.h + 14 << "\">" << fmt(p.tmin) << " s</text>\n";
    out << "<text x=\"" << p.x0 + p.w << "\" y=\"" << p.y0 + p.h + 14 << "\" text-anchor=\"end\">" << fmt(p.tmax)
        << " s</text>\n";
}

void svg_vline(std::ostream& out, const Plot& p, double t, const char* id, const char* color, const char* dash)
{
    if (t < p.tmin || t > p.tmax) return;
    out << "<line id=\"" << id << "\" x1=\"" << p.px(t) << "\" y1=\"" << p.y0 << "\" x2=\"" << p.px(t) << "\" y2=\""
        << p.y0 + p.h << "\" stroke=\"" << color << "\" stroke-dasharray=\"" << dash << "\"/>\n";
}

void svg_series(std::ostream& out, const Plot& p, const std::vector<double>& t, const std::vector<double>& v,
                const char* color, bool dashed, const std::string& label, int legend_row)
{
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (dashed) out << " stroke-dasharray=\"6 3\"";
    out << " points=\"";
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(v[i])) continue;
        out << p.px(t[i]) << ',' << p.py(v[i]) << ' ';
    }
    out << "\"/>\n";
    const double ly = p.y0 + 12 + 13 * legend_row;
    out << "<text x=\"" << p.x0 + p.w + 8 << "\" y=\"" << ly << "\" fill=\"" << color << "\">" << label << "</text>\n";
}

void range_of(const std::vector<double>& v, double& lo, double& hi)
{
    for (double x : v)
        if (std::isfinite(x)) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
}

void pad(double& lo, double& hi)
{
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double m = 0.05 * (hi - lo);
    lo -= m;
    hi += m;
}

}  // namespace

void write_runlog_csv(const RunLog& log, std::ostream& out)
{
    const double t0 = log.t0();
    out << kMagic << '\n';
    for (const char* c : kColumns) out << c << '\n';
    const auto& e = log.events;
    out << "meta," << log.base_config_hash << ',' << (log.prediction_enabled ? 1 : 0) << ',' << log.seed << ','
        << fmt(log.timestep) << ',' << log.ticks << ',' << fmt(t0) << ',' << fmt_opt(e.prediction_time) << ','
        << fmt_opt(e.lane_change_start) << ',' << fmt_opt(e.crossing_time) << ',' << fmt_opt(e.harsh_brake_time) << ','
        << fmt_opt(e.ev_yield_time) << '\n';
    for (const auto& r : log.vehicles)
        out << "vehicle," << fmt(r.t) << ',' << fmt(r.t - t0) << ',' << to_string(r.role) << ',' << fmt(r.x) << ','
            << fmt(r.y) << ',' << r.lane << ',' << fmt(r.speed) << ',' << fmt(r.accel) << '\n';
    for (const auto& r : log.perception)
        out << "perception," << r.frame_id << ',' << fmt(r.t_capture) << ',' << fmt(r.t_available) << ',' << fmt(r.gap)
            << ',' << fmt(r.ttc) << ',' << fmt(r.thw) << ',' << r.frame << '\n';
    for (const auto& r : log.comm)
        out << "comm," << r.frame_id << ',' << r.seq << ',' << fmt(r.t_sent) << ',' << fmt(r.latency_ms) << '\n';
    for (const auto& r : log.predictions)
        out << "prediction," << fmt(r.t) << ',' << fmt(r.t - t0) << ',' << r.frame_id << ',' << fmt(r.p[0]) << ','
            << fmt(r.p[1]) << ',' << fmt(r.p[2]) << ',' << to_string(r.argmax) << '\n';
    for (const auto& r : log.control)
        out << "control," << fmt(r.t) << ',' << fmt(r.t - t0) << ',' << to_string(r.state) << ',' << fmt(r.duty) << ','
            << r.mapped << ',' << fmt(r.v_desired) << ',' << fmt(r.v_actual) << ',' << fmt(r.error) << '\n';
}

RunLog read_runlog_csv(std::istream& in)
{
    RunLog log;
    std::string line;
    if (!std::getline(in, line) || line != kMagic) throw InputError("not a run log: missing magic line");
    bool have_meta = false;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        const auto need = [&](std::size_t n) {
            if (f.size() != n)
                throw InputError("run log line " + std::to_string(lineno) + ": expected " + std::to_string(n) +
                                 " fields");
        };
        try {
            if (f[0] == "columns") continue;
            if (f[0] == "meta") {
                need(12);
                log.base_config_hash = parse_u64(f[1]);
                log.prediction_enabled = f[2] == "1";
                log.seed = parse_u64(f[3]);
                log.timestep = parse_double(f[4]);
                log.ticks = parse_u64(f[5]);
                log.events.prediction_time = parse_opt(f[7]);
                log.events.lane_change_start = parse_opt(f[8]);
                log.events.crossing_time = parse_opt(f[9]);
                log.events.harsh_brake_time = parse_opt(f[10]);
                log.events.ev_yield_time = parse_opt(f[11]);
                have_meta = true;
            } else if (f[0] == "vehicle") {
                need(9);
                log.vehicles.push_back({parse_double(f[1]), parse_role(f[3]), parse_double(f[4]), parse_double(f[5]),
                                        static_cast<int>(parse_int(f[6])), parse_double(f[7]), parse_double(f[8])});
            } else if (f[0] == "perception") {
                need(8);
                log.perception.push_back({parse_u64(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4]),
                                          parse_double(f[5]), parse_double(f[6]), std::string(f[7])});
            } else if (f[0] == "comm") {
                need(5);
                log.comm.push_back({parse_u64(f[1]), parse_u64(f[2]), parse_double(f[3]), parse_double(f[4])});
            } else if (f[0] == "prediction") {
                need(8);
                log.predictions.push_back({parse_double(f[1]),
                                           parse_u64(f[3]),
                                           {parse_double(f[4]), parse_double(f[5]), parse_double(f[6])},
                                           parse_maneuver(f[7])});
            } else if (f[0] == "control") {
                need(9);
                ControlTrace c;
                c.t = parse_double(f[1]);
                c.state = parse_longitudinal_state(f[3]);
                c.duty = parse_double(f[4]);
                c.mapped = static_cast<int>(parse_int(f[5]));
                c.v_desired = parse_double(f[6]);
                c.v_actual = parse_double(f[7]);
                c.error = parse_double(f[8]);
                log.control.push_back(c);
            } else {
                throw InputError("unknown row kind '" + std::string(f[0]) + "'");
            }
        } catch (const VocabularyError& e) {
            throw InputError("run log line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_meta) throw InputError("run log has no meta row");
    return log;
}

void write_runlog_svg(const RunLog& log, std::ostream& out)
{
    if (log.vehicles.empty()) throw InputError("cannot plot an empty run log");
    const double t0 = log.t0();
    const double width = 860, height = 520;
    svg_open(out, width, height);
    const char* quantities[] = {"accel", "speed"};
    for (int qi = 0; qi < 2; ++qi) {
        std::map<Role, std::pair<std::vector<double>, std::vector<double>>> data;
        double tlo = 1e300, thi = -1e300, vlo = 1e300, vhi = -1e300;
        for (const auto& r : log.vehicles) {
            auto& [t, v] = data[r.role];
            t.push_back(r.t - t0);
            v.push_back(qi == 0 ? r.accel : r.speed);
        }
        for (auto& [role, tv] : data) {
            range_of(tv.first, tlo, thi);
            range_of(tv.second, vlo, vhi);
        }
        pad(vlo, vhi);
        Plot p{70, 40.0 + qi * 250, 640, 190, tlo, thi, vlo, vhi};
        svg_panel(out, p, qi == 0 ? "acceleration (m/s^2) vs t - t0" : "speed (m/s) vs t - t0");
        int row = 0;
        for (auto& [role, tv] : data)
            svg_series(out, p, tv.first, tv.second, kPalette[row], false,
                       std::string(to_string(role)) + " " + quantities[qi], row),
                ++row;
        svg_vline(out, p, 0.0, qi == 0 ? "crossing" : "crossing-speed", "#777", "4 3");
        if (log.events.prediction_time)
            svg_vline(out, p, *log.events.prediction_time - t0, qi == 0 ? "prediction" : "prediction-speed", "#d62728",
                      "2 2");
    }
    out << "</svg>\n";
}

void ComparisonReport::write_svg(std::ostream& out) const
{
    const double width = 900, panel_h = 150;
    const double height = 40 + 6 * (panel_h + 45);
    svg_open(out, width, height);
    int panel = 0;
    for (Role role : {Role::EV, Role::TV, Role::PV}) {
        for (const char* q : {"accel", "speed"}) {
            std::vector<const Series*> ss;
            for (const auto& s : series)
                if (s.role == role && s.quantity == q) ss.push_back(&s);
            if (ss.empty()) continue;
            double tlo = 1e300, thi = -1e300, vlo = 1e300, vhi = -1e300;
            for (const auto* s : ss) {
                range_of(s->t, tlo, thi);
                range_of(s->v, vlo, vhi);
            }
            pad(vlo, vhi);
            Plot p{70, 40 + panel * (panel_h + 45), 640, panel_h, tlo, thi, vlo, vhi};
            svg_panel(out, p, std::string(to_string(role)) + " " + q + " vs t - t0");
            int row = 0;
            for (const auto* s : ss) {
                svg_series(out, p, s->t, s->v, kPalette[row], !s->prediction_enabled, s->name, row);
                ++row;
            }
            const std::string id = std::string(to_string(role)) + "-" + q;
            svg_vline(out, p, 0.0, ("crossing-" + id).c_str(), "#777", "4 3");
            if (prediction_marker)
                svg_vline(out, p, *prediction_marker, ("prediction-" + id).c_str(), "#d62728", "2 2");
            ++panel;
        }
    }
    out << "</svg>\n";
}

void export_runlog(const RunLog& log, const std::string& path, const std::string& format)
{
    if (format != "csv" && format != "svg") throw ConfigError("export format must be csv or svg");
    if (log.vehicles.empty()) throw InputError("cannot export an empty run log");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    if (format == "csv")
        write_runlog_csv(log, out);
    else
        write_runlog_svg(log, out);
    out.flush();
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace coop
