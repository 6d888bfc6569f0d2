#include "fairpace/utility.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fairpace/format.hpp"

namespace fairpace {

namespace {

constexpr double kScaleBottom = 1.0;
constexpr double kScaleTop = 5.0;

double clamp_utility(double u) { return std::clamp(u, kScaleBottom, kScaleTop); }

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace

double UtilityGrid::max_value() const {
    double m = kScaleBottom;
    for (const auto& row : values)
        for (double v : row) m = std::max(m, v);
    return m;
}

double UtilityGrid::min_value() const {
    double m = kScaleTop;
    for (const auto& row : values)
        for (double v : row) m = std::min(m, v);
    return m;
}

SshAnchorTable SshAnchorTable::defaults() {
    // Only the endpoints (0 ms -> top of scale, 1200 ms -> 1) are fixed by
    // the source study; the interior anchors are a configurable input.
    return SshAnchorTable{{{0.0, 4.3},
                           {120.0, 4.0},
                           {250.0, 3.3},
                           {375.0, 2.6},
                           {500.0, 2.0},
                           {1200.0, 1.0}}};
}

VoipCoefficients VoipCoefficients::defaults() {
    // Calibrated so that at G.729-like conditions MOS(0, 34.5) clamps to the
    // 3.65 scale top and MOS(0.08, 80) sits at utility 4.9.
    VoipCoefficients c;
    c.a = 3.75;
    c.b = -0.4;
    c.c = -1.0;
    c.d = -1.5;
    c.e = -0.0012;
    c.f = -0.000005;
    c.g = 0.0;
    c.h = 0.0;
    c.i = 0.0;
    c.j = 0.0;
    c.mos_min = 1.0;
    c.mos_max = kMosMaxVoip;
    return c;
}

VoipCoefficients VoipCoefficients::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open VoIP coefficient file: " + path);

    std::map<std::string, double> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        try {
            kv[key] = std::stod(val);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad number '" + val + "'");
        }
    }

    VoipCoefficients c;
    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw std::runtime_error(path + ": missing VoIP coefficient '" + key + "'");
        }
        if (!std::isfinite(it->second)) {
            throw std::runtime_error(path + ": non-finite VoIP coefficient '" + key + "'");
        }
        return it->second;
    };
    c.a = need("a");
    c.b = need("b");
    c.c = need("c");
    c.d = need("d");
    c.e = need("e");
    c.f = need("f");
    c.g = need("g");
    c.h = need("h");
    c.i = need("i");
    c.j = need("j");
    c.mos_min = kv.count("mos_min") ? kv["mos_min"] : 1.0;
    c.mos_max = kv.count("mos_max") ? kv["mos_max"] : kMosMaxVoip;
    return c;
}

void VoipCoefficients::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write VoIP coefficient file: " + path);
    out << "# VoIP MOS polynomial coefficients\n";
    out << "a = " << format_double(a) << "\n";
    out << "b = " << format_double(b) << "\n";
    out << "c = " << format_double(c) << "\n";
    out << "d = " << format_double(d) << "\n";
    out << "e = " << format_double(e) << "\n";
    out << "f = " << format_double(f) << "\n";
    out << "g = " << format_double(g) << "\n";
    out << "h = " << format_double(h) << "\n";
    out << "i = " << format_double(i) << "\n";
    out << "j = " << format_double(j) << "\n";
    out << "mos_min = " << format_double(mos_min) << "\n";
    out << "mos_max = " << format_double(mos_max) << "\n";
}

double mos_web(double page_load_s) {
    if (!(page_load_s > 0.0)) {
        throw std::domain_error("mos_web: page load time must be > 0");
    }
    return clamp_utility(-0.88 * std::log(page_load_s) + 4.72);
}

double mos_dl(double download_s) {
    if (!(download_s > 0.0)) {
        throw std::domain_error("mos_dl: download time must be > 0");
    }
    return clamp_utility(-1.68 * std::log(download_s) + 9.61);
}

double scale_mos(double mos, double mos_max) {
    if (mos_max <= 1.0 || mos_max > 5.0) {
        throw std::domain_error("scale_mos: mos_max must be in (1, 5]");
    }
    if (mos < 1.0 || mos > mos_max) {
        throw std::domain_error("scale_mos: mos outside [1, mos_max]");
    }
    return (mos - 1.0) * 4.0 / (mos_max - 1.0) + 1.0;
}

double u_ssh(double response_time_ms, const SshAnchorTable& anchors) {
    if (response_time_ms < 0.0) {
        throw std::domain_error("u_ssh: negative response time");
    }
    const auto& pts = anchors.points;
    if (pts.size() < 2) throw std::invalid_argument("u_ssh: anchor table too small");
    if (response_time_ms >= pts.back().first) {
        return scale_mos(std::clamp(pts.back().second, 1.0, kMosMaxSsh), kMosMaxSsh);
    }
    std::size_t seg = 0;
    while (seg + 2 < pts.size() && response_time_ms >= pts[seg + 1].first) ++seg;
    const auto& [x0, y0] = pts[seg];
    const auto& [x1, y1] = pts[seg + 1];
    const double mos = y0 + (y1 - y0) * (response_time_ms - x0) / (x1 - x0);
    return scale_mos(std::clamp(mos, 1.0, kMosMaxSsh), kMosMaxSsh);
}

double u_has(double q_avg, double q_min, double q_max) {
    if (!(q_min < q_max)) {
        throw std::domain_error("u_has: need q_min < q_max");
    }
    if (q_avg < q_min || q_avg > q_max) {
        throw std::domain_error("u_has: q_avg outside [q_min, q_max]");
    }
    return (q_avg - q_min) / (q_max - q_min) * 4.0 + 1.0;
}

double u_voip(double loss_fraction, double delay_ms, const VoipCoefficients& c) {
    if (loss_fraction < 0.0 || loss_fraction > 1.0) {
        throw std::domain_error("u_voip: loss fraction outside [0,1]");
    }
    if (delay_ms < 0.0) {
        throw std::domain_error("u_voip: negative delay");
    }
    const double L = loss_fraction;
    const double D = delay_ms;
    double mos = c.a + c.b * L + c.c * L * L + c.d * L * L * L + c.e * D + c.f * D * D +
                 c.g * D * D * D + c.h * L * D + c.i * L * L * D + c.j * L * D * D;
    mos = std::clamp(mos, c.mos_min, c.mos_max);
    return clamp_utility(scale_mos(std::max(mos, 1.0), c.mos_max));
}

AppClass app_class_from_string(const std::string& name) {
    if (name == "WEB") return AppClass::Web;
    if (name == "DL") return AppClass::Dl;
    if (name == "SSH") return AppClass::Ssh;
    if (name == "VoIP") return AppClass::Voip;
    if (name == "VoD") return AppClass::Vod;
    if (name == "Live") return AppClass::Live;
    throw std::invalid_argument("unknown application class: " + name);
}

std::string to_string(AppClass cls) {
    switch (cls) {
        case AppClass::Web: return "WEB";
        case AppClass::Dl: return "DL";
        case AppClass::Ssh: return "SSH";
        case AppClass::Voip: return "VoIP";
        case AppClass::Vod: return "VoD";
        case AppClass::Live: return "Live";
    }
    return "?";
}

int web_request_rounds(const KpiModelParams& p) {
    return static_cast<int>((p.web_objects + p.web_parallel_connections - 1) /
                            p.web_parallel_connections) +
           1;
}

double web_page_load_s(double tp_kbps, double d_ms, const KpiModelParams& p) {
    if (!(tp_kbps > 0.0)) return std::numeric_limits<double>::infinity();
    const double transfer_s = p.web_page_bytes * 8.0 / (tp_kbps * 1000.0);
    return transfer_s + web_request_rounds(p) * d_ms / 1000.0;
}

double dl_download_s(double tp_kbps, double d_ms, const KpiModelParams& p) {
    if (!(tp_kbps > 0.0)) return std::numeric_limits<double>::infinity();
    const double transfer_s = p.dl_file_bytes * 8.0 / (tp_kbps * 1000.0);
    return transfer_s + 2.0 * d_ms / 1000.0;
}

int video_level(double tp_kbps, double d_ms, bool live, const KpiModelParams& p) {
    const auto& ladder = live ? p.live_ladder_kbps : p.vod_ladder_kbps;
    const double headroom = live ? p.live_headroom : p.vod_headroom;
    int level = 1;  // lowest level is always played (stalls floor the utility anyway)
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        if (ladder[i] <= headroom * tp_kbps) level = static_cast<int>(i) + 1;
    }
    if (live && d_ms > p.live_delay_tolerance_ms) level = std::max(1, level - 1);
    return level;
}

double class_utility(AppClass cls, double tp_kbps, double d_ms, const KpiModelParams& p) {
    switch (cls) {
        case AppClass::Web: {
            const double pl = web_page_load_s(tp_kbps, d_ms, p);
            if (!std::isfinite(pl)) return 1.0;
            const double mos = std::min(mos_web(pl), kMosMaxWeb);
            return clamp_utility(scale_mos(mos, kMosMaxWeb));
        }
        case AppClass::Dl: {
            const double dl = dl_download_s(tp_kbps, d_ms, p);
            if (!std::isfinite(dl)) return 1.0;
            return mos_dl(dl);
        }
        case AppClass::Ssh:
            return u_ssh(std::min(2.0 * d_ms, p.ssh_anchors.points.back().first), p.ssh_anchors);
        case AppClass::Voip: {
            const double loss =
                tp_kbps >= p.voip_codec_kbps ? 0.0 : 1.0 - tp_kbps / p.voip_codec_kbps;
            return u_voip(loss, d_ms, p.voip);
        }
        case AppClass::Vod: {
            const int lvl = video_level(tp_kbps, d_ms, false, p);
            return u_has(lvl, 1.0, static_cast<double>(p.vod_ladder_kbps.size()));
        }
        case AppClass::Live: {
            const int lvl = video_level(tp_kbps, d_ms, true, p);
            return u_has(lvl, 1.0, static_cast<double>(p.live_ladder_kbps.size()));
        }
    }
    throw std::logic_error("class_utility: unhandled class");
}

std::vector<double> make_levels(double lo, double hi, std::size_t steps, double bias) {
    if (steps == 0) throw std::invalid_argument("make_levels: steps must be >= 1");
    if (hi < lo) throw std::invalid_argument("make_levels: hi < lo");
    std::vector<double> out;
    out.reserve(steps);
    if (steps == 1) {
        out.push_back(lo);
        return out;
    }
    for (std::size_t i = 0; i < steps; ++i) {
        const double frac = std::pow(static_cast<double>(i) / static_cast<double>(steps - 1), bias);
        out.push_back(lo + (hi - lo) * frac);
    }
    return out;
}

GridBuildResult build_grid(const UtilityModel& model, std::vector<double> tp_levels_kbps,
                           std::vector<double> d_levels_ms) {
    if (tp_levels_kbps.empty() || d_levels_ms.empty()) {
        throw std::invalid_argument("build_grid: empty level vector");
    }
    if (!std::is_sorted(tp_levels_kbps.begin(), tp_levels_kbps.end()) ||
        !std::is_sorted(d_levels_ms.begin(), d_levels_ms.end())) {
        throw std::invalid_argument("build_grid: levels must be ascending");
    }

    GridBuildResult result;
    result.grid.tp_levels_kbps = std::move(tp_levels_kbps);
    result.grid.d_levels_ms = std::move(d_levels_ms);
    auto& values = result.grid.values;
    values.assign(result.grid.tp_count(), std::vector<double>(result.grid.d_count(), 0.0));

    for (std::size_t t = 0; t < result.grid.tp_count(); ++t) {
        for (std::size_t d = 0; d < result.grid.d_count(); ++d) {
            double v;
            try {
                v = model(result.grid.tp_levels_kbps[t], result.grid.d_levels_ms[d]);
            } catch (const std::exception& e) {
                std::ostringstream os;
                os << "build_grid: model failed at (tp=" << result.grid.tp_levels_kbps[t]
                   << " kbps, d=" << result.grid.d_levels_ms[d] << " ms): " << e.what();
                throw std::runtime_error(os.str());
            }
            if (!std::isfinite(v)) {
                std::ostringstream os;
                os << "build_grid: non-finite utility at (tp=" << result.grid.tp_levels_kbps[t]
                   << " kbps, d=" << result.grid.d_levels_ms[d] << " ms)";
                throw std::runtime_error(os.str());
            }
            values[t][d] = clamp_utility(v);
        }
    }

    auto log_repair = [&](std::size_t t, std::size_t d, double from, double to) {
        std::ostringstream os;
        os << "tp=" << t << ",d=" << d << ": " << from << " -> " << to;
        result.repairs.push_back(os.str());
    };
    // Raise along ascending tp, then lower along ascending d; the second
    // pass cannot break the first invariant.
    for (std::size_t d = 0; d < result.grid.d_count(); ++d) {
        for (std::size_t t = 1; t < result.grid.tp_count(); ++t) {
            if (values[t][d] < values[t - 1][d]) {
                log_repair(t, d, values[t][d], values[t - 1][d]);
                values[t][d] = values[t - 1][d];
            }
        }
    }
    for (std::size_t t = 0; t < result.grid.tp_count(); ++t) {
        for (std::size_t d = 1; d < result.grid.d_count(); ++d) {
            if (values[t][d] > values[t][d - 1]) {
                log_repair(t, d, values[t][d], values[t][d - 1]);
                values[t][d] = values[t][d - 1];
            }
        }
    }
    return result;
}

GridBuildResult build_grid(const UtilityModel& model, double tp_lo, double tp_hi,
                           std::size_t tp_steps, double d_lo, double d_hi,
                           std::size_t d_steps) {
    return build_grid(model, make_levels(tp_lo, tp_hi, tp_steps),
                      make_levels(d_lo, d_hi, d_steps));
}

GridBuildResult builtin_grid(AppClass cls, const KpiModelParams& p) {
    double tp_lo = 100, tp_hi = 500, d_lo = 0, d_hi = 500;
    switch (cls) {
        case AppClass::Dl: tp_lo = 100; tp_hi = 5000; d_hi = 240; break;
        case AppClass::Web: tp_lo = 100; tp_hi = 12000; d_hi = 240; break;
        case AppClass::Vod:
        case AppClass::Live: tp_lo = 750; tp_hi = 5000; d_hi = 240; break;
        case AppClass::Voip:
        case AppClass::Ssh: tp_lo = 100; tp_hi = 500; d_hi = 500; break;
    }
    UtilityModel model = [cls, p](double tp, double d) { return class_utility(cls, tp, d, p); };
    return build_grid(model, make_levels(tp_lo, tp_hi, kDefaultTpSteps),
                      make_levels(d_lo, d_hi, kDefaultDSteps, kDefaultDelayBias));
}

GridBuildResult builtin_grid(AppClass cls) { return builtin_grid(cls, KpiModelParams{}); }

double grid_lookup(const UtilityGrid& grid, std::size_t tp_index, std::size_t d_index) {
    if (tp_index >= grid.tp_count() || d_index >= grid.d_count()) {
        std::ostringstream os;
        os << "grid_lookup: index (" << tp_index << "," << d_index << ") outside "
           << grid.tp_count() << "x" << grid.d_count() << " grid";
        throw std::out_of_range(os.str());
    }
    return grid.values[tp_index][d_index];
}

std::vector<std::string> grid_violations(const UtilityGrid& grid) {
    std::vector<std::string> out;
    if (grid.tp_levels_kbps.empty()) out.push_back("no throughput levels");
    if (grid.d_levels_ms.empty()) out.push_back("no delay levels");
    if (grid.values.size() != grid.tp_count()) out.push_back("row count mismatch");
    for (std::size_t t = 0; t < grid.values.size(); ++t) {
        if (grid.values[t].size() != grid.d_count()) {
            out.push_back("column count mismatch in row " + std::to_string(t));
            return out;
        }
    }
    for (std::size_t t = 1; t < grid.tp_count(); ++t) {
        if (!(grid.tp_levels_kbps[t] > grid.tp_levels_kbps[t - 1])) {
            out.push_back("throughput levels not strictly ascending at index " + std::to_string(t));
        }
    }
    for (std::size_t d = 1; d < grid.d_count(); ++d) {
        if (!(grid.d_levels_ms[d] > grid.d_levels_ms[d - 1])) {
            out.push_back("delay levels not strictly ascending at index " + std::to_string(d));
        }
    }
    for (std::size_t t = 0; t < grid.values.size(); ++t) {
        for (std::size_t d = 0; d < grid.values[t].size(); ++d) {
            const double v = grid.values[t][d];
            std::ostringstream cell;
            cell << "cell (tp=" << t << ",d=" << d << ")";
            if (!(v >= kScaleBottom && v <= kScaleTop)) {
                out.push_back(cell.str() + ": utility " + format_double(v) + " outside [1,5]");
            }
            if (t > 0 && grid.values[t - 1].size() == grid.values[t].size() &&
                v < grid.values[t - 1][d] - 1e-12) {
                out.push_back(cell.str() + ": utility decreases with throughput");
            }
            if (d > 0 && v > grid.values[t][d - 1] + 1e-12) {
                out.push_back(cell.str() + ": utility increases with delay");
            }
        }
    }
    return out;
}

UtilityGrid load_grid(const std::string& path, bool repair) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open grid file: " + path);

    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        return cells;
    };
    auto parse = [&](const std::string& cell, int row, std::size_t col) {
        try {
            std::size_t used = 0;
            double v = std::stod(cell, &used);
            if (used != cell.size()) throw std::invalid_argument("trailing garbage");
            return v;
        } catch (const std::exception&) {
            std::ostringstream os;
            os << path << ": row " << row << ", column " << col << ": bad number '" << cell << "'";
            throw std::runtime_error(os.str());
        }
    };

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty grid file");
    auto header = split(line);
    if (header.size() < 2) throw std::runtime_error(path + ": header needs at least one delay level");

    UtilityGrid grid;
    for (std::size_t c = 1; c < header.size(); ++c) {
        grid.d_levels_ms.push_back(parse(header[c], 0, c));
    }

    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto cells = split(line);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << path << ": row " << row << ": expected " << header.size() << " cells, got "
               << cells.size();
            throw std::runtime_error(os.str());
        }
        grid.tp_levels_kbps.push_back(parse(cells[0], row, 0));
        std::vector<double> vals;
        for (std::size_t c = 1; c < cells.size(); ++c) vals.push_back(parse(cells[c], row, c));
        grid.values.push_back(std::move(vals));
    }
    if (grid.tp_levels_kbps.empty()) throw std::runtime_error(path + ": grid has no rows");

    if (repair) {
        // Clamp into scale, then rebuild through the monotone repair passes.
        UtilityModel lookup = [&grid](double tp, double d) {
            std::size_t t = 0, dd = 0;
            while (t + 1 < grid.tp_count() && grid.tp_levels_kbps[t] != tp) ++t;
            while (dd + 1 < grid.d_count() && grid.d_levels_ms[dd] != d) ++dd;
            return std::clamp(grid.values[t][dd], kScaleBottom, kScaleTop);
        };
        return build_grid(lookup, grid.tp_levels_kbps, grid.d_levels_ms).grid;
    }
    auto violations = grid_violations(grid);
    if (!violations.empty()) {
        throw std::runtime_error(path + ": invalid grid: " + violations.front());
    }
    return grid;
}

void save_grid(const UtilityGrid& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write grid file: " + path);
    out << "tp_kbps\\d_ms";
    for (double d : grid.d_levels_ms) out << "," << format_double(d);
    out << "\n";
    for (std::size_t t = 0; t < grid.tp_count(); ++t) {
        out << format_double(grid.tp_levels_kbps[t]);
        for (double v : grid.values[t]) out << "," << format_double(v);
        out << "\n";
    }
}

}  // namespace fairpace
