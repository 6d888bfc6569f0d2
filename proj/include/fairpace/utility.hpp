#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fairpace {

// Quantized 2-D utility map (throughput level, delay level) -> [1,5].
// values[tp][d]; non-decreasing along tp, non-increasing along d.
struct UtilityGrid {
    std::vector<double> tp_levels_kbps;  // ascending
    std::vector<double> d_levels_ms;     // ascending
    std::vector<std::vector<double>> values;

    std::size_t tp_count() const { return tp_levels_kbps.size(); }
    std::size_t d_count() const { return d_levels_ms.size(); }
    bool empty() const { return tp_levels_kbps.empty() || d_levels_ms.empty(); }

    double max_value() const;
    double min_value() const;
};

using GridPtr = std::shared_ptr<const UtilityGrid>;

// Piecewise-linear (response time ms, MOS) anchors for remote terminal work.
struct SshAnchorTable {
    std::vector<std::pair<double, double>> points;  // ascending response time

    static SshAnchorTable defaults();
};

// Coefficients of the external VoIP MOS polynomial
//   MOS(L, D) = a + b*L + c*L^2 + d*L^3 + e*D + f*D^2 + g*D^3
//               + h*L*D + i*L^2*D + j*L*D^2
// with L the loss fraction and D the one-way delay in ms, clamped to
// [mos_min, mos_max] before scaling to utility. The coefficients are an
// external input; the shipped defaults are a calibration of the G.729
// anchor points used throughout this project.
struct VoipCoefficients {
    double a = 0, b = 0, c = 0, d = 0, e = 0;
    double f = 0, g = 0, h = 0, i = 0, j = 0;
    double mos_min = 1.0;
    double mos_max = 3.65;

    static VoipCoefficients defaults();
    static VoipCoefficients load(const std::string& path);
    void save(const std::string& path) const;
};

// --- MOS models and scaling -------------------------------------------------

// Scale tops of the source experience models.
inline constexpr double kMosMaxWeb = 4.6;
inline constexpr double kMosMaxSsh = 4.3;
inline constexpr double kMosMaxVoip = 3.65;

double mos_web(double page_load_s);   // -0.88*ln(pl) + 4.72, clamped [1,5]
double mos_dl(double download_s);     // -1.68*ln(dl) + 9.61, clamped [1,5]

// Affine map [1, mos_max] -> [1, 5].
double scale_mos(double mos, double mos_max);

double u_ssh(double response_time_ms, const SshAnchorTable& anchors);
double u_has(double q_avg, double q_min, double q_max);
double u_voip(double loss_fraction, double delay_ms, const VoipCoefficients& coeffs);

// --- Application classes and KPI synthesis ----------------------------------

enum class AppClass { Web, Dl, Ssh, Voip, Vod, Live };

AppClass app_class_from_string(const std::string& name);
std::string to_string(AppClass cls);

// Analytic KPI synthesis standing in for the measurement pipeline:
//   WEB  page load time [s]  = page_bits/(tp*1000) + request_rounds*d/1000
//   DL   download time [s]   = file_kbits/tp + 2*d/1000
//   SSH  response time [ms]  = 2*d (request + response leg)
//   VoIP loss = max(0, 1 - tp/codec_rate), delay = d
//   VoD/Live: highest ladder level sustainable at the given rate, with a
//   one-level penalty for Live beyond its delay tolerance.
struct KpiModelParams {
    double web_page_bytes = 1.3e6;
    int web_objects = 22;
    int web_parallel_connections = 6;
    double dl_file_bytes = 10e6;
    double voip_codec_kbps = 8.0;
    std::vector<double> vod_ladder_kbps = {486, 944, 1389, 1847, 2291, 2750};
    std::vector<double> live_ladder_kbps = {572, 1103, 1625, 2145, 2660, 3172};
    double vod_headroom = 0.9;
    double live_headroom = 0.8;
    double live_delay_tolerance_ms = 120.0;
    SshAnchorTable ssh_anchors = SshAnchorTable::defaults();
    VoipCoefficients voip = VoipCoefficients::defaults();
};

int web_request_rounds(const KpiModelParams& p);  // ceil(objects/conns) + 1

double web_page_load_s(double tp_kbps, double d_ms, const KpiModelParams& p);
double dl_download_s(double tp_kbps, double d_ms, const KpiModelParams& p);
int video_level(double tp_kbps, double d_ms, bool live, const KpiModelParams& p);

// Utility of one application class at (throughput, delay budget).
double class_utility(AppClass cls, double tp_kbps, double d_ms, const KpiModelParams& p);

// --- Grid construction and I/O ----------------------------------------------

using UtilityModel = std::function<double(double tp_kbps, double d_ms)>;

struct GridBuildResult {
    UtilityGrid grid;
    std::vector<std::string> repairs;  // monotone clamps applied, if any
};

// Evaluate the model on explicit level vectors; monotone violations are
// repaired by clamping and reported.
GridBuildResult build_grid(const UtilityModel& model, std::vector<double> tp_levels_kbps,
                           std::vector<double> d_levels_ms);

// Range + step count convenience (linear spacing, endpoints included).
GridBuildResult build_grid(const UtilityModel& model, double tp_lo, double tp_hi,
                           std::size_t tp_steps, double d_lo, double d_hi,
                           std::size_t d_steps);

// lo + (hi-lo)*(i/(n-1))^bias; bias > 1 packs levels toward lo.
std::vector<double> make_levels(double lo, double hi, std::size_t steps, double bias = 1.0);

inline constexpr std::size_t kDefaultTpSteps = 12;
inline constexpr std::size_t kDefaultDSteps = 8;
inline constexpr double kDefaultDelayBias = 2.0;

// Class grid over its default measurement domain (12 x 8, delay levels
// packed toward zero so realistic low-delay operating points are on-grid).
GridBuildResult builtin_grid(AppClass cls, const KpiModelParams& p);
GridBuildResult builtin_grid(AppClass cls);

// Throws std::invalid_argument / std::out_of_range on bad indices.
double grid_lookup(const UtilityGrid& grid, std::size_t tp_index, std::size_t d_index);

std::vector<std::string> grid_violations(const UtilityGrid& grid);

// CSV layout: header row of delay levels, first column throughput levels,
// body utilities. Throws std::runtime_error with cell location on errors;
// with repair=true, range and monotonicity violations are clamped instead.
UtilityGrid load_grid(const std::string& path, bool repair = false);
void save_grid(const UtilityGrid& grid, const std::string& path);

}  // namespace fairpace
