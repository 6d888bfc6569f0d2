#include "fairpace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairpace {

double mean(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double population_stddev(const std::vector<double>& values) {
    const double m = mean(values);
    double acc = 0.0;
    for (double v : values) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(values.size()));
}

double f_index(const std::vector<double>& values, double low, double high) {
    if (values.empty()) throw std::invalid_argument("f_index: empty input");
    if (!(high > low)) throw std::invalid_argument("f_index: need high > low");
    for (double v : values) {
        if (v < low || v > high) {
            throw std::invalid_argument("f_index: value outside scale");
        }
    }
    const double sigma = population_stddev(values);
    return std::clamp(1.0 - 2.0 * sigma / (high - low), 0.0, 1.0);
}

double jain_index(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("jain_index: empty input");
    double sum = 0.0, sum_sq = 0.0;
    for (double v : values) {
        if (v < 0.0) throw std::invalid_argument("jain_index: negative value");
        sum += v;
        sum_sq += v * v;
    }
    if (sum_sq == 0.0) throw std::invalid_argument("jain_index: all values zero");
    return sum * sum / (static_cast<double>(values.size()) * sum_sq);
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile: p outside [0,100]");
    std::sort(values.begin(), values.end());
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
    if (lo == hi) return values[lo];
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

PercentileSummary percentile_summary(const std::vector<UtilitySample>& samples, double p) {
    if (p < 0.0 || p > 100.0) {
        throw std::invalid_argument("percentile_summary: p outside [0,100]");
    }
    PercentileSummary out;
    out.p = p;

    std::map<std::string, std::pair<std::string, std::vector<double>>> by_app;
    for (const auto& s : samples) {
        by_app[s.app_id].first = s.app_type;
        by_app[s.app_id].second.push_back(s.value);
    }

    std::map<std::string, std::vector<double>> per_type;
    std::vector<double> all;
    for (const auto& [id, entry] : by_app) {
        const auto& [type, vals] = entry;
        if (vals.empty()) {
            out.notices.push_back("app " + id + " has no samples; omitted");
            continue;
        }
        AppPercentile ap;
        ap.app_id = id;
        ap.app_type = type;
        ap.percentile_value = percentile(vals, p);
        ap.stddev = population_stddev(vals);
        ap.sample_count = vals.size();
        per_type[type].push_back(ap.percentile_value);
        all.push_back(ap.percentile_value);
        out.per_app.push_back(std::move(ap));
    }
    for (const auto& [type, vals] : per_type) {
        out.per_type_mean[type] = mean(vals);
    }
    if (samples.empty()) {
        out.notices.push_back("no samples; summary empty");
    }
    out.overall_mean = all.empty() ? 0.0 : mean(all);
    return out;
}

}  // namespace fairpace
