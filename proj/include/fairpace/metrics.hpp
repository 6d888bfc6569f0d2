#pragma once

#include <map>
#include <string>
#include <vector>

namespace fairpace {

struct UtilitySample {
    std::string app_id;
    std::string app_type;
    double value = 1.0;                 // utility in [1,5]
    std::string source = "simulated";   // "allocated" | "simulated"
};

// F-index 1 - 2*sigma/(high-low) with population sigma, clamped to [0,1].
double f_index(const std::vector<double>& values, double low = 1.0, double high = 5.0);

// Jain index (sum x)^2 / (n * sum x^2).
double jain_index(const std::vector<double>& values);

// p-th percentile with linear interpolation between closest ranks.
double percentile(std::vector<double> values, double p);

double mean(const std::vector<double>& values);
double population_stddev(const std::vector<double>& values);

struct AppPercentile {
    std::string app_id;
    std::string app_type;
    double percentile_value = 0.0;
    double stddev = 0.0;  // per-app consistency
    std::size_t sample_count = 0;
};

struct PercentileSummary {
    double p = 0.0;
    std::vector<AppPercentile> per_app;              // ordered by app id
    std::map<std::string, double> per_type_mean;     // mean of per-app percentiles
    double overall_mean = 0.0;
    std::vector<std::string> notices;
};

// Groups samples by app id, takes the p-th percentile per app, averages per
// app type. Apps without samples are omitted with a notice.
PercentileSummary percentile_summary(const std::vector<UtilitySample>& samples, double p);

}  // namespace fairpace
