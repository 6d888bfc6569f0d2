#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairpace/allocation.hpp"
#include "fairpace/metrics.hpp"
#include "fairpace/qdisc_sim.hpp"
#include "fairpace/topology.hpp"
#include "fairpace/utility.hpp"

namespace fairpace {

using ordered_json = nlohmann::ordered_json;

enum class SolverMode { Exact, Heuristic, Oracle };

SolverMode solver_mode_from_string(const std::string& s);
std::string to_string(SolverMode mode);

struct AppMixEntry {
    std::string type;
    int count = 1;
    NodeId src;
    NodeId dst;
    std::string grid_csv;  // empty = builtin grid for the type
};

struct Scenario {
    std::string name;
    std::uint64_t seed = 1;
    Topology topology;
    std::vector<AppMixEntry> mix;

    double epsilon = 0.3;
    std::size_t k_paths = 4;
    bool per_type_equal = false;
    SolverMode mode = SolverMode::Exact;

    SimConfig sim_template;  // sources empty; filled per run
    std::vector<int> sweep_totals;

    KpiModelParams kpi;
    std::map<std::string, GridPtr> grids;  // resolved per type
};

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parses, validates, resolves grid references and applies defaults.
Scenario load_scenario(const std::string& path);

struct ScenarioPoint {
    int total = 0;
    std::vector<AppMixEntry> mix;  // counts scaled to the sweep total
};

// One point per sweep total (counts scaled by largest remainder), or the
// base mix when no sweep is configured.
std::vector<ScenarioPoint> expand_sweep(const Scenario& scenario);

AllocationProblem build_problem(const Scenario& scenario, const ScenarioPoint& point);

SimConfig managed_sim_config(const Scenario& scenario, const AllocationResult& result,
                             std::uint64_t seed);

// Unmanaged baseline: WEB apps open six parallel AIMD flows, DL/SSH/video
// one AIMD flow, VoIP one 50 pps / 20 byte cbr stream.
SimConfig best_effort_sim_config(const Scenario& scenario,
                                 const std::vector<ApplicationFlow>& apps, std::uint64_t seed);

// --- Report ------------------------------------------------------------

struct AppReport {
    std::string id;
    std::string type;
    double tp_kbps = 0.0;
    double d_budget_ms = 0.0;
    double target_utility = 0.0;
    double alloc_delay_ms = 0.0;
    Path path;

    double managed_utility = 0.0;
    std::vector<double> managed_epoch_utilities;
    double managed_tp_kbps = 0.0, managed_delay_ms = 0.0;
    double managed_loss = 0.0, managed_jitter_ms = 0.0;

    double be_utility = 0.0;
    std::vector<double> be_epoch_utilities;
    double be_tp_kbps = 0.0, be_delay_ms = 0.0;
    double be_loss = 0.0, be_jitter_ms = 0.0;
};

struct TypeReport {
    std::string type;
    int count = 0;
    double target = 0.0;
    double managed = 0.0;
    double deviation = 0.0;
    double best_effort = 0.0;
    double f_managed = 1.0;
    double f_best_effort = 1.0;
    double jain_managed = 1.0;
    double jain_best_effort = 1.0;
    double p10_managed = 0.0;
    double p10_best_effort = 0.0;
    double mean_app_stddev_managed = 0.0;
};

struct LinkReport {
    LinkId id;
    double capacity_kbps = 0.0;
    double alloc_usage_kbps = 0.0;
    double alloc_delay_ms = 0.0;
    bool is_bottleneck = false;
};

struct SimSummary {
    std::uint64_t sent = 0, delivered = 0, dropped = 0;
    double total_loss_fraction = 0.0;
    double utilization = 0.0;
    std::uint64_t link_drops = 0;
    std::uint64_t max_queue_bytes = 0, max_queue_pkts = 0;
    double mean_queue_ms = 0.0, p95_queue_ms = 0.0, max_queue_ms = 0.0;
};

struct PointReport {
    int total = 0;
    bool feasible = false;
    std::string failure;

    double uv_min1 = 0.0, uv_min2 = 0.0, utility_sum = 0.0;
    double total_alloc_kbps = 0.0;
    std::uint64_t solver_nodes = 0;
    bool optimal = true;

    std::vector<AppReport> apps;
    std::vector<TypeReport> types;
    std::vector<LinkReport> links;
    SimSummary managed;
    SimSummary best_effort;
};

struct Report {
    std::string scenario_name;
    std::uint64_t seed = 0;
    std::string mode;
    double epsilon = 0.3;
    std::size_t k_paths = 4;
    bool per_type_equal = false;
    double duration_s = 60.0, warmup_s = 5.0, epoch_s = 5.0;
    double base_delay_ms = 2.0, buffer_bytes = 1e6, capacity_kbps = 0.0;
    std::vector<PointReport> points;
};

// Solves, simulates managed and best-effort runs, and assembles the report.
// Infeasible points are recorded and the remaining points still run.
Report run_experiment(const Scenario& scenario);

enum class ReportFormat { Json, Csv };

// JSON: <dir>/report.json. CSV: per_app.csv, per_type.csv, per_link.csv,
// sweep.csv with fixed column order. Byte-identical for identical inputs.
std::vector<std::string> emit_report(const Report& report, ReportFormat format,
                                     const std::string& out_dir);

ordered_json report_to_json(const Report& report);

ordered_json allocation_to_json(const AllocationResult& result);
AllocationResult allocation_from_json(const ordered_json& doc);

}  // namespace fairpace
