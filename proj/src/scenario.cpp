#include "fairpace/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fairpace/format.hpp"

namespace fairpace {

namespace fs = std::filesystem;

namespace {

constexpr int kWebParallelFlows = 6;
constexpr int kVoipPktBytes = 20;

std::string json_type_name(const ordered_json& j) { return j.type_name(); }

double get_number(const ordered_json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ScenarioError(where + ": missing " + key);
    const auto& v = obj.at(key);
    if (!v.is_number()) {
        throw ScenarioError(where + ": " + key + " must be a number, got " + json_type_name(v));
    }
    return v.get<double>();
}

double get_number_or(const ordered_json& obj, const std::string& key, double fallback,
                     const std::string& where) {
    if (!obj.contains(key)) return fallback;
    return get_number(obj, key, where);
}

std::string get_string(const ordered_json& obj, const std::string& key,
                       const std::string& where) {
    if (!obj.contains(key)) throw ScenarioError(where + ": missing " + key);
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ScenarioError(where + ": " + key + " must be a string");
    return v.get<std::string>();
}

}  // namespace

SolverMode solver_mode_from_string(const std::string& s) {
    if (s == "exact") return SolverMode::Exact;
    if (s == "heuristic") return SolverMode::Heuristic;
    if (s == "oracle") return SolverMode::Oracle;
    throw ScenarioError("unknown solver mode: " + s + " (expected exact|heuristic|oracle)");
}

std::string to_string(SolverMode mode) {
    switch (mode) {
        case SolverMode::Exact: return "exact";
        case SolverMode::Heuristic: return "heuristic";
        case SolverMode::Oracle: return "oracle";
    }
    return "?";
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file: " + path);
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError(path + ": " + e.what());
    }
    const fs::path base_dir = fs::path(path).parent_path();

    Scenario sc;
    sc.name = doc.contains("name") ? doc.at("name").get<std::string>()
                                   : fs::path(path).stem().string();
    sc.seed = static_cast<std::uint64_t>(get_number_or(doc, "seed", 1.0, "scenario"));

    // --- topology ---
    if (!doc.contains("topology")) throw ScenarioError("scenario: missing topology");
    const auto& topo = doc.at("topology");
    if (!topo.contains("nodes") || !topo.at("nodes").is_array()) {
        throw ScenarioError("topology: nodes must be an array of identifiers");
    }
    for (const auto& n : topo.at("nodes")) {
        if (!n.is_string()) throw ScenarioError("topology: node identifiers must be strings");
        sc.topology.nodes.insert(n.get<std::string>());
    }
    if (!topo.contains("links") || !topo.at("links").is_array()) {
        throw ScenarioError("topology: links must be an array");
    }
    std::size_t link_idx = 0;
    for (const auto& l : topo.at("links")) {
        const std::string where = "topology.links[" + std::to_string(link_idx++) + "]";
        const std::string from = get_string(l, "from", where);
        const std::string to = get_string(l, "to", where);
        Link link;
        link.capacity_kbps = get_number(l, "capacity_kbps", where);
        if (l.contains("delay_curve")) {
            const auto& dc = l.at("delay_curve");
            if (!dc.is_array() || dc.empty()) {
                throw ScenarioError(where + ": delay_curve must be a non-empty array of pairs");
            }
            for (const auto& knot : dc) {
                if (!knot.is_array() || knot.size() != 2) {
                    throw ScenarioError(where + ": delay_curve entries must be [usage, delay]");
                }
                link.delay_curve.usage_kbps.push_back(knot.at(0).get<double>());
                link.delay_curve.delay_ms.push_back(knot.at(1).get<double>());
            }
        } else {
            link.delay_curve = DelayCurve::constant(link.capacity_kbps, 0.0);
        }
        if (sc.topology.links.count({from, to})) {
            throw ScenarioError(where + ": duplicate link " + from + "->" + to);
        }
        sc.topology.links[{from, to}] = std::move(link);
    }
    auto violations = validate(sc.topology);
    if (!violations.empty()) throw ScenarioError("topology: " + violations.front());

    // --- default endpoints when there is a single link ---
    NodeId default_src, default_dst;
    if (sc.topology.links.size() == 1) {
        default_src = sc.topology.links.begin()->first.first;
        default_dst = sc.topology.links.begin()->first.second;
    }

    // --- solver parameters ---
    if (doc.contains("solver")) {
        const auto& sol = doc.at("solver");
        sc.epsilon = get_number_or(sol, "epsilon", sc.epsilon, "solver");
        sc.k_paths = static_cast<std::size_t>(
            get_number_or(sol, "k_paths", static_cast<double>(sc.k_paths), "solver"));
        if (sol.contains("per_type_equal")) {
            sc.per_type_equal = sol.at("per_type_equal").get<bool>();
        }
        if (sol.contains("mode")) sc.mode = solver_mode_from_string(get_string(sol, "mode", "solver"));
    }
    if (sc.epsilon < 0.0) throw ScenarioError("solver: epsilon must be >= 0");
    if (sc.k_paths < 1) throw ScenarioError("solver: k_paths must be >= 1");

    // --- VoIP coefficients (before grids are built) ---
    if (doc.contains("voip_coefficients")) {
        const fs::path p = base_dir / get_string(doc, "voip_coefficients", "scenario");
        sc.kpi.voip = VoipCoefficients::load(p.string());
    }

    // --- application mix ---
    if (!doc.contains("apps") || !doc.at("apps").is_array()) {
        throw ScenarioError("scenario: apps must be an array");
    }
    std::size_t app_idx = 0;
    for (const auto& a : doc.at("apps")) {
        const std::string where = "apps[" + std::to_string(app_idx++) + "]";
        AppMixEntry entry;
        entry.type = get_string(a, "type", where);
        entry.count = static_cast<int>(get_number_or(a, "count", 1.0, where));
        if (entry.count < 0) throw ScenarioError(where + ": count must be >= 0");
        entry.src = a.contains("src") ? get_string(a, "src", where) : default_src;
        entry.dst = a.contains("dst") ? get_string(a, "dst", where) : default_dst;
        if (entry.src.empty() || entry.dst.empty()) {
            throw ScenarioError(where + ": src/dst required (no single-link default available)");
        }
        if (!sc.topology.has_node(entry.src) || !sc.topology.has_node(entry.dst)) {
            throw ScenarioError(where + ": unknown endpoint " + entry.src + "/" + entry.dst);
        }
        if (a.contains("grid_csv")) {
            entry.grid_csv = (base_dir / get_string(a, "grid_csv", where)).string();
        }
        sc.mix.push_back(std::move(entry));
    }

    // --- resolve grids per type ---
    for (const auto& entry : sc.mix) {
        auto it = sc.grids.find(entry.type);
        if (it != sc.grids.end()) {
            continue;  // first reference wins; conflicting csv caught below
        }
        if (!entry.grid_csv.empty()) {
            sc.grids[entry.type] = std::make_shared<UtilityGrid>(load_grid(entry.grid_csv));
        } else {
            AppClass cls;
            try {
                cls = app_class_from_string(entry.type);
            } catch (const std::exception&) {
                throw ScenarioError("apps: type " + entry.type +
                                    " is not a builtin class and has no grid_csv");
            }
            sc.grids[entry.type] =
                std::make_shared<UtilityGrid>(builtin_grid(cls, sc.kpi).grid);
        }
    }
    for (const auto& entry : sc.mix) {
        if (!entry.grid_csv.empty()) {
            // Two entries of the same type must agree on the grid source.
            for (const auto& other : sc.mix) {
                if (other.type == entry.type && other.grid_csv != entry.grid_csv &&
                    !other.grid_csv.empty()) {
                    throw ScenarioError("apps: conflicting grid_csv for type " + entry.type);
                }
            }
        }
    }

    // --- sim template ---
    LinkId bottleneck{};
    if (doc.contains("sim") && doc.at("sim").contains("bottleneck")) {
        const auto& b = doc.at("sim").at("bottleneck");
        bottleneck = {get_string(b, "from", "sim.bottleneck"),
                      get_string(b, "to", "sim.bottleneck")};
    } else if (sc.topology.links.size() == 1) {
        bottleneck = sc.topology.links.begin()->first;
    } else {
        throw ScenarioError("sim: bottleneck {from,to} required when topology has several links");
    }
    if (!sc.topology.links.count(bottleneck)) {
        throw ScenarioError("sim: bottleneck link " + bottleneck.first + "->" + bottleneck.second +
                            " not in topology");
    }
    const Link& blink = sc.topology.links.at(bottleneck);
    SimConfig& sim = sc.sim_template;
    sim.bottleneck_link = bottleneck;
    sim.bottleneck_capacity_kbps = blink.capacity_kbps;
    sim.base_delay_ms = link_delay(blink.delay_curve, 0.0);
    for (const auto& [lid, link] : sc.topology.links) {
        (void)link;
        sim.known_links.insert(lid);
    }
    if (doc.contains("sim")) {
        const auto& s = doc.at("sim");
        sim.buffer_bytes = get_number_or(s, "buffer_bytes", sim.buffer_bytes, "sim");
        sim.duration_s = get_number_or(s, "duration_s", sim.duration_s, "sim");
        sim.warmup_s = get_number_or(s, "warmup_s", sim.warmup_s, "sim");
        sim.epoch_s = get_number_or(s, "epoch_s", sim.epoch_s, "sim");
        sim.base_delay_ms = get_number_or(s, "base_delay_ms", sim.base_delay_ms, "sim");
        sim.start_jitter_ms = get_number_or(s, "start_jitter_ms", sim.start_jitter_ms, "sim");
        if (sim.start_jitter_ms < 0.0) throw ScenarioError("sim: start_jitter_ms must be >= 0");
    }
    sim.rng_seed = sc.seed;
    if (!(sim.duration_s > sim.warmup_s) || sim.warmup_s < 0.0) {
        throw ScenarioError("sim: need duration_s > warmup_s >= 0");
    }

    // --- sweep ---
    if (doc.contains("sweep")) {
        const auto& sw = doc.at("sweep");
        if (!sw.contains("totals") || !sw.at("totals").is_array()) {
            throw ScenarioError("sweep: totals must be an array");
        }
        for (const auto& t : sw.at("totals")) {
            sc.sweep_totals.push_back(t.get<int>());
        }
        for (std::size_t i = 0; i < sc.sweep_totals.size(); ++i) {
            if (sc.sweep_totals[i] < 0) throw ScenarioError("sweep: totals must be >= 0");
            if (i > 0 && sc.sweep_totals[i] <= sc.sweep_totals[i - 1]) {
                throw ScenarioError("sweep: totals must be ascending");
            }
        }
    }
    return sc;
}

std::vector<ScenarioPoint> expand_sweep(const Scenario& scenario) {
    std::vector<ScenarioPoint> points;
    int base_total = 0;
    for (const auto& e : scenario.mix) base_total += e.count;

    if (scenario.sweep_totals.empty()) {
        points.push_back({base_total, scenario.mix});
        return points;
    }
    for (int total : scenario.sweep_totals) {
        ScenarioPoint pt;
        pt.total = total;
        pt.mix = scenario.mix;
        if (base_total == 0) {
            points.push_back(std::move(pt));
            continue;
        }
        // Largest-remainder scaling keeps the per-class ratios and the total.
        std::vector<double> exact(scenario.mix.size());
        int assigned = 0;
        for (std::size_t i = 0; i < scenario.mix.size(); ++i) {
            exact[i] = static_cast<double>(scenario.mix[i].count) * total / base_total;
            pt.mix[i].count = static_cast<int>(std::floor(exact[i]));
            assigned += pt.mix[i].count;
        }
        std::vector<std::size_t> order(scenario.mix.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ra = exact[a] - std::floor(exact[a]);
            const double rb = exact[b] - std::floor(exact[b]);
            return ra > rb;
        });
        for (std::size_t k = 0; assigned < total && k < order.size(); ++k, ++assigned) {
            ++pt.mix[order[k]].count;
        }
        points.push_back(std::move(pt));
    }
    return points;
}

AllocationProblem build_problem(const Scenario& scenario, const ScenarioPoint& point) {
    AllocationProblem problem;
    problem.topology = scenario.topology;
    problem.epsilon = scenario.epsilon;
    problem.k_paths = scenario.k_paths;
    problem.per_type_equal = scenario.per_type_equal;

    std::map<std::string, int> counter;
    for (const auto& entry : point.mix) {
        for (int k = 0; k < entry.count; ++k) {
            ApplicationFlow app;
            const int n = ++counter[entry.type];
            std::ostringstream id;
            id << entry.type << "-" << (n < 100 ? (n < 10 ? "00" : "0") : "") << n;
            app.id = id.str();
            app.app_type = entry.type;
            app.src = entry.src;
            app.dst = entry.dst;
            app.grid = scenario.grids.at(entry.type);
            problem.apps.push_back(std::move(app));
        }
    }
    return problem;
}

SimConfig managed_sim_config(const Scenario& scenario, const AllocationResult& result,
                             std::uint64_t seed) {
    SimConfig templ = scenario.sim_template;
    templ.rng_seed = seed;
    return allocation_to_sim(result, templ);
}

SimConfig best_effort_sim_config(const Scenario& scenario,
                                 const std::vector<ApplicationFlow>& apps, std::uint64_t seed) {
    SimConfig cfg = scenario.sim_template;
    cfg.rng_seed = seed;
    cfg.sources.clear();

    std::vector<std::size_t> order(apps.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return apps[a].id < apps[b].id; });

    for (std::size_t i : order) {
        const auto& app = apps[i];
        AppClass cls = AppClass::Dl;
        bool builtin = true;
        try {
            cls = app_class_from_string(app.app_type);
        } catch (const std::exception&) {
            builtin = false;  // custom types fall back to one bulk-transfer flow
        }
        if (builtin && cls == AppClass::Web) {
            for (int c = 1; c <= kWebParallelFlows; ++c) {
                SourceSpec s;
                s.flow_id = app.id + "-c" + std::to_string(c);
                s.discipline = AimdSource{};
                s.start_jitter_ms = cfg.start_jitter_ms;
                cfg.sources.push_back(std::move(s));
            }
        } else if (builtin && cls == AppClass::Voip) {
            SourceSpec s;
            s.flow_id = app.id;
            s.discipline = CbrSource{scenario.kpi.voip_codec_kbps, kVoipPktBytes};
            s.start_jitter_ms = cfg.start_jitter_ms;
            cfg.sources.push_back(std::move(s));
        } else {
            SourceSpec s;
            s.flow_id = app.id;
            s.discipline = AimdSource{};
            s.start_jitter_ms = cfg.start_jitter_ms;
            cfg.sources.push_back(std::move(s));
        }
    }
    return cfg;
}

namespace {

struct EpochKpi {
    double tp_kbps = 0.0;
    double delay_ms = 0.0;
    double loss = 0.0;
    bool delivered = false;
};

std::vector<EpochKpi> epochs_for_flows(const SimMetrics& metrics,
                                       const std::vector<std::string>& flow_ids) {
    std::vector<EpochKpi> out;
    std::size_t n_epochs = 0;
    for (const auto& id : flow_ids) {
        auto it = metrics.flows.find(id);
        if (it != metrics.flows.end()) {
            n_epochs = std::max(n_epochs, it->second.epoch_throughput_kbps.size());
        }
    }
    out.resize(n_epochs);
    std::vector<double> delay_weight(n_epochs, 0.0);
    std::vector<double> loss_sum(n_epochs, 0.0);
    std::vector<int> loss_n(n_epochs, 0);
    for (const auto& id : flow_ids) {
        auto it = metrics.flows.find(id);
        if (it == metrics.flows.end()) continue;
        const FlowMetrics& fm = it->second;
        for (std::size_t e = 0; e < fm.epoch_throughput_kbps.size(); ++e) {
            out[e].tp_kbps += fm.epoch_throughput_kbps[e];
            if (fm.epoch_throughput_kbps[e] > 0.0) {
                out[e].delivered = true;
                out[e].delay_ms += fm.epoch_mean_delay_ms[e] * fm.epoch_throughput_kbps[e];
                delay_weight[e] += fm.epoch_throughput_kbps[e];
            }
            loss_sum[e] += fm.epoch_loss_fraction[e];
            ++loss_n[e];
        }
    }
    for (std::size_t e = 0; e < n_epochs; ++e) {
        if (delay_weight[e] > 0.0) out[e].delay_ms /= delay_weight[e];
        if (loss_n[e] > 0) out[e].loss = loss_sum[e] / loss_n[e];
    }
    return out;
}

double measured_utility(AppClass cls, bool builtin, const EpochKpi& kpi, double target,
                        bool managed, const GridPtr& grid, const KpiModelParams& params) {
    if (!kpi.delivered) return 1.0;
    if (!builtin) {
        // Custom grid types: nearest pessimistic grid cell for the measured point.
        std::size_t tp_idx = 0;
        bool found = false;
        for (std::size_t t = 0; t < grid->tp_count(); ++t) {
            if (grid->tp_levels_kbps[t] <= kpi.tp_kbps) {
                tp_idx = t;
                found = true;
            }
        }
        if (!found) return 1.0;
        std::size_t d_idx = grid->d_count() - 1;
        for (std::size_t d = 0; d < grid->d_count(); ++d) {
            if (grid->d_levels_ms[d] >= kpi.delay_ms) {
                d_idx = d;
                break;
            }
        }
        return grid->values[tp_idx][d_idx];
    }
    switch (cls) {
        case AppClass::Voip:
            return u_voip(std::clamp(kpi.loss, 0.0, 1.0), std::max(kpi.delay_ms, 0.0),
                          params.voip);
        case AppClass::Vod:
        case AppClass::Live:
            // Player adaptation is not simulated; managed video reports the
            // allocated operating point, best effort maps the measured rate.
            if (managed) return target;
            return class_utility(cls, kpi.tp_kbps, kpi.delay_ms, params);
        default:
            return class_utility(cls, kpi.tp_kbps, kpi.delay_ms, params);
    }
}

struct FlowAggregate {
    double tp_kbps = 0.0;
    double delay_ms = 0.0;
    double loss = 0.0;
    double jitter_ms = 0.0;
};

FlowAggregate aggregate_flows(const SimMetrics& metrics, const std::vector<std::string>& ids) {
    FlowAggregate agg;
    double delay_weight = 0.0;
    double sent = 0.0, dropped = 0.0;
    double jitter_sum = 0.0;
    int jitter_n = 0;
    for (const auto& id : ids) {
        auto it = metrics.flows.find(id);
        if (it == metrics.flows.end()) continue;
        const FlowMetrics& fm = it->second;
        agg.tp_kbps += fm.throughput_kbps;
        if (fm.delivered > 0) {
            agg.delay_ms += fm.mean_delay_ms * static_cast<double>(fm.delivered);
            delay_weight += static_cast<double>(fm.delivered);
        }
        sent += static_cast<double>(fm.sent);
        dropped += static_cast<double>(fm.dropped);
        jitter_sum += fm.jitter_ms;
        ++jitter_n;
    }
    if (delay_weight > 0.0) agg.delay_ms /= delay_weight;
    if (sent > 0.0) agg.loss = dropped / sent;
    if (jitter_n > 0) agg.jitter_ms = jitter_sum / jitter_n;
    return agg;
}

SimSummary summarize_sim(const SimMetrics& metrics) {
    SimSummary s;
    for (const auto& [id, fm] : metrics.flows) {
        (void)id;
        s.sent += fm.sent;
        s.delivered += fm.delivered;
        s.dropped += fm.dropped;
    }
    s.total_loss_fraction =
        s.sent == 0 ? 0.0 : static_cast<double>(s.dropped) / static_cast<double>(s.sent);
    s.utilization = metrics.link.utilization;
    s.link_drops = metrics.link.drops;
    s.max_queue_bytes = metrics.link.max_queue_bytes;
    s.max_queue_pkts = metrics.link.max_queue_pkts;
    s.mean_queue_ms = metrics.link.mean_queue_delay_ms;
    s.p95_queue_ms = metrics.link.p95_queue_delay_ms;
    s.max_queue_ms = metrics.link.max_queue_delay_ms;
    return s;
}

std::vector<std::string> managed_flow_ids(const ApplicationFlow& app) { return {app.id}; }

std::vector<std::string> best_effort_flow_ids(const ApplicationFlow& app) {
    bool builtin = true;
    AppClass cls = AppClass::Dl;
    try {
        cls = app_class_from_string(app.app_type);
    } catch (const std::exception&) {
        builtin = false;
    }
    if (builtin && cls == AppClass::Web) {
        std::vector<std::string> ids;
        for (int c = 1; c <= kWebParallelFlows; ++c) {
            ids.push_back(app.id + "-c" + std::to_string(c));
        }
        return ids;
    }
    return {app.id};
}

}  // namespace

Report run_experiment(const Scenario& scenario) {
    Report report;
    report.scenario_name = scenario.name;
    report.seed = scenario.seed;
    report.mode = to_string(scenario.mode);
    report.epsilon = scenario.epsilon;
    report.k_paths = scenario.k_paths;
    report.per_type_equal = scenario.per_type_equal;
    report.duration_s = scenario.sim_template.duration_s;
    report.warmup_s = scenario.sim_template.warmup_s;
    report.epoch_s = scenario.sim_template.epoch_s;
    report.base_delay_ms = scenario.sim_template.base_delay_ms;
    report.buffer_bytes = scenario.sim_template.buffer_bytes;
    report.capacity_kbps = scenario.sim_template.bottleneck_capacity_kbps;

    const auto points = expand_sweep(scenario);
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
        const auto& point = points[pi];
        PointReport pr;
        pr.total = point.total;
        AllocationProblem problem = build_problem(scenario, point);

        AllocationResult result;
        try {
            switch (scenario.mode) {
                case SolverMode::Exact: result = solve(problem); break;
                case SolverMode::Heuristic: result = solve_heuristic(problem); break;
                case SolverMode::Oracle: result = brute_force_oracle(problem); break;
            }
        } catch (const InfeasibleError& e) {
            pr.feasible = false;
            pr.failure = e.what();
            report.points.push_back(std::move(pr));
            continue;
        }
        pr.feasible = true;
        pr.uv_min1 = result.uv_min1;
        pr.uv_min2 = result.uv_min2;
        pr.utility_sum = result.utility_sum;
        pr.solver_nodes = result.stats.nodes_explored;
        pr.optimal = result.optimal;
        for (double tp : result.app_tp_kbps) pr.total_alloc_kbps += tp;

        const std::uint64_t managed_seed = scenario.seed + 2 * pi;
        const std::uint64_t be_seed = scenario.seed + 2 * pi + 1;
        SimMetrics managed = run(managed_sim_config(scenario, result, managed_seed));
        SimMetrics best_effort =
            run(best_effort_sim_config(scenario, problem.apps, be_seed));
        pr.managed = summarize_sim(managed);
        pr.best_effort = summarize_sim(best_effort);

        // Per-app reports and utility samples.
        std::vector<UtilitySample> managed_samples, be_samples;
        std::map<std::string, std::vector<double>> managed_by_type, be_by_type;
        std::map<std::string, std::vector<double>> target_by_type;
        std::map<std::string, int> type_count;

        for (std::size_t a = 0; a < problem.apps.size(); ++a) {
            const auto& app = problem.apps[a];
            bool builtin = true;
            AppClass cls = AppClass::Dl;
            try {
                cls = app_class_from_string(app.app_type);
            } catch (const std::exception&) {
                builtin = false;
            }

            AppReport ar;
            ar.id = app.id;
            ar.type = app.app_type;
            ar.tp_kbps = result.app_tp_kbps[a];
            ar.d_budget_ms = result.app_d_ms[a];
            ar.target_utility = result.app_utility[a];
            ar.alloc_delay_ms = result.app_delay_ms[a];
            ar.path = result.assignment.choices[a].path;

            const auto m_ids = managed_flow_ids(app);
            const auto b_ids = best_effort_flow_ids(app);
            const auto m_epochs = epochs_for_flows(managed, m_ids);
            const auto b_epochs = epochs_for_flows(best_effort, b_ids);
            for (const auto& ek : m_epochs) {
                const double u = measured_utility(cls, builtin, ek, ar.target_utility, true,
                                                  app.grid, scenario.kpi);
                ar.managed_epoch_utilities.push_back(u);
                managed_samples.push_back({app.id, app.app_type, u, "simulated"});
                managed_by_type[app.app_type].push_back(u);
            }
            for (const auto& ek : b_epochs) {
                const double u = measured_utility(cls, builtin, ek, ar.target_utility, false,
                                                  app.grid, scenario.kpi);
                ar.be_epoch_utilities.push_back(u);
                be_samples.push_back({app.id, app.app_type, u, "simulated"});
                be_by_type[app.app_type].push_back(u);
            }
            ar.managed_utility =
                ar.managed_epoch_utilities.empty() ? 1.0 : mean(ar.managed_epoch_utilities);
            ar.be_utility = ar.be_epoch_utilities.empty() ? 1.0 : mean(ar.be_epoch_utilities);

            const FlowAggregate m_agg = aggregate_flows(managed, m_ids);
            ar.managed_tp_kbps = m_agg.tp_kbps;
            ar.managed_delay_ms = m_agg.delay_ms;
            ar.managed_loss = m_agg.loss;
            ar.managed_jitter_ms = m_agg.jitter_ms;
            const FlowAggregate b_agg = aggregate_flows(best_effort, b_ids);
            ar.be_tp_kbps = b_agg.tp_kbps;
            ar.be_delay_ms = b_agg.delay_ms;
            ar.be_loss = b_agg.loss;
            ar.be_jitter_ms = b_agg.jitter_ms;

            target_by_type[app.app_type].push_back(ar.target_utility);
            ++type_count[app.app_type];
            pr.apps.push_back(std::move(ar));
        }

        const PercentileSummary p10_managed = percentile_summary(managed_samples, 10.0);
        const PercentileSummary p10_be = percentile_summary(be_samples, 10.0);

        for (const auto& [type, targets] : target_by_type) {
            TypeReport tr;
            tr.type = type;
            tr.count = type_count[type];
            tr.target = mean(targets);
            std::vector<double> m_means, b_means;
            for (const auto& ar : pr.apps) {
                if (ar.type != type) continue;
                m_means.push_back(ar.managed_utility);
                b_means.push_back(ar.be_utility);
            }
            tr.managed = m_means.empty() ? 1.0 : mean(m_means);
            tr.best_effort = b_means.empty() ? 1.0 : mean(b_means);
            tr.deviation = std::abs(tr.managed - tr.target);
            if (!managed_by_type[type].empty()) {
                tr.f_managed = f_index(managed_by_type[type]);
                tr.jain_managed = jain_index(managed_by_type[type]);
            }
            if (!be_by_type[type].empty()) {
                tr.f_best_effort = f_index(be_by_type[type]);
                tr.jain_best_effort = jain_index(be_by_type[type]);
            }
            if (p10_managed.per_type_mean.count(type)) {
                tr.p10_managed = p10_managed.per_type_mean.at(type);
            }
            if (p10_be.per_type_mean.count(type)) {
                tr.p10_best_effort = p10_be.per_type_mean.at(type);
            }
            std::vector<double> stddevs;
            for (const auto& ap : p10_managed.per_app) {
                if (ap.app_type == type) stddevs.push_back(ap.stddev);
            }
            if (!stddevs.empty()) tr.mean_app_stddev_managed = mean(stddevs);
            pr.types.push_back(std::move(tr));
        }

        for (const auto& [lid, link] : scenario.topology.links) {
            LinkReport lr;
            lr.id = lid;
            lr.capacity_kbps = link.capacity_kbps;
            auto it = result.links.find(lid);
            if (it != result.links.end()) {
                lr.alloc_usage_kbps = it->second.usage_kbps;
                lr.alloc_delay_ms = it->second.delay_ms;
            }
            lr.is_bottleneck = lid == scenario.sim_template.bottleneck_link;
            pr.links.push_back(std::move(lr));
        }

        report.points.push_back(std::move(pr));
    }
    return report;
}

// --- serialization -----------------------------------------------------

ordered_json allocation_to_json(const AllocationResult& result) {
    ordered_json doc;
    doc["objectives"] = {{"uv_min1", result.uv_min1},
                         {"uv_min2", result.uv_min2},
                         {"utility_sum", result.utility_sum}};
    doc["optimal"] = result.optimal;
    ordered_json apps = ordered_json::array();
    for (std::size_t a = 0; a < result.app_ids.size(); ++a) {
        ordered_json app;
        app["id"] = result.app_ids[a];
        app["type"] = result.app_types[a];
        app["tp_index"] = result.assignment.choices[a].tp_index;
        app["d_index"] = result.assignment.choices[a].d_index;
        app["tp_kbps"] = result.app_tp_kbps[a];
        app["d_ms"] = result.app_d_ms[a];
        app["path"] = result.assignment.choices[a].path;
        app["utility"] = result.app_utility[a];
        app["delay_ms"] = result.app_delay_ms[a];
        apps.push_back(std::move(app));
    }
    doc["apps"] = std::move(apps);
    ordered_json links = ordered_json::array();
    for (const auto& [lid, load] : result.links) {
        links.push_back({{"from", lid.first},
                         {"to", lid.second},
                         {"usage_kbps", load.usage_kbps},
                         {"delay_ms", load.delay_ms}});
    }
    doc["links"] = std::move(links);
    doc["solver_stats"] = {{"nodes_explored", result.stats.nodes_explored}};
    return doc;
}

AllocationResult allocation_from_json(const ordered_json& doc) {
    AllocationResult r;
    const auto& obj = doc.at("objectives");
    r.uv_min1 = obj.at("uv_min1").get<double>();
    r.uv_min2 = obj.at("uv_min2").get<double>();
    r.utility_sum = obj.at("utility_sum").get<double>();
    r.optimal = doc.value("optimal", true);
    for (const auto& app : doc.at("apps")) {
        r.app_ids.push_back(app.at("id").get<std::string>());
        r.app_types.push_back(app.at("type").get<std::string>());
        AppChoice choice;
        choice.tp_index = app.at("tp_index").get<std::size_t>();
        choice.d_index = app.at("d_index").get<std::size_t>();
        choice.path = app.at("path").get<std::vector<std::string>>();
        r.assignment.choices.push_back(std::move(choice));
        r.app_tp_kbps.push_back(app.at("tp_kbps").get<double>());
        r.app_d_ms.push_back(app.at("d_ms").get<double>());
        r.app_utility.push_back(app.at("utility").get<double>());
        r.app_delay_ms.push_back(app.value("delay_ms", 0.0));
    }
    if (doc.contains("links")) {
        for (const auto& l : doc.at("links")) {
            LinkId lid{l.at("from").get<std::string>(), l.at("to").get<std::string>()};
            r.links[lid] = {l.at("usage_kbps").get<double>(), l.at("delay_ms").get<double>()};
        }
    }
    if (doc.contains("solver_stats")) {
        r.stats.nodes_explored = doc.at("solver_stats").value("nodes_explored", 0ULL);
    }
    return r;
}

ordered_json report_to_json(const Report& report) {
    ordered_json doc;
    doc["scenario"] = report.scenario_name;
    doc["seed"] = report.seed;
    doc["mode"] = report.mode;
    doc["epsilon"] = report.epsilon;
    doc["k_paths"] = report.k_paths;
    doc["per_type_equal"] = report.per_type_equal;
    doc["sim"] = {{"duration_s", report.duration_s},
                  {"warmup_s", report.warmup_s},
                  {"epoch_s", report.epoch_s},
                  {"base_delay_ms", report.base_delay_ms},
                  {"buffer_bytes", report.buffer_bytes},
                  {"capacity_kbps", report.capacity_kbps}};
    ordered_json points = ordered_json::array();
    for (const auto& pr : report.points) {
        ordered_json p;
        p["total_apps"] = pr.total;
        p["feasible"] = pr.feasible;
        if (!pr.feasible) {
            p["failure"] = pr.failure;
            points.push_back(std::move(p));
            continue;
        }
        p["objectives"] = {{"uv_min1", pr.uv_min1},
                           {"uv_min2", pr.uv_min2},
                           {"utility_sum", pr.utility_sum},
                           {"total_alloc_kbps", pr.total_alloc_kbps}};
        p["solver"] = {{"nodes_explored", pr.solver_nodes}, {"optimal", pr.optimal}};
        auto sim_to_json = [](const SimSummary& s) {
            return ordered_json{{"sent", s.sent},
                                {"delivered", s.delivered},
                                {"dropped", s.dropped},
                                {"loss_fraction", s.total_loss_fraction},
                                {"utilization", s.utilization},
                                {"link_drops", s.link_drops},
                                {"max_queue_bytes", s.max_queue_bytes},
                                {"max_queue_pkts", s.max_queue_pkts},
                                {"mean_queue_ms", s.mean_queue_ms},
                                {"p95_queue_ms", s.p95_queue_ms},
                                {"max_queue_ms", s.max_queue_ms}};
        };
        p["managed"] = sim_to_json(pr.managed);
        p["best_effort"] = sim_to_json(pr.best_effort);

        ordered_json types = ordered_json::array();
        for (const auto& tr : pr.types) {
            types.push_back({{"type", tr.type},
                             {"count", tr.count},
                             {"target_utility", tr.target},
                             {"managed_utility", tr.managed},
                             {"deviation", tr.deviation},
                             {"best_effort_utility", tr.best_effort},
                             {"f_index_managed", tr.f_managed},
                             {"f_index_best_effort", tr.f_best_effort},
                             {"jain_managed", tr.jain_managed},
                             {"jain_best_effort", tr.jain_best_effort},
                             {"p10_managed", tr.p10_managed},
                             {"p10_best_effort", tr.p10_best_effort},
                             {"mean_app_stddev_managed", tr.mean_app_stddev_managed}});
        }
        p["types"] = std::move(types);

        ordered_json apps = ordered_json::array();
        for (const auto& ar : pr.apps) {
            ordered_json a;
            a["id"] = ar.id;
            a["type"] = ar.type;
            a["tp_kbps"] = ar.tp_kbps;
            a["d_budget_ms"] = ar.d_budget_ms;
            a["target_utility"] = ar.target_utility;
            a["alloc_delay_ms"] = ar.alloc_delay_ms;
            a["path"] = ar.path;
            a["managed"] = {{"utility", ar.managed_utility},
                            {"epoch_utilities", ar.managed_epoch_utilities},
                            {"throughput_kbps", ar.managed_tp_kbps},
                            {"delay_ms", ar.managed_delay_ms},
                            {"loss_fraction", ar.managed_loss},
                            {"jitter_ms", ar.managed_jitter_ms}};
            a["best_effort"] = {{"utility", ar.be_utility},
                                {"epoch_utilities", ar.be_epoch_utilities},
                                {"throughput_kbps", ar.be_tp_kbps},
                                {"delay_ms", ar.be_delay_ms},
                                {"loss_fraction", ar.be_loss},
                                {"jitter_ms", ar.be_jitter_ms}};
            apps.push_back(std::move(a));
        }
        p["apps"] = std::move(apps);

        ordered_json links = ordered_json::array();
        for (const auto& lr : pr.links) {
            links.push_back({{"from", lr.id.first},
                             {"to", lr.id.second},
                             {"capacity_kbps", lr.capacity_kbps},
                             {"alloc_usage_kbps", lr.alloc_usage_kbps},
                             {"alloc_delay_ms", lr.alloc_delay_ms},
                             {"is_bottleneck", lr.is_bottleneck}});
        }
        p["links"] = std::move(links);
        points.push_back(std::move(p));
    }
    doc["points"] = std::move(points);
    return doc;
}

namespace {

std::string csv_path(const Path& path) {
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) out += "|";
        out += path[i];
    }
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

}  // namespace

std::vector<std::string> emit_report(const Report& report, ReportFormat format,
                                     const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    const fs::path dir(out_dir);

    if (format == ReportFormat::Json) {
        const fs::path p = dir / "report.json";
        write_file(p.string(), report_to_json(report).dump(2) + "\n");
        written.push_back(p.string());
        return written;
    }

    auto d = [](double v) { return format_double(v); };

    std::ostringstream per_app;
    per_app << "point_total,app_id,type,tp_kbps,d_budget_ms,target_utility,path,"
               "managed_utility,managed_tp_kbps,managed_delay_ms,managed_loss,managed_jitter_ms,"
               "be_utility,be_tp_kbps,be_delay_ms,be_loss,be_jitter_ms\n";
    std::ostringstream per_type;
    per_type << "point_total,type,count,target_utility,managed_utility,deviation,"
                "best_effort_utility,f_index_managed,f_index_best_effort,jain_managed,"
                "jain_best_effort,p10_managed,p10_best_effort,mean_app_stddev_managed\n";
    std::ostringstream per_link;
    per_link << "point_total,from,to,capacity_kbps,alloc_usage_kbps,alloc_delay_ms,"
                "is_bottleneck\n";
    std::ostringstream sweep;
    sweep << "point_total,feasible,uv_min1,uv_min2,utility_sum,total_alloc_kbps,solver_nodes,"
             "optimal,managed_loss,be_loss,managed_utilization,be_utilization,"
             "managed_mean_queue_ms,be_mean_queue_ms,managed_p95_queue_ms,be_p95_queue_ms,"
             "managed_max_queue_bytes,be_max_queue_bytes,min_f_managed,max_type_deviation\n";

    for (const auto& pr : report.points) {
        double min_f = 1.0, max_dev = 0.0;
        for (const auto& tr : pr.types) {
            min_f = std::min(min_f, tr.f_managed);
            max_dev = std::max(max_dev, tr.deviation);
        }
        sweep << pr.total << "," << (pr.feasible ? 1 : 0) << "," << d(pr.uv_min1) << ","
              << d(pr.uv_min2) << "," << d(pr.utility_sum) << "," << d(pr.total_alloc_kbps) << ","
              << pr.solver_nodes << "," << (pr.optimal ? 1 : 0) << ","
              << d(pr.managed.total_loss_fraction) << "," << d(pr.best_effort.total_loss_fraction)
              << "," << d(pr.managed.utilization) << "," << d(pr.best_effort.utilization) << ","
              << d(pr.managed.mean_queue_ms) << "," << d(pr.best_effort.mean_queue_ms) << ","
              << d(pr.managed.p95_queue_ms) << "," << d(pr.best_effort.p95_queue_ms) << ","
              << pr.managed.max_queue_bytes << "," << pr.best_effort.max_queue_bytes << ","
              << d(min_f) << "," << d(max_dev) << "\n";
        if (!pr.feasible) continue;
        for (const auto& ar : pr.apps) {
            per_app << pr.total << "," << ar.id << "," << ar.type << "," << d(ar.tp_kbps) << ","
                    << d(ar.d_budget_ms) << "," << d(ar.target_utility) << "," << csv_path(ar.path)
                    << "," << d(ar.managed_utility) << "," << d(ar.managed_tp_kbps) << ","
                    << d(ar.managed_delay_ms) << "," << d(ar.managed_loss) << ","
                    << d(ar.managed_jitter_ms) << "," << d(ar.be_utility) << ","
                    << d(ar.be_tp_kbps) << "," << d(ar.be_delay_ms) << "," << d(ar.be_loss) << ","
                    << d(ar.be_jitter_ms) << "\n";
        }
        for (const auto& tr : pr.types) {
            per_type << pr.total << "," << tr.type << "," << tr.count << "," << d(tr.target) << ","
                     << d(tr.managed) << "," << d(tr.deviation) << "," << d(tr.best_effort) << ","
                     << d(tr.f_managed) << "," << d(tr.f_best_effort) << "," << d(tr.jain_managed)
                     << "," << d(tr.jain_best_effort) << "," << d(tr.p10_managed) << ","
                     << d(tr.p10_best_effort) << "," << d(tr.mean_app_stddev_managed) << "\n";
        }
        for (const auto& lr : pr.links) {
            per_link << pr.total << "," << lr.id.first << "," << lr.id.second << ","
                     << d(lr.capacity_kbps) << "," << d(lr.alloc_usage_kbps) << ","
                     << d(lr.alloc_delay_ms) << "," << (lr.is_bottleneck ? 1 : 0) << "\n";
        }
    }

    const std::vector<std::pair<std::string, std::string>> files = {
        {"per_app.csv", per_app.str()},
        {"per_type.csv", per_type.str()},
        {"per_link.csv", per_link.str()},
        {"sweep.csv", sweep.str()},
    };
    for (const auto& [name, content] : files) {
        const fs::path p = dir / name;
        write_file(p.string(), content);
        written.push_back(p.string());
    }
    return written;
}

}  // namespace fairpace
