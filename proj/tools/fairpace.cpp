#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fairpace/format.hpp"
#include "fairpace/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitIo = 3;

using fairpace::ordered_json;

std::string default_out_dir() {
    const char* env = std::getenv("FAIRPACE_OUT_DIR");
    return env && *env ? env : ".";
}

void write_json(const std::string& path, const ordered_json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << doc.dump(2) << "\n";
}

ordered_json sim_metrics_to_json(const fairpace::SimMetrics& m) {
    ordered_json doc;
    doc["measured_window_s"] = m.measured_window_s;
    doc["link"] = {{"utilization", m.link.utilization},
                   {"drops", m.link.drops},
                   {"max_queue_bytes", m.link.max_queue_bytes},
                   {"max_queue_pkts", m.link.max_queue_pkts},
                   {"mean_queue_delay_ms", m.link.mean_queue_delay_ms},
                   {"p95_queue_delay_ms", m.link.p95_queue_delay_ms},
                   {"max_queue_delay_ms", m.link.max_queue_delay_ms}};
    ordered_json flows = ordered_json::array();
    for (const auto& [id, fm] : m.flows) {
        flows.push_back({{"flow_id", id},
                         {"sent", fm.sent},
                         {"delivered", fm.delivered},
                         {"dropped", fm.dropped},
                         {"loss_fraction", fm.loss_fraction},
                         {"throughput_kbps", fm.throughput_kbps},
                         {"mean_delay_ms", fm.mean_delay_ms},
                         {"jitter_ms", fm.jitter_ms}});
    }
    doc["flows"] = std::move(flows);
    return doc;
}

fairpace::Scenario load_with_overrides(const std::string& path,
                                       const std::optional<std::uint64_t>& seed,
                                       const std::optional<std::string>& mode) {
    fairpace::Scenario sc = fairpace::load_scenario(path);
    if (seed) {
        sc.seed = *seed;
        sc.sim_template.rng_seed = *seed;
    }
    if (mode) sc.mode = fairpace::solver_mode_from_string(*mode);
    return sc;
}

fairpace::AllocationResult solve_by_mode(const fairpace::Scenario& sc,
                                         const fairpace::AllocationProblem& problem) {
    switch (sc.mode) {
        case fairpace::SolverMode::Heuristic: return fairpace::solve_heuristic(problem);
        case fairpace::SolverMode::Oracle: return fairpace::brute_force_oracle(problem);
        case fairpace::SolverMode::Exact: break;
    }
    return fairpace::solve(problem);
}

fairpace::ScenarioPoint pick_point(const fairpace::Scenario& sc, std::optional<int> total) {
    const auto points = fairpace::expand_sweep(sc);
    if (!total) return points.front();
    for (const auto& pt : points) {
        if (pt.total == *total) return pt;
    }
    // Not one of the sweep points: scale the base mix to the requested total.
    fairpace::Scenario scaled = sc;
    scaled.sweep_totals = {*total};
    return fairpace::expand_sweep(scaled).front();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"fairpace: utility-fair rate allocation with a paced-traffic simulator"};
    cli.require_subcommand(1);

    std::string out_dir = default_out_dir();
    std::optional<std::uint64_t> seed;
    std::string format = "json";
    cli.add_option("--out-dir", out_dir, "output directory (default $FAIRPACE_OUT_DIR or .)");
    cli.add_option("--seed", seed, "override the scenario seed");
    cli.add_option("--format", format, "report format: json|csv|both")
        ->check(CLI::IsMember({"json", "csv", "both"}));

    std::string scenario_path;
    std::optional<std::string> mode;
    std::optional<int> total;
    std::string allocation_path;
    std::string trace_path;

    auto* validate_cmd = cli.add_subcommand("validate", "lint a scenario file");
    validate_cmd->add_option("scenario", scenario_path)->required();

    auto* solve_cmd = cli.add_subcommand("solve", "solve the allocation only");
    solve_cmd->add_option("scenario", scenario_path)->required();
    solve_cmd->add_option("--mode", mode, "exact|heuristic|oracle");
    solve_cmd->add_option("--total", total, "scale the mix to this application count");

    auto* simulate_cmd =
        cli.add_subcommand("simulate", "run the managed sim from an allocation file");
    simulate_cmd->add_option("scenario", scenario_path)->required();
    simulate_cmd->add_option("--allocation", allocation_path, "allocation JSON from solve")
        ->required();
    simulate_cmd->add_option("--trace", trace_path, "write a packet event trace CSV");

    auto* run_cmd = cli.add_subcommand("run", "full pipeline: solve, simulate, report");
    run_cmd->add_option("scenario", scenario_path)->required();
    run_cmd->add_option("--mode", mode, "exact|heuristic|oracle");

    auto* sweep_cmd = cli.add_subcommand("sweep", "expand the sweep spec into points");
    sweep_cmd->add_option("scenario", scenario_path)->required();

    auto* oracle_cmd =
        cli.add_subcommand("oracle", "verify the exact solver against brute force");
    oracle_cmd->add_option("scenario", scenario_path)->required();
    oracle_cmd->add_option("--total", total, "scale the mix to this application count");

    CLI11_PARSE(cli, argc, argv);

    try {
        if (validate_cmd->parsed()) {
            fairpace::Scenario sc = load_with_overrides(scenario_path, seed, mode);
            const auto points = fairpace::expand_sweep(sc);
            std::cout << "scenario " << sc.name << ": " << sc.topology.nodes.size() << " nodes, "
                      << sc.topology.links.size() << " links, " << points.size()
                      << " point(s), mode " << fairpace::to_string(sc.mode) << "\n";
            for (const auto& pt : points) {
                std::cout << "  point |A|=" << pt.total << ":";
                for (const auto& e : pt.mix) {
                    if (e.count > 0) std::cout << " " << e.type << "x" << e.count;
                }
                std::cout << "\n";
            }
            std::cout << "ok\n";
            return kExitOk;
        }

        if (solve_cmd->parsed()) {
            fairpace::Scenario sc = load_with_overrides(scenario_path, seed, mode);
            const auto point = pick_point(sc, total);
            const auto problem = fairpace::build_problem(sc, point);
            try {
                const auto result = solve_by_mode(sc, problem);
                const std::string path = out_dir + "/allocation.json";
                std::filesystem::create_directories(out_dir);
                write_json(path, fairpace::allocation_to_json(result));
                std::cout << "solved |A|=" << point.total << ": uv_min1=" << result.uv_min1
                          << " uv_min2=" << result.uv_min2 << " sum=" << result.utility_sum
                          << " -> " << path << "\n";
            } catch (const fairpace::InfeasibleError& e) {
                std::cerr << e.what() << "\n";
                return kExitInfeasible;
            }
            return kExitOk;
        }

        if (simulate_cmd->parsed()) {
            fairpace::Scenario sc = load_with_overrides(scenario_path, seed, mode);
            std::ifstream in(allocation_path);
            if (!in) {
                std::cerr << "cannot open allocation file: " << allocation_path << "\n";
                return kExitIo;
            }
            ordered_json doc = ordered_json::parse(in);
            const auto result = fairpace::allocation_from_json(doc);
            fairpace::SimConfig cfg = fairpace::managed_sim_config(sc, result, sc.seed);
            cfg.trace_path = trace_path;
            const auto metrics = fairpace::run(cfg);
            const std::string path = out_dir + "/sim_metrics.json";
            std::filesystem::create_directories(out_dir);
            write_json(path, sim_metrics_to_json(metrics));
            std::cout << "simulated " << cfg.sources.size() << " paced flows -> " << path << "\n";
            return kExitOk;
        }

        if (sweep_cmd->parsed()) {
            fairpace::Scenario sc = load_with_overrides(scenario_path, seed, mode);
            ordered_json doc = ordered_json::array();
            for (const auto& pt : fairpace::expand_sweep(sc)) {
                ordered_json mix = ordered_json::array();
                for (const auto& e : pt.mix) {
                    mix.push_back({{"type", e.type},
                                   {"count", e.count},
                                   {"src", e.src},
                                   {"dst", e.dst}});
                }
                doc.push_back({{"total", pt.total}, {"mix", std::move(mix)}});
            }
            std::cout << doc.dump(2) << "\n";
            return kExitOk;
        }

        if (oracle_cmd->parsed()) {
            fairpace::Scenario sc = load_with_overrides(scenario_path, seed, mode);
            const auto point = pick_point(sc, total);
            const auto problem = fairpace::build_problem(sc, point);
            try {
                const auto exact = fairpace::solve(problem);
                const auto oracle = fairpace::brute_force_oracle(problem);
                const bool equal = exact.uv_min1 == oracle.uv_min1 &&
                                   exact.uv_min2 == oracle.uv_min2 &&
                                   exact.utility_sum == oracle.utility_sum;
                std::cout << "exact:  uv_min1=" << exact.uv_min1 << " uv_min2=" << exact.uv_min2
                          << " sum=" << exact.utility_sum << "\n";
                std::cout << "oracle: uv_min1=" << oracle.uv_min1 << " uv_min2=" << oracle.uv_min2
                          << " sum=" << oracle.utility_sum << "\n";
                std::cout << (equal ? "MATCH" : "MISMATCH") << "\n";
                return equal ? kExitOk : kExitValidation;
            } catch (const fairpace::InfeasibleError& e) {
                std::cerr << e.what() << "\n";
                return kExitInfeasible;
            } catch (const std::length_error& e) {
                std::cerr << e.what() << " (use --total or a smaller scenario)\n";
                return kExitValidation;
            }
        }

        if (run_cmd->parsed()) {
            fairpace::Scenario sc = load_with_overrides(scenario_path, seed, mode);
            const auto report = fairpace::run_experiment(sc);
            const bool is_sweep = !sc.sweep_totals.empty();
            std::vector<std::string> files;
            try {
                if (format == "json" || format == "both") {
                    auto f = fairpace::emit_report(report, fairpace::ReportFormat::Json, out_dir);
                    files.insert(files.end(), f.begin(), f.end());
                }
                if (format == "csv" || format == "both") {
                    auto f = fairpace::emit_report(report, fairpace::ReportFormat::Csv, out_dir);
                    files.insert(files.end(), f.begin(), f.end());
                }
            } catch (const std::runtime_error& e) {
                std::cerr << "io error: " << e.what() << "\n";
                return kExitIo;
            }
            bool any_infeasible = false;
            for (const auto& pt : report.points) {
                std::cout << "|A|=" << pt.total;
                if (!pt.feasible) {
                    std::cout << " INFEASIBLE: " << pt.failure << "\n";
                    any_infeasible = true;
                    continue;
                }
                double min_f = 1.0, max_dev = 0.0;
                for (const auto& tr : pt.types) {
                    min_f = std::min(min_f, tr.f_managed);
                    max_dev = std::max(max_dev, tr.deviation);
                }
                std::cout << " uv_min=" << pt.uv_min2 << " sum=" << pt.utility_sum
                          << " managed_loss=" << pt.managed.total_loss_fraction
                          << " be_loss=" << pt.best_effort.total_loss_fraction
                          << " min_F=" << min_f << " max_dev=" << max_dev << "\n";
            }
            for (const auto& f : files) std::cout << "wrote " << f << "\n";
            if (any_infeasible && !is_sweep) return kExitInfeasible;
            return kExitOk;
        }
    } catch (const fairpace::ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
