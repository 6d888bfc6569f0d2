#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fairpace/scenario.hpp"

using namespace fairpace;

namespace {

namespace fs = std::filesystem;

std::string write_temp(const std::string& name, const std::string& content) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    return p.string();
}

std::string fixture(const std::string& name) {
    return std::string(FAIRPACE_SOURCE_DIR) + "/scenarios/" + name;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const char* kMinimalScenario = R"({
  "topology": {
    "nodes": ["s", "c"],
    "links": [{"from": "s", "to": "c", "capacity_kbps": 1000, "delay_curve": [[0, 2], [1000, 2]]}]
  },
  "apps": [{"type": "DL"}]
})";

}  // namespace

TEST_CASE("minimal scenario gets defaults filled") {
    const auto path = write_temp("fairpace_minimal.json", kMinimalScenario);
    const auto sc = load_scenario(path);
    CHECK(sc.name == "fairpace_minimal");
    CHECK(sc.seed == 1);
    CHECK(sc.epsilon == 0.3);
    CHECK(sc.k_paths == 4);
    CHECK(sc.mode == SolverMode::Exact);
    CHECK(sc.sim_template.bottleneck_link == LinkId{"s", "c"});
    CHECK(sc.sim_template.bottleneck_capacity_kbps == 1000.0);
    CHECK(sc.sim_template.base_delay_ms == 2.0);
    REQUIRE(sc.mix.size() == 1);
    CHECK(sc.mix[0].count == 1);
    CHECK(sc.mix[0].src == "s");  // defaulted from the single link
    CHECK(sc.mix[0].dst == "c");
    CHECK(sc.grids.count("DL") == 1);
    std::remove(path.c_str());
}

TEST_CASE("missing capacity names the link record") {
    const auto path = write_temp("fairpace_badlink.json", R"({
      "topology": {"nodes": ["s", "c"], "links": [{"from": "s", "to": "c"}]},
      "apps": [{"type": "DL"}]
    })");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_scenario(path)),
                         doctest::Contains("links[0]"), ScenarioError);
    std::remove(path.c_str());
}

TEST_CASE("unknown type without grid_csv is an unresolved grid reference") {
    const auto path = write_temp("fairpace_badtype.json", R"({
      "topology": {
        "nodes": ["s", "c"],
        "links": [{"from": "s", "to": "c", "capacity_kbps": 1000, "delay_curve": [[0, 2], [1000, 2]]}]
      },
      "apps": [{"type": "TELEMETRY"}]
    })");
    CHECK_THROWS_WITH_AS(static_cast<void>(load_scenario(path)),
                         doctest::Contains("TELEMETRY"), ScenarioError);
    std::remove(path.c_str());
}

TEST_CASE("custom types load their grid from CSV") {
    const auto grid_path = write_temp("fairpace_custom_grid.csv",
                                      "tp\\d,0,50\n100,2,1.5\n500,4,3.5\n");
    const auto path = write_temp("fairpace_custom.json", std::string(R"({
      "topology": {
        "nodes": ["s", "c"],
        "links": [{"from": "s", "to": "c", "capacity_kbps": 1000, "delay_curve": [[0, 2], [1000, 2]]}]
      },
      "apps": [{"type": "TELEMETRY", "grid_csv": "fairpace_custom_grid.csv"}]
    })"));
    const auto sc = load_scenario(path);
    REQUIRE(sc.grids.count("TELEMETRY") == 1);
    CHECK(sc.grids.at("TELEMETRY")->tp_count() == 2);
    std::remove(path.c_str());
    std::remove(grid_path.c_str());
}

TEST_CASE("sweep expansion keeps ratios and totals") {
    const auto sc = load_scenario(fixture("sweep_full.json"));
    const auto points = expand_sweep(sc);
    REQUIRE(points.size() == 12);
    CHECK(points[0].total == 10);
    // 10 apps: 2 per class, 1 VoD + 1 Live
    CHECK(points[0].mix[0].count == 2);
    CHECK(points[0].mix[4].count == 1);
    CHECK(points[0].mix[5].count == 1);
    CHECK(points[11].total == 120);
    CHECK(points[11].mix[0].count == 24);
    CHECK(points[11].mix[4].count == 12);
    for (const auto& pt : points) {
        int total = 0;
        for (const auto& e : pt.mix) total += e.count;
        CHECK(total == pt.total);
    }
}

TEST_CASE("build_problem instantiates apps with per-type ids") {
    const auto sc = load_scenario(fixture("mini_sweep.json"));
    const auto points = expand_sweep(sc);
    REQUIRE(points.size() == 2);
    const auto problem = build_problem(sc, points[0]);
    REQUIRE(problem.apps.size() == 5);
    CHECK(problem.apps[0].id == "DL-001");
    CHECK(problem.apps[1].id == "DL-002");
    CHECK(problem.apps[2].id == "SSH-001");
    CHECK(problem.apps[4].id == "VoIP-001");
    CHECK(problem.per_type_equal);
    CHECK(problem.apps[0].grid == problem.apps[1].grid);
}

TEST_CASE("run_experiment on the smoke scenario: zero managed loss, small deviation") {
    const auto sc = load_scenario(fixture("smoke.json"));
    const auto report = run_experiment(sc);
    REQUIRE(report.points.size() == 1);
    const auto& pt = report.points[0];
    REQUIRE(pt.feasible);
    CHECK(pt.managed.total_loss_fraction == 0.0);
    CHECK(pt.managed.link_drops == 0);
    CHECK(pt.total_alloc_kbps <= 2000.0 + 1e-6);
    REQUIRE(pt.types.size() == 3);
    for (const auto& tr : pt.types) {
        CHECK(tr.deviation <= 0.5);
    }
    REQUIRE(pt.apps.size() == 4);
    for (const auto& ar : pt.apps) {
        CHECK(ar.managed_loss == 0.0);
        CHECK(!ar.managed_epoch_utilities.empty());
    }
}

TEST_CASE("empty mix produces an empty feasible point") {
    const auto path = write_temp("fairpace_empty.json", R"({
      "topology": {
        "nodes": ["s", "c"],
        "links": [{"from": "s", "to": "c", "capacity_kbps": 1000, "delay_curve": [[0, 2], [1000, 2]]}]
      },
      "apps": [{"type": "DL", "count": 0}]
    })");
    const auto sc = load_scenario(path);
    const auto report = run_experiment(sc);
    REQUIRE(report.points.size() == 1);
    CHECK(report.points[0].feasible);
    CHECK(report.points[0].apps.empty());
    CHECK(report.points[0].utility_sum == 0.0);
    std::remove(path.c_str());
}

TEST_CASE("infeasible points are recorded and the sweep continues") {
    const auto path = write_temp("fairpace_tight.json", R"({
      "topology": {
        "nodes": ["s", "c"],
        "links": [{"from": "s", "to": "c", "capacity_kbps": 150, "delay_curve": [[0, 2], [150, 2]]}]
      },
      "apps": [{"type": "DL", "count": 1}],
      "sim": {"duration_s": 4, "warmup_s": 1},
      "sweep": {"totals": [1, 4]}
    })");
    const auto sc = load_scenario(path);
    const auto report = run_experiment(sc);
    REQUIRE(report.points.size() == 2);
    CHECK(report.points[0].feasible);   // one DL at 100 kbps fits
    CHECK(!report.points[1].feasible);  // four do not
    CHECK(!report.points[1].failure.empty());
    std::remove(path.c_str());
}

TEST_CASE("emit_report is byte-identical across runs") {
    const auto sc = load_scenario(fixture("smoke.json"));
    const auto report = run_experiment(sc);

    const fs::path dir_a = fs::temp_directory_path() / "fairpace_emit_a";
    const fs::path dir_b = fs::temp_directory_path() / "fairpace_emit_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    for (auto format : {ReportFormat::Json, ReportFormat::Csv}) {
        const auto files_a = emit_report(report, format, dir_a.string());
        const auto files_b = emit_report(report, format, dir_b.string());
        REQUIRE(files_a.size() == files_b.size());
        for (std::size_t i = 0; i < files_a.size(); ++i) {
            CHECK(slurp(files_a[i]) == slurp(files_b[i]));
        }
    }
    // and a fresh pipeline run produces the same bytes
    const auto report2 = run_experiment(load_scenario(fixture("smoke.json")));
    const fs::path dir_c = fs::temp_directory_path() / "fairpace_emit_c";
    fs::remove_all(dir_c);
    emit_report(report2, ReportFormat::Json, dir_c.string());
    CHECK(slurp((dir_a / "report.json").string()) == slurp((dir_c / "report.json").string()));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    fs::remove_all(dir_c);
}

TEST_CASE("sweep csv carries one row per point; per-type-equal runs stay fair") {
    const auto sc = load_scenario(fixture("mini_sweep.json"));
    const auto report = run_experiment(sc);
    const fs::path dir = fs::temp_directory_path() / "fairpace_sweepcsv";
    fs::remove_all(dir);
    emit_report(report, ReportFormat::Csv, dir.string());
    const std::string sweep = slurp((dir / "sweep.csv").string());
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 3);  // header + 2 points
    fs::remove_all(dir);

    // With one grid choice per type, managed runs keep near-perfect
    // per-type fairness.
    for (const auto& pt : report.points) {
        REQUIRE(pt.feasible);
        for (const auto& tr : pt.types) {
            CHECK(tr.f_managed >= 0.98);
        }
    }
}

TEST_CASE("emitted report JSON parses back to the same document") {
    const auto sc = load_scenario(fixture("smoke.json"));
    const auto report = run_experiment(sc);
    const auto doc = report_to_json(report);
    const auto reparsed = ordered_json::parse(doc.dump(2));
    CHECK(reparsed.dump(2) == doc.dump(2));
    CHECK(reparsed.at("points").size() == report.points.size());
    CHECK(reparsed.at("sim").at("duration_s").get<double>() == report.duration_s);
}

TEST_CASE("run_experiment honors the heuristic solver mode") {
    Scenario sc = load_scenario(fixture("mini_sweep.json"));
    sc.mode = SolverMode::Heuristic;
    const auto report = run_experiment(sc);
    REQUIRE(report.points.size() == 2);
    CHECK(report.mode == "heuristic");
    for (const auto& pt : report.points) {
        REQUIRE(pt.feasible);
        CHECK(!pt.optimal);  // heuristic results are flagged not-proven-optimal
        CHECK(pt.managed.total_loss_fraction == 0.0);
        CHECK(pt.total_alloc_kbps <= 5000.0 + 1e-6);
    }
}

TEST_CASE("allocation JSON round-trips") {
    const auto sc = load_scenario(fixture("smoke.json"));
    const auto problem = build_problem(sc, expand_sweep(sc)[0]);
    const auto result = solve(problem);
    const auto doc = allocation_to_json(result);
    const auto back = allocation_from_json(doc);
    CHECK(back.uv_min1 == result.uv_min1);
    CHECK(back.uv_min2 == result.uv_min2);
    CHECK(back.utility_sum == result.utility_sum);
    CHECK(back.app_ids == result.app_ids);
    CHECK(back.app_tp_kbps == result.app_tp_kbps);
    REQUIRE(back.assignment.choices.size() == result.assignment.choices.size());
    for (std::size_t i = 0; i < back.assignment.choices.size(); ++i) {
        CHECK(back.assignment.choices[i].path == result.assignment.choices[i].path);
        CHECK(back.assignment.choices[i].tp_index == result.assignment.choices[i].tp_index);
    }
    // identical serialization after the round trip
    CHECK(allocation_to_json(back).dump() == doc.dump());
}

TEST_CASE("managed sim config carries the scenario bottleneck and seeds") {
    const auto sc = load_scenario(fixture("smoke.json"));
    const auto problem = build_problem(sc, expand_sweep(sc)[0]);
    const auto result = solve(problem);
    const auto cfg = managed_sim_config(sc, result, 123);
    CHECK(cfg.rng_seed == 123);
    CHECK(cfg.sources.size() == problem.apps.size());
    CHECK(cfg.bottleneck_capacity_kbps == 2000.0);
    for (const auto& s : cfg.sources) {
        CHECK(std::holds_alternative<PacedSource>(s.discipline));
    }
}

TEST_CASE("best-effort config opens six flows per WEB app and cbr for VoIP") {
    Scenario sc = load_scenario(fixture("smoke.json"));
    std::vector<ApplicationFlow> apps;
    apps.push_back({"WEB-001", "WEB", "srv", "cli", sc.grids.at("DL")});
    apps.push_back({"VoIP-001", "VoIP", "srv", "cli", sc.grids.at("VoIP")});
    apps.push_back({"DL-001", "DL", "srv", "cli", sc.grids.at("DL")});
    const auto cfg = best_effort_sim_config(sc, apps, 42);
    REQUIRE(cfg.sources.size() == 6 + 1 + 1);
    int aimd_count = 0, cbr_count = 0;
    for (const auto& s : cfg.sources) {
        if (std::holds_alternative<AimdSource>(s.discipline)) ++aimd_count;
        if (std::holds_alternative<CbrSource>(s.discipline)) ++cbr_count;
    }
    CHECK(aimd_count == 7);
    CHECK(cbr_count == 1);
    const auto& voip = *std::find_if(cfg.sources.begin(), cfg.sources.end(), [](const auto& s) {
        return s.flow_id == "VoIP-001";
    });
    CHECK(std::get<CbrSource>(voip.discipline).pkt_bytes == 20);
    CHECK(std::get<CbrSource>(voip.discipline).rate_kbps == doctest::Approx(8.0));
}

TEST_CASE("fixture scenarios all load and validate") {
    for (const char* name : {"smoke.json", "diamond.json", "mini_sweep.json",
                             "sweep_full.json"}) {
        const auto sc = load_scenario(fixture(name));
        CHECK(!sc.mix.empty());
        CHECK(validate(sc.topology).empty());
    }
}
