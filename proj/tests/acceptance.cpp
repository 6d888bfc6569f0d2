// Acceptance suite: end-to-end checks of the allocation engine and the
// packet simulator against their committed tolerances. Each test case
// prints one PASS/FAIL line.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "fairpace/scenario.hpp"
#include "instance_gen.hpp"

using namespace fairpace;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void verdict(int criterion, bool pass, const std::string& detail) {
    std::cout << "[criterion " << criterion << "] " << (pass ? "PASS" : "FAIL") << ": " << detail
              << std::endl;
}

std::string fixture(const std::string& name) {
    return std::string(FAIRPACE_SOURCE_DIR) + "/scenarios/" + name;
}

// --- shared corpus of random instances (criteria 1, 2, 9) ---------------

struct CorpusEntry {
    AllocationProblem problem;
    AllocationResult exact;
    AllocationResult oracle;
};

struct Corpus {
    std::vector<CorpusEntry> solved;
    int infeasible = 0;
    double wall_s = 0.0;
    bool assignments_equal = true;
    bool objectives_equal = true;
};

std::string assignment_key(const AllocationResult& r) {
    std::ostringstream os;
    for (const auto& c : r.assignment.choices) {
        os << c.tp_index << "," << c.d_index;
        for (const auto& n : c.path) os << "." << n;
        os << ";";
    }
    return os.str();
}

const Corpus& corpus() {
    static const Corpus data = [] {
        Corpus c;
        std::mt19937_64 rng(0xFA12FACEULL);
        const auto t0 = Clock::now();
        while (c.solved.size() < 200 && c.solved.size() + c.infeasible < 2000) {
            CorpusEntry entry;
            entry.problem = testgen::random_instance(rng);
            bool exact_inf = false, oracle_inf = false;
            try {
                entry.exact = solve(entry.problem);
            } catch (const InfeasibleError&) {
                exact_inf = true;
            }
            try {
                entry.oracle = brute_force_oracle(entry.problem);
            } catch (const InfeasibleError&) {
                oracle_inf = true;
            }
            if (exact_inf != oracle_inf) {
                c.objectives_equal = false;
                continue;
            }
            if (exact_inf) {
                ++c.infeasible;
                continue;
            }
            if (entry.exact.uv_min1 != entry.oracle.uv_min1 ||
                entry.exact.uv_min2 != entry.oracle.uv_min2 ||
                entry.exact.utility_sum != entry.oracle.utility_sum) {
                c.objectives_equal = false;
            }
            if (assignment_key(entry.exact) != assignment_key(entry.oracle)) {
                c.assignments_equal = false;
            }
            c.solved.push_back(std::move(entry));
        }
        c.wall_s = seconds_since(t0);
        return c;
    }();
    return data;
}

// --- shared paper-shaped sweep (criteria 5-8) ----------------------------

struct SweepData {
    Report report;
    std::vector<double> managed_sim_wall_s;
    std::vector<double> solve_wall_s;
    std::vector<int> totals;
    bool feasible_everywhere = true;
};

const SweepData& sweep() {
    static const SweepData data = [] {
        SweepData d;
        const Scenario sc = load_scenario(fixture("sweep_full.json"));
        d.report = run_experiment(sc);
        for (const auto& pt : d.report.points) {
            d.totals.push_back(pt.total);
            if (!pt.feasible) d.feasible_everywhere = false;
        }
        // Re-run the per-point solve and managed sim under a wall clock; the
        // report itself stays timing-free for determinism.
        const auto points = expand_sweep(sc);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto problem = build_problem(sc, points[i]);
            const auto t0 = Clock::now();
            const auto result = solve(problem);
            d.solve_wall_s.push_back(seconds_since(t0));
            const auto cfg = managed_sim_config(sc, result, sc.seed + 2 * i);
            const auto t1 = Clock::now();
            static_cast<void>(run(cfg));
            d.managed_sim_wall_s.push_back(seconds_since(t1));
        }
        return d;
    }();
    return data;
}

const PointReport* point_at(const Report& report, int total) {
    for (const auto& pt : report.points) {
        if (pt.total == total) return &pt;
    }
    return nullptr;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<missing:" + path + ">";
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("criterion 1: exact solver matches the brute-force oracle") {
    const Corpus& c = corpus();
    bool pass = true;
    CHECK(c.solved.size() >= 200);
    pass &= c.solved.size() >= 200;
    CHECK(c.objectives_equal);
    pass &= c.objectives_equal;
    CHECK(c.assignments_equal);
    pass &= c.assignments_equal;
    CHECK(c.wall_s < 60.0);
    pass &= c.wall_s < 60.0;
    std::ostringstream os;
    os << c.solved.size() << " solved instances (+" << c.infeasible
       << " infeasible on both sides), objectives and assignments identical, " << c.wall_s
       << " s";
    verdict(1, pass, os.str());
}

TEST_CASE("criterion 2: two-stage contract on the instance corpus") {
    const Corpus& c = corpus();
    bool pass = true;
    for (const auto& entry : c.solved) {
        const bool slack_ok =
            entry.exact.uv_min2 >= entry.exact.uv_min1 - entry.problem.epsilon - 1e-9;
        const auto s1 = solve_stage1(entry.problem);
        const double witness_sum = evaluate(entry.problem, s1.witness).utility_sum;
        const bool sum_ok = entry.exact.utility_sum >= witness_sum - 1e-9;
        CHECK(slack_ok);
        CHECK(sum_ok);
        pass &= slack_ok && sum_ok;
    }
    std::ostringstream os;
    os << "uv_min2 >= uv_min1 - epsilon and stage-2 sum >= stage-1 witness sum on "
       << c.solved.size() << " instances";
    verdict(2, pass, os.str());
}

TEST_CASE("criterion 3: piecewise-delay encoding reconstructs the interpolator") {
    std::mt19937_64 rng(1003);
    bool pass = true;
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int knots = 2 + static_cast<int>(rng() % 5);
        DelayCurve curve;
        double u = 0.0, d = static_cast<double>(rng() % 20) / 2.0;
        for (int k = 0; k < knots; ++k) {
            curve.usage_kbps.push_back(u);
            curve.delay_ms.push_back(d);
            u += 1.0 + static_cast<double>(rng() % 100000) / 7.0;
            d += static_cast<double>(rng() % 400) / 10.0;
        }
        const double usage = curve.max_usage() * (static_cast<double>(rng() % 1000001) / 1e6);
        const auto enc = encode_delay_segments(curve, usage);
        const double err_u = std::abs(enc.usage_kbps - usage);
        const double err_d = std::abs(enc.delay_ms - link_delay(curve, usage));
        worst = std::max({worst, err_u, err_d});
        CHECK(err_u <= 1e-9);
        CHECK(err_d <= 1e-9);
        pass &= err_u <= 1e-9 && err_d <= 1e-9;
        int active = 0;
        for (int s : enc.selector) active += s;
        CHECK(active == 1);
        pass &= active == 1;
    }
    std::ostringstream os;
    os << "1000 random (curve, usage) pairs reconstructed, worst error " << worst;
    verdict(3, pass, os.str());
}

TEST_CASE("criterion 4: utility model anchor points") {
    bool pass = true;
    auto near = [&](double value, double target, double tol, const char* what) {
        const bool ok = std::abs(value - target) <= tol;
        CHECK_MESSAGE(ok, what, " = ", value, " expected ", target, " +- ", tol);
        pass &= ok;
    };
    near(mos_web(2.2), 4.03, 0.05, "mos_web(2.2)");
    near(mos_web(6.8), 3.03, 0.05, "mos_web(6.8)");
    near(mos_dl(28.0), 4.01, 0.05, "mos_dl(28)");

    const auto anchors = SshAnchorTable::defaults();
    near(u_ssh(0.0, anchors), 5.0, 1e-9, "u_ssh(0)");
    near(u_ssh(1200.0, anchors), 1.0, 1e-9, "u_ssh(1200)");

    near(u_has(6, 1, 6), 5.0, 1e-12, "u_has(qmax)");
    near(u_has(1, 1, 6), 1.0, 1e-12, "u_has(qmin)");
    near(u_has(3.5, 1, 6), 3.0, 1e-12, "u_has(mid)");

    const auto voip = VoipCoefficients::defaults();
    near(u_voip(0.0, 34.5, voip), 5.0, 0.05, "u_voip(0, 34.5)");
    near(u_voip(0.08, 80.0, voip), 4.9, 0.05, "u_voip(0.08, 80)");
    verdict(4, pass, "WEB/DL waypoints, SSH and HAS endpoints, VoIP calibration anchors");
}

TEST_CASE("criterion 5: managed sweep has zero loss and sub-5ms p95 queueing") {
    const SweepData& d = sweep();
    bool pass = d.feasible_everywhere && d.report.points.size() == 12;
    CHECK(d.feasible_everywhere);
    double worst_p95 = 0.0, worst_wall = 0.0;
    std::uint64_t total_drops = 0;
    for (const auto& pt : d.report.points) {
        CHECK(pt.managed.link_drops == 0);
        CHECK(pt.managed.dropped == 0);
        CHECK(pt.managed.p95_queue_ms < 5.0);
        pass &= pt.managed.link_drops == 0 && pt.managed.dropped == 0 &&
                pt.managed.p95_queue_ms < 5.0;
        total_drops += pt.managed.dropped;
        worst_p95 = std::max(worst_p95, pt.managed.p95_queue_ms);
    }
    for (double wall : d.managed_sim_wall_s) {
        CHECK(wall < 30.0);
        pass &= wall < 30.0;
        worst_wall = std::max(worst_wall, wall);
    }
    std::ostringstream os;
    os << "12 points, 0 drops, worst p95 queueing " << worst_p95 << " ms, slowest 60 s sim "
       << worst_wall << " s";
    verdict(5, pass, os.str());
}

TEST_CASE("criterion 6: best-effort loss grows with load; queueing delay gap >= 10x") {
    const SweepData& d = sweep();
    bool pass = true;
    int inversions = 0;
    double prev = -1.0;
    for (const auto& pt : d.report.points) {
        if (pt.total >= 40) {
            CHECK(pt.best_effort.total_loss_fraction > 0.0);
            pass &= pt.best_effort.total_loss_fraction > 0.0;
        }
        if (prev >= 0.0 && pt.best_effort.total_loss_fraction < prev) ++inversions;
        prev = pt.best_effort.total_loss_fraction;
    }
    CHECK(inversions <= 1);
    pass &= inversions <= 1;

    const PointReport* top = point_at(d.report, 120);
    REQUIRE(top != nullptr);
    const double ratio = top->managed.mean_queue_ms > 0.0
                             ? top->best_effort.mean_queue_ms / top->managed.mean_queue_ms
                             : std::numeric_limits<double>::infinity();
    CHECK(ratio >= 10.0);
    pass &= ratio >= 10.0;
    std::ostringstream os;
    os << inversions << " inversion(s) across 12 points, loss at |A|=120 is "
       << top->best_effort.total_loss_fraction << ", queueing-delay ratio " << ratio << "x";
    verdict(6, pass, os.str());
}

TEST_CASE("criterion 7: managed utilities track the allocated targets") {
    const SweepData& d = sweep();
    bool pass = true;
    double worst_any = 0.0, worst_tight = 0.0;
    for (const auto& pt : d.report.points) {
        for (const auto& tr : pt.types) {
            if (tr.type == "WEB" || tr.type == "DL" || tr.type == "SSH" || tr.type == "VoIP") {
                CHECK(tr.deviation <= 0.5);
                pass &= tr.deviation <= 0.5;
                worst_any = std::max(worst_any, tr.deviation);
            }
            if (tr.type == "DL" || tr.type == "SSH") {
                CHECK(tr.deviation <= 0.2);
                pass &= tr.deviation <= 0.2;
                worst_tight = std::max(worst_tight, tr.deviation);
            }
        }
    }
    std::ostringstream os;
    os << "worst WEB/DL/SSH/VoIP deviation " << worst_any << " (<= 0.5), worst DL/SSH "
       << worst_tight << " (<= 0.2)";
    verdict(7, pass, os.str());
}

TEST_CASE("criterion 8: per-type F-index of managed runs stays above 0.98") {
    const SweepData& d = sweep();
    bool pass = true;
    double worst = 1.0;
    for (const auto& pt : d.report.points) {
        for (const auto& tr : pt.types) {
            CHECK(tr.f_managed >= 0.98);
            pass &= tr.f_managed >= 0.98;
            worst = std::min(worst, tr.f_managed);
        }
    }
    std::ostringstream os;
    os << "minimum per-type F-index " << worst << " across 12 points";
    verdict(8, pass, os.str());
}

TEST_CASE("criterion 9: solver runtime targets") {
    const SweepData& d = sweep();
    bool pass = true;
    REQUIRE(!d.solve_wall_s.empty());
    const double exact_120 = d.solve_wall_s.back();
    CHECK(d.totals.back() == 120);
    CHECK(exact_120 < 60.0);
    pass &= exact_120 < 60.0;

    const Scenario sc = load_scenario(fixture("sweep_full.json"));
    Scenario top = sc;
    top.sweep_totals = {120};
    const auto problem = build_problem(top, expand_sweep(top)[0]);
    const auto t0 = Clock::now();
    const auto heur = solve_heuristic(problem);
    const double heur_s = seconds_since(t0);
    CHECK(heur_s < 1.0);
    pass &= heur_s < 1.0;
    CHECK(evaluate(problem, heur.assignment).feasible);
    pass &= evaluate(problem, heur.assignment).feasible;

    int heuristic_feasible = 0;
    bool heuristic_sound = true;
    for (const auto& entry : corpus().solved) {
        AllocationResult h;
        try {
            h = solve_heuristic(entry.problem);
        } catch (const InfeasibleError&) {
            continue;  // a greedy refusal is not a feasibility violation
        }
        const bool ok = evaluate(entry.problem, h.assignment).feasible;
        CHECK(ok);
        heuristic_sound &= ok;
        ++heuristic_feasible;
    }
    pass &= heuristic_sound;
    std::ostringstream os;
    os << "exact 120-app solve " << exact_120 << " s (< 60), heuristic " << heur_s
       << " s (< 1), heuristic feasible on " << heuristic_feasible << " corpus instances";
    verdict(9, pass, os.str());
}

TEST_CASE("criterion 10: full pipeline is byte-identical across executions") {
    bool pass = true;
    const fs::path base = fs::temp_directory_path() / "fairpace_determinism";
    fs::remove_all(base);
    int files_compared = 0;
    for (const char* name : {"smoke.json", "diamond.json", "mini_sweep.json"}) {
        for (int run_idx = 0; run_idx < 2; ++run_idx) {
            const fs::path dir = base / (std::string(name) + "." + std::to_string(run_idx));
            fs::create_directories(dir);
            std::ostringstream cmd;
            cmd << FAIRPACE_CLI_PATH << " --out-dir " << dir << " --format both run "
                << fixture(name) << " > " << (dir / "stdout.txt") << " 2>&1";
            const int rc = std::system(cmd.str().c_str());
            CHECK(rc == 0);
            pass &= rc == 0;
        }
        const fs::path a = base / (std::string(name) + ".0");
        const fs::path b = base / (std::string(name) + ".1");
        for (const char* file : {"report.json", "per_app.csv", "per_type.csv", "per_link.csv",
                                 "sweep.csv"}) {
            const std::string left = slurp((a / file).string());
            const std::string right = slurp((b / file).string());
            const bool same = left == right && left.find("<missing:") != 0;
            const std::string what = std::string(name) + "/" + file + " differs";
            CHECK_MESSAGE(same, what);
            pass &= same;
            ++files_compared;
        }
    }
    fs::remove_all(base);
    std::ostringstream os;
    os << files_compared << " artifacts byte-identical across two executions of 3 scenarios";
    verdict(10, pass, os.str());
}
