#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fairpace/utility.hpp"

using namespace fairpace;

namespace {

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("mos_web hits the published waypoints") {
    CHECK(mos_web(2.2) == doctest::Approx(4.03).epsilon(0.01 / 4.03));
    CHECK(mos_web(6.8) == doctest::Approx(3.03).epsilon(0.01 / 3.03));
    CHECK(mos_web(0.5) == 5.0);  // clamped at the scale top
    CHECK_THROWS_AS(mos_web(0.0), std::domain_error);
    CHECK_THROWS_AS(mos_web(-1.0), std::domain_error);
}

TEST_CASE("mos_dl hits the published waypoints") {
    CHECK(mos_dl(28.0) == doctest::Approx(4.01).epsilon(0.02 / 4.01));
    CHECK(mos_dl(1.0) == 5.0);  // raw value 9.61 clamps to the scale
    // Analytic root of -1.68*ln(dl) + 9.61 = 1.
    const double dl_floor = std::exp((9.61 - 1.0) / 1.68);
    CHECK(dl_floor == doctest::Approx(168.17).epsilon(0.01));
    CHECK(mos_dl(dl_floor) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(mos_dl(0.0), std::domain_error);
}

TEST_CASE("mos models are strictly decreasing on their unclamped domains") {
    double prev_web = mos_web(1.2);
    double prev_dl = mos_dl(1.1);
    for (double x = 1.3; x < 60.0; x += 0.7) {
        const double w = mos_web(x);
        const double d = mos_dl(x);
        if (prev_web > 1.0 && w < 5.0) CHECK(w < prev_web);
        if (prev_dl > 1.0 && d < 5.0) CHECK(d < prev_dl);
        prev_web = w;
        prev_dl = d;
    }
}

TEST_CASE("scale_mos is the affine [1,mos_max] -> [1,5] map") {
    CHECK(scale_mos(1.0, 4.6) == 1.0);
    CHECK(scale_mos(1.0, 3.65) == 1.0);
    CHECK(scale_mos(4.6, 4.6) == doctest::Approx(5.0));
    CHECK(scale_mos(2.65, 4.3) == doctest::Approx(1.65 * 4.0 / 3.3 + 1.0));
    // midpoints map to midpoints
    CHECK(scale_mos((1.0 + 4.3) / 2.0, 4.3) == doctest::Approx(3.0));
    CHECK_THROWS_AS(scale_mos(4.7, 4.6), std::domain_error);
    CHECK_THROWS_AS(scale_mos(0.5, 4.6), std::domain_error);
}

TEST_CASE("u_ssh anchors and clamping") {
    const auto anchors = SshAnchorTable::defaults();
    CHECK(u_ssh(0.0, anchors) == doctest::Approx(5.0));
    CHECK(u_ssh(1200.0, anchors) == doctest::Approx(1.0));
    CHECK(u_ssh(1500.0, anchors) == doctest::Approx(1.0));  // clamp beyond the domain
    CHECK_THROWS_AS(u_ssh(-1.0, anchors), std::domain_error);

    double prev = u_ssh(0.0, anchors);
    for (double rt = 10.0; rt <= 1400.0; rt += 10.0) {
        const double u = u_ssh(rt, anchors);
        CHECK(u <= prev + 1e-12);
        prev = u;
    }
}

TEST_CASE("u_has endpoints and midpoint") {
    CHECK(u_has(6.0, 1.0, 6.0) == doctest::Approx(5.0));
    CHECK(u_has(1.0, 1.0, 6.0) == doctest::Approx(1.0));
    CHECK(u_has(3.5, 1.0, 6.0) == doctest::Approx(3.0));
    CHECK_THROWS_AS(u_has(1.0, 2.0, 2.0), std::domain_error);
    CHECK_THROWS_AS(u_has(7.0, 1.0, 6.0), std::domain_error);
}

TEST_CASE("u_has is invariant under affine relabeling of the levels") {
    for (double shift : {-3.0, 0.0, 10.0}) {
        for (double scale : {0.5, 1.0, 7.0}) {
            const double base = u_has(2.0, 1.0, 6.0);
            CHECK(u_has(2.0 * scale + shift, 1.0 * scale + shift, 6.0 * scale + shift) ==
                  doctest::Approx(base));
        }
    }
}

TEST_CASE("u_voip meets the calibration anchors with shipped defaults") {
    const auto c = VoipCoefficients::defaults();
    CHECK(u_voip(0.0, 34.5, c) == doctest::Approx(5.0).epsilon(0.05 / 5.0));
    CHECK(u_voip(0.08, 80.0, c) == doctest::Approx(4.9).epsilon(0.05 / 4.9));
    CHECK(u_voip(1.0, 0.0, c) == doctest::Approx(1.0));
    CHECK(u_voip(1.0, 400.0, c) == doctest::Approx(1.0));
    CHECK_THROWS_AS(u_voip(-0.1, 10.0, c), std::domain_error);
    CHECK_THROWS_AS(u_voip(0.1, -10.0, c), std::domain_error);
}

TEST_CASE("u_voip is monotone non-increasing in loss and delay") {
    const auto c = VoipCoefficients::defaults();
    double prev = u_voip(0.0, 0.0, c);
    for (double loss = 0.05; loss <= 1.0; loss += 0.05) {
        const double u = u_voip(loss, 50.0, c);
        CHECK(u <= prev + 1e-12);
        prev = u;
    }
    prev = u_voip(0.02, 0.0, c);
    for (double delay = 20.0; delay <= 600.0; delay += 20.0) {
        const double u = u_voip(0.02, delay, c);
        CHECK(u <= prev + 1e-12);
        prev = u;
    }
}

TEST_CASE("voip coefficient files round-trip and reject missing keys") {
    const auto c = VoipCoefficients::defaults();
    const std::string path = temp_file("fairpace_voip_test.coef");
    c.save(path);
    const auto loaded = VoipCoefficients::load(path);
    CHECK(loaded.a == c.a);
    CHECK(loaded.e == c.e);
    CHECK(loaded.mos_max == c.mos_max);

    std::ofstream bad(path);
    bad << "a = 3.0\nb = -0.5\n";
    bad.close();
    CHECK_THROWS_WITH_AS(static_cast<void>(VoipCoefficients::load(path)),
                         doctest::Contains("missing VoIP coefficient"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("build_grid evaluates the DL model on explicit levels") {
    KpiModelParams params;
    UtilityModel model = [&](double tp, double d) {
        return class_utility(AppClass::Dl, tp, d, params);
    };
    const auto built = build_grid(model, {4000.0, 5000.0}, {0.0});
    REQUIRE(built.grid.tp_count() == 2);
    REQUIRE(built.grid.d_count() == 1);
    CHECK(built.repairs.empty());
    CHECK(built.grid.values[0][0] == doctest::Approx(4.58).epsilon(0.02 / 4.58));
    CHECK(built.grid.values[1][0] == doctest::Approx(4.95).epsilon(0.02 / 4.95));
    CHECK(built.grid.values[0][0] == doctest::Approx(mos_dl(20.0)));
    CHECK(built.grid.values[1][0] == doctest::Approx(mos_dl(16.0)));
}

TEST_CASE("a 1x1 grid equals direct model evaluation") {
    KpiModelParams params;
    UtilityModel model = [&](double tp, double d) {
        return class_utility(AppClass::Web, tp, d, params);
    };
    const auto built = build_grid(model, 3000.0, 3000.0, 1, 10.0, 10.0, 1);
    CHECK(built.grid.values[0][0] ==
          doctest::Approx(class_utility(AppClass::Web, 3000.0, 10.0, params)));
}

TEST_CASE("SSH grid is column-constant in throughput") {
    const auto built = builtin_grid(AppClass::Ssh);
    CHECK(built.repairs.empty());
    for (std::size_t d = 0; d < built.grid.d_count(); ++d) {
        for (std::size_t t = 1; t < built.grid.tp_count(); ++t) {
            CHECK(built.grid.values[t][d] == built.grid.values[0][d]);
        }
    }
}

TEST_CASE("builtin grids satisfy the grid invariants without repairs") {
    for (AppClass cls : {AppClass::Web, AppClass::Dl, AppClass::Ssh, AppClass::Voip,
                         AppClass::Vod, AppClass::Live}) {
        const auto built = builtin_grid(cls);
        CHECK(built.repairs.empty());
        CHECK(grid_violations(built.grid).empty());
        CHECK(built.grid.tp_count() == kDefaultTpSteps);
        CHECK(built.grid.d_count() == kDefaultDSteps);
        CHECK(built.grid.min_value() >= 1.0);
        CHECK(built.grid.max_value() <= 5.0);
    }
}

TEST_CASE("build_grid repairs and reports monotonicity violations") {
    // Deliberately non-monotone model: utility dips at high throughput.
    UtilityModel model = [](double tp, double d) {
        (void)d;
        return tp > 150.0 ? 2.0 : 3.0;
    };
    const auto built = build_grid(model, {100.0, 200.0}, {0.0});
    CHECK(!built.repairs.empty());
    CHECK(built.grid.values[1][0] == 3.0);  // clamped up to the row below
    CHECK(grid_violations(built.grid).empty());
}

TEST_CASE("build_grid names the failing grid point on model errors") {
    UtilityModel model = [](double tp, double d) {
        (void)d;
        if (tp > 150.0) throw std::runtime_error("boom");
        return 3.0;
    };
    CHECK_THROWS_WITH_AS(static_cast<void>(build_grid(model, {100.0, 200.0}, {10.0})),
                         doctest::Contains("tp=200"), std::runtime_error);
}

TEST_CASE("grid_lookup reads exactly and checks bounds") {
    const auto built = builtin_grid(AppClass::Dl);
    const auto& grid = built.grid;
    // max throughput and min delay corner is the grid maximum
    CHECK(grid_lookup(grid, grid.tp_count() - 1, 0) == doctest::Approx(grid.max_value()));
    CHECK(grid_lookup(grid, 0, 0) == grid.values[0][0]);
    CHECK_THROWS_AS(grid_lookup(grid, grid.tp_count(), 0), std::out_of_range);
    CHECK_THROWS_AS(grid_lookup(grid, 0, grid.d_count()), std::out_of_range);
}

TEST_CASE("grid CSV round-trips exactly") {
    const auto built = builtin_grid(AppClass::Live);
    const std::string path = temp_file("fairpace_grid_roundtrip.csv");
    save_grid(built.grid, path);
    const auto loaded = load_grid(path);
    CHECK(loaded.tp_levels_kbps == built.grid.tp_levels_kbps);
    CHECK(loaded.d_levels_ms == built.grid.d_levels_ms);
    CHECK(loaded.values == built.grid.values);
    std::remove(path.c_str());
}

TEST_CASE("load_grid rejects out-of-range utilities with the cell location") {
    const std::string path = temp_file("fairpace_grid_bad_value.csv");
    std::ofstream out(path);
    out << "tp\\d,0,10\n100,3.0,2.0\n200,5.3,4.0\n";
    out.close();
    CHECK_THROWS_WITH_AS(static_cast<void>(load_grid(path)), doctest::Contains("outside [1,5]"),
                         std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("load_grid with the repair flag clamps instead of failing") {
    const std::string path = temp_file("fairpace_grid_repair.csv");
    std::ofstream out(path);
    out << "tp\\d,0,10\n100,3.0,2.0\n200,5.3,1.5\n";  // 5.3 out of scale
    out.close();
    const auto grid = load_grid(path, /*repair=*/true);
    CHECK(grid_violations(grid).empty());
    CHECK(grid.values[1][0] == 5.0);
    std::remove(path.c_str());
}

TEST_CASE("load_grid rejects a non-ascending throughput column") {
    const std::string path = temp_file("fairpace_grid_bad_order.csv");
    std::ofstream out(path);
    out << "tp\\d,0\n200,3.0\n100,3.0\n";
    out.close();
    CHECK_THROWS_WITH_AS(static_cast<void>(load_grid(path)), doctest::Contains("ascending"),
                         std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("every builtin evaluator stays within the utility scale") {
    KpiModelParams params;
    for (AppClass cls : {AppClass::Web, AppClass::Dl, AppClass::Ssh, AppClass::Voip,
                         AppClass::Vod, AppClass::Live}) {
        for (double tp : {10.0, 100.0, 750.0, 2750.0, 12000.0}) {
            for (double d : {0.0, 5.0, 120.0, 240.0, 500.0}) {
                const double u = class_utility(cls, tp, d, params);
                CHECK(u >= 1.0);
                CHECK(u <= 5.0);
            }
        }
    }
}

TEST_CASE("web KPI synthesis uses ceil(objects/connections)+1 rounds") {
    KpiModelParams params;
    CHECK(web_request_rounds(params) == 5);  // ceil(22/6) + 1
    // 1.3 MB at 10400 kbps transfers in 1 s; 5 rounds of 100 ms add 0.5 s.
    CHECK(web_page_load_s(10400.0, 100.0, params) == doctest::Approx(1.5));
    CHECK(dl_download_s(8000.0, 50.0, params) == doctest::Approx(10.0 + 0.1));
}

TEST_CASE("video ladders map rate headroom to levels") {
    KpiModelParams params;
    CHECK(video_level(5000.0, 0.0, false, params) == 6);   // 0.9*5000 >= 2750
    CHECK(video_level(600.0, 0.0, false, params) == 1);    // below the ladder
    CHECK(video_level(5000.0, 0.0, true, params) == 6);    // 0.8*5000 >= 3172
    CHECK(video_level(5000.0, 150.0, true, params) == 5);  // delay penalty
    CHECK(video_level(5000.0, 150.0, false, params) == 6); // VoD has none
}
