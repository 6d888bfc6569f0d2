#include <doctest.h>

#include "fairpace/topology.hpp"

using namespace fairpace;

namespace {

Topology two_node_100mbps() {
    Topology t;
    t.nodes = {"srv", "cli"};
    t.links[{"srv", "cli"}] = Link{100000.0, DelayCurve::constant(100000.0, 2.0)};
    return t;
}

Topology diamond() {
    // u -> {a, b} -> v
    Topology t;
    t.nodes = {"u", "a", "b", "v"};
    const DelayCurve curve = DelayCurve::constant(1000.0, 1.0);
    t.links[{"u", "a"}] = Link{1000.0, curve};
    t.links[{"u", "b"}] = Link{1000.0, curve};
    t.links[{"a", "v"}] = Link{1000.0, curve};
    t.links[{"b", "v"}] = Link{1000.0, curve};
    return t;
}

}  // namespace

TEST_CASE("validate accepts the two-node constant-delay topology") {
    CHECK(validate(two_node_100mbps()).empty());
}

TEST_CASE("validate flags zero capacity with the link name") {
    Topology t = two_node_100mbps();
    t.links[{"srv", "cli"}].capacity_kbps = 0.0;
    const auto report = validate(t);
    REQUIRE(report.size() == 1);
    CHECK(report.front().find("srv->cli") != std::string::npos);
    CHECK(report.front().find("capacity") != std::string::npos);
}

TEST_CASE("validate flags descending usage points") {
    Topology t = two_node_100mbps();
    t.links[{"srv", "cli"}].delay_curve.usage_kbps = {0.0, 50000.0, 40000.0, 100000.0};
    t.links[{"srv", "cli"}].delay_curve.delay_ms = {2.0, 2.0, 2.0, 2.0};
    const auto report = validate(t);
    REQUIRE(!report.empty());
    CHECK(report.front().find("ascending") != std::string::npos);
}

TEST_CASE("validate flags self-loops, bad nodes and short curves") {
    Topology t = two_node_100mbps();
    t.links[{"cli", "cli"}] = Link{10.0, DelayCurve::constant(10.0, 1.0)};
    t.links[{"srv", "ghost"}] = Link{10.0, DelayCurve{{0.0}, {1.0}}};
    const auto report = validate(t);
    CHECK(report.size() >= 3);  // self-loop, unknown node, short curve
}

TEST_CASE("link_delay on a constant curve") {
    const DelayCurve curve = DelayCurve::constant(100000.0, 2.0);
    CHECK(link_delay(curve, 57300.0) == doctest::Approx(2.0));
    CHECK(link_delay(curve, 0.0) == doctest::Approx(2.0));
    CHECK(link_delay(curve, 100000.0) == doctest::Approx(2.0));
}

TEST_CASE("link_delay interpolates linearly and hits knots exactly") {
    const DelayCurve curve{{0.0, 100.0}, {0.0, 10.0}};
    CHECK(link_delay(curve, 100.0) == 10.0);
    CHECK(link_delay(curve, 50.0) == doctest::Approx(5.0));
    CHECK(link_delay(curve, 0.0) == 0.0);
}

TEST_CASE("link_delay rejects out-of-domain usage") {
    const DelayCurve curve{{0.0, 100.0}, {0.0, 10.0}};
    CHECK_THROWS_AS(link_delay(curve, -1.0), std::out_of_range);
    CHECK_THROWS_AS(link_delay(curve, 100.1), std::out_of_range);
}

TEST_CASE("link_delay is continuous, non-decreasing and exact at knots") {
    const DelayCurve curve{{0.0, 20.0, 50.0, 120.0}, {1.0, 1.0, 4.0, 30.0}};
    for (std::size_t i = 0; i < curve.usage_kbps.size(); ++i) {
        CHECK(link_delay(curve, curve.usage_kbps[i]) == curve.delay_ms[i]);
    }
    double prev = link_delay(curve, 0.0);
    for (int i = 1; i <= 1200; ++i) {
        const double u = 120.0 * i / 1200.0;
        const double d = link_delay(curve, u);
        CHECK(d >= prev - 1e-12);       // non-decreasing
        CHECK(std::abs(d - prev) < 0.1);  // no jumps at this sampling step
        prev = d;
    }
}

TEST_CASE("candidate_paths on a single link") {
    const auto paths = candidate_paths(two_node_100mbps(), "srv", "cli", 4);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0] == Path{"srv", "cli"});
}

TEST_CASE("candidate_paths orders the diamond lexicographically") {
    const auto paths = candidate_paths(diamond(), "u", "v", 2);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0] == Path{"u", "a", "v"});
    CHECK(paths[1] == Path{"u", "b", "v"});
}

TEST_CASE("candidate_paths returns an empty list for disconnected pairs") {
    Topology t = diamond();
    t.nodes.insert("x");
    CHECK(candidate_paths(t, "u", "x", 4).empty());
    CHECK(candidate_paths(t, "v", "u", 4).empty());  // directed
}

TEST_CASE("candidate_paths prefers fewer hops and is stable across calls") {
    Topology t = diamond();
    t.links[{"u", "v"}] = Link{1000.0, DelayCurve::constant(1000.0, 1.0)};
    const auto first = candidate_paths(t, "u", "v", 10);
    REQUIRE(first.size() == 3);
    CHECK(first[0] == Path{"u", "v"});
    CHECK(first[1] == Path{"u", "a", "v"});
    CHECK(first[2] == Path{"u", "b", "v"});
    for (int i = 0; i < 5; ++i) {
        CHECK(candidate_paths(t, "u", "v", 10) == first);
    }
    CHECK(candidate_paths(t, "u", "v", 2).size() == 2);
}

TEST_CASE("path_links splits a path into ordered edges") {
    const auto links = path_links({"a", "b", "c"});
    REQUIRE(links.size() == 2);
    CHECK(links[0] == LinkId{"a", "b"});
    CHECK(links[1] == LinkId{"b", "c"});
}
