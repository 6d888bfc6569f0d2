#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fairpace {

using NodeId = std::string;
using LinkId = std::pair<NodeId, NodeId>;  // ordered (from, to)

// Piecewise-linear map from link usage [kbps] to link delay [ms].
// Knots are (usage_kbps[i], delay_ms[i]); segments are left-closed so a
// usage exactly on a knot takes the knot delay.
struct DelayCurve {
    std::vector<double> usage_kbps;  // strictly ascending, first element 0
    std::vector<double> delay_ms;    // non-negative, non-decreasing

    double max_usage() const { return usage_kbps.empty() ? 0.0 : usage_kbps.back(); }

    static DelayCurve constant(double capacity_kbps, double delay) {
        return DelayCurve{{0.0, capacity_kbps}, {delay, delay}};
    }
};

struct Link {
    double capacity_kbps = 0.0;
    DelayCurve delay_curve;
};

struct Topology {
    std::set<NodeId> nodes;
    std::map<LinkId, Link> links;

    bool has_node(const NodeId& n) const { return nodes.count(n) > 0; }
    bool has_link(const NodeId& u, const NodeId& v) const { return links.count({u, v}) > 0; }
    const Link& link(const NodeId& u, const NodeId& v) const;
};

using Path = std::vector<NodeId>;  // node sequence, front()=src, back()=dst

// Returns the list of invariant violations; empty means well-formed.
std::vector<std::string> validate(const Topology& topology);

// Piecewise-linear interpolation of the curve at `usage_kbps`.
// Exact at knots. Throws std::out_of_range outside [0, last knot].
double link_delay(const DelayCurve& curve, double usage_kbps);

// Up to k loop-free src->dst paths ordered by (hop count ascending,
// lexicographic node sequence). Deterministic; empty if disconnected.
std::vector<Path> candidate_paths(const Topology& topology, const NodeId& src,
                                  const NodeId& dst, std::size_t k);

// Edges (u,v) along a path, in order.
std::vector<LinkId> path_links(const Path& path);

}  // namespace fairpace
