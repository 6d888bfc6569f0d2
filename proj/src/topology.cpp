#include "fairpace/topology.hpp"

#include <algorithm>
#include <sstream>

namespace fairpace {

namespace {

std::string link_name(const LinkId& id) { return id.first + "->" + id.second; }

}  // namespace

const Link& Topology::link(const NodeId& u, const NodeId& v) const {
    auto it = links.find({u, v});
    if (it == links.end()) {
        throw std::out_of_range("no such link: " + u + "->" + v);
    }
    return it->second;
}

std::vector<std::string> validate(const Topology& topology) {
    std::vector<std::string> violations;
    auto complain = [&](const std::string& msg) { violations.push_back(msg); };

    for (const auto& [id, link] : topology.links) {
        const std::string name = link_name(id);
        if (id.first == id.second) {
            complain("link " + name + ": self-loop");
        }
        if (!topology.has_node(id.first)) {
            complain("link " + name + ": unknown node " + id.first);
        }
        if (!topology.has_node(id.second)) {
            complain("link " + name + ": unknown node " + id.second);
        }
        if (!(link.capacity_kbps > 0.0)) {
            complain("link " + name + ": capacity must be > 0");
        }

        const DelayCurve& c = link.delay_curve;
        if (c.usage_kbps.size() != c.delay_ms.size()) {
            complain("link " + name + ": curve usage/delay length mismatch");
            continue;
        }
        if (c.usage_kbps.size() < 2) {
            complain("link " + name + ": curve needs at least 2 knots");
            continue;
        }
        if (c.usage_kbps.front() != 0.0) {
            complain("link " + name + ": curve must start at usage 0");
        }
        for (std::size_t i = 1; i < c.usage_kbps.size(); ++i) {
            if (!(c.usage_kbps[i] > c.usage_kbps[i - 1])) {
                complain("link " + name + ": curve usage points not strictly ascending");
                break;
            }
        }
        for (std::size_t i = 0; i < c.delay_ms.size(); ++i) {
            if (c.delay_ms[i] < 0.0) {
                complain("link " + name + ": negative delay point");
                break;
            }
        }
        for (std::size_t i = 1; i < c.delay_ms.size(); ++i) {
            if (c.delay_ms[i] < c.delay_ms[i - 1]) {
                complain("link " + name + ": delay points decrease with load");
                break;
            }
        }
        if (c.max_usage() < link.capacity_kbps) {
            complain("link " + name + ": curve does not cover the link capacity");
        }
    }
    return violations;
}

double link_delay(const DelayCurve& curve, double usage_kbps) {
    if (curve.usage_kbps.size() < 2) {
        throw std::invalid_argument("delay curve needs at least 2 knots");
    }
    if (usage_kbps < 0.0 || usage_kbps > curve.max_usage()) {
        std::ostringstream os;
        os << "usage " << usage_kbps << " outside curve domain [0, " << curve.max_usage() << "]";
        throw std::out_of_range(os.str());
    }
    // Left-closed segments: usage on a knot takes the knot delay.
    auto it = std::upper_bound(curve.usage_kbps.begin(), curve.usage_kbps.end(), usage_kbps);
    std::size_t seg = static_cast<std::size_t>(it - curve.usage_kbps.begin());
    if (seg > 0) --seg;
    if (seg >= curve.usage_kbps.size() - 1) seg = curve.usage_kbps.size() - 2;

    const double u0 = curve.usage_kbps[seg];
    const double u1 = curve.usage_kbps[seg + 1];
    const double d0 = curve.delay_ms[seg];
    const double d1 = curve.delay_ms[seg + 1];
    if (usage_kbps == u0) return d0;
    const double frac = (usage_kbps - u0) / (u1 - u0);
    return d0 + (d1 - d0) * frac;
}

std::vector<Path> candidate_paths(const Topology& topology, const NodeId& src,
                                  const NodeId& dst, std::size_t k) {
    if (src == dst) {
        throw std::invalid_argument("candidate_paths: src == dst");
    }
    if (!topology.has_node(src) || !topology.has_node(dst)) {
        throw std::invalid_argument("candidate_paths: unknown endpoint");
    }
    if (k == 0) return {};

    // Sorted adjacency gives lexicographic expansion order.
    std::map<NodeId, std::vector<NodeId>> adjacency;
    for (const auto& [id, link] : topology.links) {
        (void)link;
        adjacency[id.first].push_back(id.second);
    }
    for (auto& [node, next] : adjacency) {
        (void)node;
        std::sort(next.begin(), next.end());
    }

    // Level-by-level expansion: partial paths at hop-count h, kept in
    // lexicographic order. Completed paths therefore come out sorted by
    // (hop count, node sequence) and we can stop at k.
    std::vector<Path> results;
    std::vector<Path> frontier = {{src}};
    const std::size_t max_hops = topology.nodes.empty() ? 0 : topology.nodes.size() - 1;
    for (std::size_t hop = 0; hop < max_hops && !frontier.empty(); ++hop) {
        std::vector<Path> next_frontier;
        for (const Path& partial : frontier) {
            auto it = adjacency.find(partial.back());
            if (it == adjacency.end()) continue;
            for (const NodeId& nxt : it->second) {
                if (std::find(partial.begin(), partial.end(), nxt) != partial.end()) {
                    continue;  // loop
                }
                Path extended = partial;
                extended.push_back(nxt);
                if (nxt == dst) {
                    results.push_back(std::move(extended));
                    if (results.size() >= k) return results;
                } else {
                    next_frontier.push_back(std::move(extended));
                }
            }
        }
        frontier = std::move(next_frontier);
    }
    return results;
}

std::vector<LinkId> path_links(const Path& path) {
    std::vector<LinkId> out;
    if (path.size() < 2) return out;
    out.reserve(path.size() - 1);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        out.emplace_back(path[i], path[i + 1]);
    }
    return out;
}

}  // namespace fairpace
