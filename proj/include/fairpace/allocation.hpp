#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairpace/topology.hpp"
#include "fairpace/utility.hpp"

namespace fairpace {

// Unidirectional application demand. A bidirectional conversation is two
// independent flows with their own grids.
struct ApplicationFlow {
    std::string id;
    std::string app_type;  // (class, intent) tag
    NodeId src;
    NodeId dst;
    GridPtr grid;
};

struct AllocationProblem {
    Topology topology;
    std::vector<ApplicationFlow> apps;
    double epsilon = 0.3;        // stage-2 slack on the minimum utility
    std::size_t k_paths = 4;     // candidate paths per application
    bool per_type_equal = false; // one grid choice per app_type
    double d_max_ms = 100000.0;  // big-M sentinel for the segment encoding
};

// One grid point and one path per application.
struct AppChoice {
    std::size_t tp_index = 0;
    std::size_t d_index = 0;
    Path path;
};

struct Assignment {
    std::vector<AppChoice> choices;  // aligned with AllocationProblem::apps
};

struct LinkLoad {
    double usage_kbps = 0.0;
    double delay_ms = 0.0;
};

struct EvalReport {
    bool feasible = false;
    std::vector<std::string> violations;
    std::map<LinkId, LinkLoad> links;
    std::vector<double> app_delay_ms;  // end-to-end delay per app at the final loads
    std::vector<double> app_tp_kbps;   // selected throughput
    std::vector<double> app_d_ms;      // selected delay budget
    std::vector<double> app_utility;
    double utility_sum = 0.0;
    double min_utility = 0.0;
    double total_tp_kbps = 0.0;
};

struct SolverStats {
    std::uint64_t nodes_explored = 0;
    double wall_ms = 0.0;
};

struct AllocationResult {
    Assignment assignment;
    std::vector<std::string> app_ids;    // aligned with assignment
    std::vector<std::string> app_types;
    double uv_min1 = 0.0;
    double uv_min2 = 0.0;
    double utility_sum = 0.0;
    std::map<LinkId, LinkLoad> links;
    std::vector<double> app_delay_ms;
    std::vector<double> app_tp_kbps;
    std::vector<double> app_d_ms;
    std::vector<double> app_utility;
    SolverStats stats;
    bool optimal = true;  // heuristic results carry optimal = false ("unknown")
};

class InfeasibleError : public std::runtime_error {
public:
    InfeasibleError(const std::string& msg, std::vector<std::string> binding)
        : std::runtime_error(msg), binding_(std::move(binding)) {}
    const std::vector<std::string>& binding_constraints() const { return binding_; }

private:
    std::vector<std::string> binding_;
};

// Mirror of the MILP's piecewise selection variables for one link: exactly
// one active segment selector, scale in [0,1] bounded by the selector, and
// the usage/delay both reconstructed from them.
struct SegmentEncoding {
    std::vector<int> selector;   // l_p per segment
    std::vector<double> scale;   // S_p per segment
    double usage_kbps = 0.0;     // reconstructed
    double delay_ms = 0.0;       // reconstructed
};

SegmentEncoding encode_delay_segments(const DelayCurve& curve, double usage_kbps);

// Checks an assignment against capacity and load-dependent delay and
// returns all intermediate values. Infeasibility is a verdict, not an error.
EvalReport evaluate(const AllocationProblem& problem, const Assignment& assignment);

struct Stage1Result {
    double uv_min1 = 0.0;
    Assignment witness;
    SolverStats stats;
};

// Stage 1: maximize the minimum utility over all applications.
Stage1Result solve_stage1(const AllocationProblem& problem);

// Stage 2: maximize the utility sum with every utility held within epsilon
// of the stage-1 optimum. Deterministic tie-breaking: higher utility sum,
// then lower total throughput, then (apps in id order) larger tp_index,
// smaller d_index, lexicographically smaller path.
AllocationResult solve_stage2(const AllocationProblem& problem, double uv_min1);

// Both stages.
AllocationResult solve(const AllocationProblem& problem);

// Exhaustive enumeration applying the identical objective and tie-break
// rules. Refuses search spaces above `kOracleBudget` combinations.
inline constexpr double kOracleBudget = 1e7;
AllocationResult brute_force_oracle(const AllocationProblem& problem);

// Feasible but possibly suboptimal: binary search over candidate minimum
// utilities with a greedy packer, then single-move utility-sum improvement
// under the epsilon bound.
AllocationResult solve_heuristic(const AllocationProblem& problem);

// True if assignment `a` beats `b` under the stage-2 tie-break order.
// Exposed so tests can check solver/oracle agreement at the comparator level.
bool assignment_better(const AllocationProblem& problem, const EvalReport& ea,
                       const Assignment& a, const EvalReport& eb, const Assignment& b);

}  // namespace fairpace
