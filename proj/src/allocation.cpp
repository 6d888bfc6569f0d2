#include "fairpace/allocation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace fairpace {

namespace {

constexpr double kScaleTop = 5.0;
constexpr double kCapTolKbps = 1e-6;
constexpr double kDelayTolMs = 1e-6;
constexpr double kUtilityTol = 1e-9;
constexpr double kTpTol = 1e-6;
constexpr std::size_t kNoChoice = static_cast<std::size_t>(-1);

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct LinkTable {
    std::vector<LinkId> ids;
    std::vector<double> capacity;
    std::vector<const DelayCurve*> curves;
    std::map<LinkId, int> index;
};

struct AppPaths {
    std::vector<Path> paths;
    std::vector<std::vector<int>> path_links;
};

// Preprocessed problem: indexed links, candidate paths, search orders.
struct Instance {
    const AllocationProblem* problem = nullptr;
    LinkTable links;
    std::vector<AppPaths> apps;
    std::vector<std::size_t> order;     // search order
    std::vector<std::size_t> id_order;  // apps sorted by id
    std::vector<int> group;             // app_type group per app
    std::size_t group_count = 0;
};

void check_problem(const AllocationProblem& problem) {
    auto violations = validate(problem.topology);
    if (!violations.empty()) {
        throw std::invalid_argument("invalid topology: " + violations.front());
    }
    if (problem.epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    if (problem.k_paths < 1) throw std::invalid_argument("k_paths must be >= 1");
    // The big-M sentinel must dominate every reachable link delay or the
    // FLD linearization the evaluation mirrors would be inexact.
    for (const auto& [id, link] : problem.topology.links) {
        if (link.delay_curve.delay_ms.back() > problem.d_max_ms) {
            throw std::invalid_argument("link " + id.first + "->" + id.second +
                                        ": delay curve exceeds the d_max sentinel");
        }
    }
    for (const auto& app : problem.apps) {
        if (app.src == app.dst) {
            throw std::invalid_argument("app " + app.id + ": src == dst");
        }
        if (!app.grid || app.grid->empty()) {
            throw std::invalid_argument("app " + app.id + ": empty utility grid");
        }
        auto gv = grid_violations(*app.grid);
        if (!gv.empty()) {
            throw std::invalid_argument("app " + app.id + ": invalid grid: " + gv.front());
        }
    }
}

Instance build_instance(const AllocationProblem& problem, bool require_paths) {
    check_problem(problem);
    Instance inst;
    inst.problem = &problem;

    for (const auto& [id, link] : problem.topology.links) {
        inst.links.index[id] = static_cast<int>(inst.links.ids.size());
        inst.links.ids.push_back(id);
        inst.links.capacity.push_back(link.capacity_kbps);
        inst.links.curves.push_back(&link.delay_curve);
    }

    std::vector<std::string> missing;
    for (const auto& app : problem.apps) {
        AppPaths ap;
        ap.paths = candidate_paths(problem.topology, app.src, app.dst, problem.k_paths);
        for (const auto& path : ap.paths) {
            std::vector<int> ls;
            for (const auto& lid : path_links(path)) ls.push_back(inst.links.index.at(lid));
            ap.path_links.push_back(std::move(ls));
        }
        if (ap.paths.empty()) {
            missing.push_back("path existence: app " + app.id + " has no candidate path");
        }
        inst.apps.push_back(std::move(ap));
    }
    if (require_paths && !missing.empty()) {
        throw InfeasibleError("infeasible: " + missing.front(), missing);
    }

    std::map<std::string, int> group_of;
    for (const auto& app : problem.apps) {
        if (!group_of.count(app.app_type)) {
            int next = static_cast<int>(group_of.size());
            group_of[app.app_type] = next;
        }
        inst.group.push_back(group_of[app.app_type]);
    }
    inst.group_count = group_of.size();

    inst.id_order.resize(problem.apps.size());
    std::iota(inst.id_order.begin(), inst.id_order.end(), 0);
    std::stable_sort(inst.id_order.begin(), inst.id_order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return problem.apps[a].id < problem.apps[b].id;
                     });

    // Apps ordered by descending maximum throughput demand; with
    // per-type-equal choices, apps of a type stay consecutive so each type
    // branches exactly once.
    auto max_tp = [&](std::size_t a) { return problem.apps[a].grid->tp_levels_kbps.back(); };
    std::vector<double> group_max(inst.group_count, 0.0);
    for (std::size_t a = 0; a < problem.apps.size(); ++a) {
        group_max[inst.group[a]] = std::max(group_max[inst.group[a]], max_tp(a));
    }
    inst.order.resize(problem.apps.size());
    std::iota(inst.order.begin(), inst.order.end(), 0);
    std::stable_sort(inst.order.begin(), inst.order.end(), [&](std::size_t a, std::size_t b) {
        if (problem.per_type_equal) {
            if (group_max[inst.group[a]] != group_max[inst.group[b]]) {
                return group_max[inst.group[a]] > group_max[inst.group[b]];
            }
            if (inst.group[a] != inst.group[b]) {
                return problem.apps[a].app_type < problem.apps[b].app_type;
            }
        } else if (max_tp(a) != max_tp(b)) {
            return max_tp(a) > max_tp(b);
        }
        return problem.apps[a].id < problem.apps[b].id;
    });
    return inst;
}

// Candidate values the minimum utility can take: the union of grid values.
std::vector<double> candidate_min_values(const AllocationProblem& problem) {
    std::vector<double> vals;
    for (const auto& app : problem.apps) {
        for (const auto& row : app.grid->values) {
            vals.insert(vals.end(), row.begin(), row.end());
        }
    }
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    return vals;
}

struct PickedChoice {
    std::size_t tp_index = 0;
    std::size_t d_index = 0;
    int path_idx = 0;
};

// Shared mutable search state for the exact searches.
struct SearchState {
    explicit SearchState(const Instance& inst)
        : usage(inst.links.ids.size(), 0.0),
          chosen(inst.problem->apps.size()),
          placed(inst.problem->apps.size(), false),
          group_tp(inst.group_count, kNoChoice),
          group_d(inst.group_count, kNoChoice),
          group_members(inst.group_count, 0) {}

    std::vector<double> usage;
    std::vector<PickedChoice> chosen;
    std::vector<char> placed;
    std::vector<std::size_t> group_tp, group_d;  // per-type lock
    std::vector<int> group_members;              // placed apps per group
    double sum_uv = 0.0;
    double sum_tp = 0.0;
};

double path_delay_at(const Instance& inst, const std::vector<double>& usage,
                     const std::vector<int>& links) {
    double total = 0.0;
    for (int l : links) {
        const DelayCurve& curve = *inst.links.curves[l];
        total += link_delay(curve, std::clamp(usage[l], 0.0, curve.max_usage()));
    }
    return total;
}

bool capacity_fits(const Instance& inst, const std::vector<double>& usage,
                   const std::vector<int>& links, double tp) {
    for (int l : links) {
        if (usage[l] + tp > inst.links.capacity[l] + kCapTolKbps) return false;
    }
    return true;
}

// Delay budgets only tighten as load grows, so a violated budget at the
// current loads rules out every completion.
bool placed_delays_ok(const Instance& inst, const SearchState& st) {
    const auto& apps = inst.problem->apps;
    for (std::size_t a = 0; a < apps.size(); ++a) {
        if (!st.placed[a]) continue;
        const auto& choice = st.chosen[a];
        const double budget = apps[a].grid->d_levels_ms[choice.d_index];
        const auto& links =
            inst.apps[a].path_links[static_cast<std::size_t>(choice.path_idx)];
        if (path_delay_at(inst, st.usage, links) > budget + kDelayTolMs) return false;
    }
    return true;
}

struct PruneCounters {
    std::uint64_t capacity = 0;
    std::uint64_t delay = 0;
};

Assignment state_to_assignment(const Instance& inst, const SearchState& st) {
    Assignment as;
    as.choices.resize(inst.problem->apps.size());
    for (std::size_t a = 0; a < as.choices.size(); ++a) {
        as.choices[a].tp_index = st.chosen[a].tp_index;
        as.choices[a].d_index = st.chosen[a].d_index;
        as.choices[a].path = inst.apps[a].paths[static_cast<std::size_t>(st.chosen[a].path_idx)];
    }
    return as;
}

// Stage-1 feasibility: does an assignment exist with every utility >= target?
// Depth-first with backtracking; per throughput level only the loosest delay
// budget still reaching the target needs to be tried.
struct FeasibilitySearch {
    const Instance& inst;
    double target;
    SearchState st;
    std::uint64_t nodes = 0;
    PruneCounters prunes;
    bool found = false;

    FeasibilitySearch(const Instance& i, double t) : inst(i), target(t), st(i) {}

    bool run() {
        found = dfs(0);
        return found;
    }

    bool dfs(std::size_t pos) {
        ++nodes;
        if (pos == inst.order.size()) {
            Assignment as = state_to_assignment(inst, st);
            return evaluate(*inst.problem, as).feasible;
        }
        const std::size_t a = inst.order[pos];
        const auto& app = inst.problem->apps[a];
        const auto& grid = *app.grid;
        const int g = inst.group[a];
        const bool locked = inst.problem->per_type_equal && st.group_tp[g] != kNoChoice;

        for (std::size_t tp = 0; tp < grid.tp_count(); ++tp) {
            std::size_t d = kNoChoice;
            if (locked) {
                if (tp != st.group_tp[g]) continue;
                d = st.group_d[g];
                if (d >= grid.d_count() || grid.values[tp][d] < target) continue;
            } else {
                for (std::size_t cand = grid.d_count(); cand-- > 0;) {
                    if (grid.values[tp][cand] >= target) {
                        d = cand;
                        break;
                    }
                }
                if (d == kNoChoice) continue;
            }
            if (try_place(pos, a, tp, d)) return true;
        }
        return false;
    }

    bool try_place(std::size_t pos, std::size_t a, std::size_t tp, std::size_t d) {
        const auto& app = inst.problem->apps[a];
        const double tp_kbps = app.grid->tp_levels_kbps[tp];
        const int g = inst.group[a];
        for (std::size_t p = 0; p < inst.apps[a].paths.size(); ++p) {
            const auto& links = inst.apps[a].path_links[p];
            if (!capacity_fits(inst, st.usage, links, tp_kbps)) {
                ++prunes.capacity;
                continue;
            }
            for (int l : links) st.usage[l] += tp_kbps;
            st.chosen[a] = {tp, d, static_cast<int>(p)};
            st.placed[a] = true;
            const bool was_locked = st.group_tp[g] != kNoChoice;
            if (inst.problem->per_type_equal && !was_locked) {
                st.group_tp[g] = tp;
                st.group_d[g] = d;
            }
            ++st.group_members[g];

            bool ok = placed_delays_ok(inst, st);
            if (!ok) ++prunes.delay;
            if (ok && dfs(pos + 1)) return true;

            --st.group_members[g];
            if (inst.problem->per_type_equal && !was_locked) {
                st.group_tp[g] = kNoChoice;
                st.group_d[g] = kNoChoice;
            }
            st.placed[a] = false;
            for (int l : links) st.usage[l] -= tp_kbps;
        }
        return false;
    }
};

struct ChoiceRec {
    std::size_t tp_index = 0;
    std::size_t d_index = 0;
    int path_idx = 0;
    double uv = 0.0;
    double tp_kbps = 0.0;
};

std::vector<std::vector<ChoiceRec>> admissible_choices(const Instance& inst, double bound) {
    std::vector<std::vector<ChoiceRec>> out(inst.problem->apps.size());
    for (std::size_t a = 0; a < inst.problem->apps.size(); ++a) {
        const auto& grid = *inst.problem->apps[a].grid;
        for (std::size_t tp = 0; tp < grid.tp_count(); ++tp) {
            for (std::size_t d = 0; d < grid.d_count(); ++d) {
                if (grid.values[tp][d] < bound) continue;
                for (int p = 0; p < static_cast<int>(inst.apps[a].paths.size()); ++p) {
                    out[a].push_back(
                        {tp, d, p, grid.values[tp][d], grid.tp_levels_kbps[tp]});
                }
            }
        }
        std::sort(out[a].begin(), out[a].end(), [](const ChoiceRec& x, const ChoiceRec& y) {
            if (x.uv != y.uv) return x.uv > y.uv;
            if (x.tp_kbps != y.tp_kbps) return x.tp_kbps < y.tp_kbps;
            if (x.d_index != y.d_index) return x.d_index < y.d_index;
            return x.path_idx < y.path_idx;
        });
    }
    return out;
}

// Stage-2 branch and bound: maximize the utility sum over choices kept
// admissible by the epsilon bound, with deterministic tie-breaking.
struct SumSearch {
    const Instance& inst;
    const std::vector<std::vector<ChoiceRec>>& choices;
    SearchState st;
    std::uint64_t nodes = 0;

    std::optional<Assignment> best;
    EvalReport best_eval;

    SumSearch(const Instance& i, const std::vector<std::vector<ChoiceRec>>& c)
        : inst(i), choices(c), st(i) {}

    void seed(const Assignment& as) {
        EvalReport er = evaluate(*inst.problem, as);
        if (er.feasible) {
            best = as;
            best_eval = std::move(er);
        }
    }

    bool choice_open(std::size_t a, const ChoiceRec& c) const {
        const int g = inst.group[a];
        if (inst.problem->per_type_equal && st.group_tp[g] != kNoChoice &&
            (c.tp_index != st.group_tp[g] || c.d_index != st.group_d[g])) {
            return false;
        }
        const auto& links = inst.apps[a].path_links[static_cast<std::size_t>(c.path_idx)];
        if (!capacity_fits(inst, st.usage, links, c.tp_kbps)) return false;
        const double budget = inst.problem->apps[a].grid->d_levels_ms[c.d_index];
        return path_delay_at(inst, st.usage, links) <= budget + kDelayTolMs;
    }

    // Remaining apps of a type that are forced onto one shared path can be
    // bounded as a block: the block needs n*tp capacity, which is far
    // tighter than letting every member claim the residual alone.
    bool group_block(std::size_t pos, std::size_t& span, double& sum_ub, double& tp_lb) {
        const std::size_t a = inst.order[pos];
        const int g = inst.group[a];
        if (!inst.problem->per_type_equal) return false;
        if (inst.apps[a].paths.size() != 1) return false;
        span = 1;
        for (std::size_t i = pos + 1; i < inst.order.size(); ++i) {
            const std::size_t b = inst.order[i];
            if (inst.group[b] != g) break;
            if (inst.apps[b].paths.size() != 1 ||
                inst.apps[b].path_links[0] != inst.apps[a].path_links[0] ||
                inst.problem->apps[b].grid != inst.problem->apps[a].grid) {
                return false;
            }
            ++span;
        }
        const double n = static_cast<double>(span);
        const auto& links = inst.apps[a].path_links[0];
        double max_uv = -1.0;
        double min_tp = std::numeric_limits<double>::infinity();
        for (const auto& c : choices[a]) {
            if (c.path_idx != 0) continue;
            if (inst.problem->per_type_equal && st.group_tp[g] != kNoChoice &&
                (c.tp_index != st.group_tp[g] || c.d_index != st.group_d[g])) {
                continue;
            }
            bool fits = true;
            for (int l : links) {
                if (st.usage[l] + n * c.tp_kbps > inst.links.capacity[l] + kCapTolKbps) {
                    fits = false;
                    break;
                }
            }
            if (!fits) continue;
            const double budget = inst.problem->apps[a].grid->d_levels_ms[c.d_index];
            if (path_delay_at(inst, st.usage, links) > budget + kDelayTolMs) continue;
            max_uv = std::max(max_uv, c.uv);
            min_tp = std::min(min_tp, c.tp_kbps);
        }
        if (max_uv < 0.0) {
            sum_ub = -1.0;  // block can no longer be placed
            return true;
        }
        sum_ub = n * max_uv;
        tp_lb = n * min_tp;
        return true;
    }

    // Optimistic completion of the remaining apps: per-type blocks where the
    // members share one forced path, each app alone against the residual
    // capacity otherwise. Link delays only grow, so both are admissible.
    bool bound_allows(std::size_t pos) {
        double sum_ub = st.sum_uv;
        double tp_lb = st.sum_tp;
        std::size_t i = pos;
        while (i < inst.order.size()) {
            std::size_t span = 0;
            double block_uv = 0.0, block_tp = 0.0;
            if (group_block(i, span, block_uv, block_tp)) {
                if (block_uv < 0.0) return false;
                sum_ub += block_uv;
                tp_lb += block_tp;
                i += span;
                continue;
            }
            const std::size_t a = inst.order[i];
            double max_uv = -1.0;
            double min_tp = std::numeric_limits<double>::infinity();
            for (const auto& c : choices[a]) {
                if (!choice_open(a, c)) continue;
                max_uv = std::max(max_uv, c.uv);
                min_tp = std::min(min_tp, c.tp_kbps);
            }
            if (max_uv < 0.0) return false;  // some app can no longer be placed
            sum_ub += max_uv;
            tp_lb += min_tp;
            ++i;
        }
        if (!best) return true;
        if (sum_ub < best_eval.utility_sum - kUtilityTol) return false;
        if (sum_ub <= best_eval.utility_sum + kUtilityTol &&
            tp_lb > best_eval.total_tp_kbps + kTpTol) {
            return false;
        }
        return true;
    }

    void dfs(std::size_t pos) {
        ++nodes;
        if (pos == inst.order.size()) {
            Assignment as = state_to_assignment(inst, st);
            EvalReport er = evaluate(*inst.problem, as);
            if (!er.feasible) return;
            if (!best || assignment_better(*inst.problem, er, as, best_eval, *best)) {
                best = std::move(as);
                best_eval = std::move(er);
            }
            return;
        }
        if (!bound_allows(pos)) return;

        const std::size_t a = inst.order[pos];
        const int g = inst.group[a];
        for (const auto& c : choices[a]) {
            if (!choice_open(a, c)) continue;
            const auto& links = inst.apps[a].path_links[static_cast<std::size_t>(c.path_idx)];
            for (int l : links) st.usage[l] += c.tp_kbps;
            st.chosen[a].tp_index = c.tp_index;
            st.chosen[a].d_index = c.d_index;
            st.chosen[a].path_idx = c.path_idx;
            st.placed[a] = true;
            st.sum_uv += c.uv;
            st.sum_tp += c.tp_kbps;
            const bool was_locked = st.group_tp[g] != kNoChoice;
            if (inst.problem->per_type_equal && !was_locked) {
                st.group_tp[g] = c.tp_index;
                st.group_d[g] = c.d_index;
            }

            if (placed_delays_ok(inst, st)) dfs(pos + 1);

            if (inst.problem->per_type_equal && !was_locked) {
                st.group_tp[g] = kNoChoice;
                st.group_d[g] = kNoChoice;
            }
            st.sum_uv -= c.uv;
            st.sum_tp -= c.tp_kbps;
            st.placed[a] = false;
            for (int l : links) st.usage[l] -= c.tp_kbps;
        }
    }
};

AllocationResult make_result(const AllocationProblem& problem, const Assignment& as,
                             double uv_min1, SolverStats stats, bool optimal) {
    EvalReport er = evaluate(problem, as);
    AllocationResult r;
    r.assignment = as;
    for (const auto& app : problem.apps) {
        r.app_ids.push_back(app.id);
        r.app_types.push_back(app.app_type);
    }
    r.uv_min1 = uv_min1;
    r.uv_min2 = er.min_utility;
    r.utility_sum = er.utility_sum;
    r.links = er.links;
    r.app_delay_ms = er.app_delay_ms;
    r.app_tp_kbps = er.app_tp_kbps;
    r.app_d_ms = er.app_d_ms;
    r.app_utility = er.app_utility;
    r.stats = stats;
    r.optimal = optimal;
    return r;
}

AllocationResult empty_result(const AllocationProblem& problem) {
    AllocationResult r;
    r.uv_min1 = kScaleTop;
    r.uv_min2 = kScaleTop;
    r.utility_sum = 0.0;
    for (const auto& [id, link] : problem.topology.links) {
        r.links[id] = {0.0, link_delay(link.delay_curve, 0.0)};
    }
    return r;
}

std::vector<std::string> binding_summary(const PruneCounters& prunes) {
    std::vector<std::string> out;
    if (prunes.capacity >= prunes.delay && prunes.capacity > 0) {
        out.push_back("capacity: " + std::to_string(prunes.capacity) + " placements rejected");
    }
    if (prunes.delay > 0) {
        out.push_back("delay: " + std::to_string(prunes.delay) + " placements rejected");
    }
    if (out.empty()) out.push_back("no feasible grid choice exists");
    return out;
}

}  // namespace

SegmentEncoding encode_delay_segments(const DelayCurve& curve, double usage_kbps) {
    if (curve.usage_kbps.size() < 2) {
        throw std::invalid_argument("encode_delay_segments: curve needs at least 2 knots");
    }
    if (usage_kbps < 0.0 || usage_kbps > curve.max_usage()) {
        throw std::out_of_range("encode_delay_segments: usage outside curve domain");
    }
    const std::size_t segments = curve.usage_kbps.size() - 1;
    SegmentEncoding enc;
    enc.selector.assign(segments, 0);
    enc.scale.assign(segments, 0.0);

    // Left-closed segments to match link_delay.
    std::size_t seg = segments - 1;
    for (std::size_t p = 0; p < segments; ++p) {
        if (usage_kbps < curve.usage_kbps[p + 1]) {
            seg = p;
            break;
        }
    }
    const double u0 = curve.usage_kbps[seg];
    const double u1 = curve.usage_kbps[seg + 1];
    enc.selector[seg] = 1;
    enc.scale[seg] = (usage_kbps - u0) / (u1 - u0);

    for (std::size_t p = 0; p < segments; ++p) {
        enc.usage_kbps += enc.selector[p] * curve.usage_kbps[p] +
                          (curve.usage_kbps[p + 1] - curve.usage_kbps[p]) * enc.scale[p];
        enc.delay_ms += enc.selector[p] * curve.delay_ms[p] +
                        (curve.delay_ms[p + 1] - curve.delay_ms[p]) * enc.scale[p];
    }
    return enc;
}

EvalReport evaluate(const AllocationProblem& problem, const Assignment& assignment) {
    EvalReport r;
    auto complain = [&](const std::string& msg) { r.violations.push_back(msg); };

    if (assignment.choices.size() != problem.apps.size()) {
        complain("assignment has " + std::to_string(assignment.choices.size()) + " choices for " +
                 std::to_string(problem.apps.size()) + " apps");
        r.feasible = false;
        return r;
    }

    const std::size_t n = problem.apps.size();
    r.app_delay_ms.assign(n, 0.0);
    r.app_tp_kbps.assign(n, 0.0);
    r.app_d_ms.assign(n, 0.0);
    r.app_utility.assign(n, 0.0);

    for (const auto& [id, link] : problem.topology.links) {
        (void)link;
        r.links[id] = LinkLoad{};
    }

    // Structure, then link usage.
    for (std::size_t a = 0; a < n; ++a) {
        const auto& app = problem.apps[a];
        const auto& choice = assignment.choices[a];
        const auto& grid = *app.grid;
        if (choice.tp_index >= grid.tp_count() || choice.d_index >= grid.d_count()) {
            complain("app " + app.id + ": grid index out of range");
            continue;
        }
        r.app_tp_kbps[a] = grid.tp_levels_kbps[choice.tp_index];
        r.app_d_ms[a] = grid.d_levels_ms[choice.d_index];
        r.app_utility[a] = grid.values[choice.tp_index][choice.d_index];

        const auto& path = choice.path;
        if (path.size() < 2 || path.front() != app.src || path.back() != app.dst) {
            complain("app " + app.id + ": path does not connect " + app.src + " to " + app.dst);
            continue;
        }
        std::set<NodeId> seen(path.begin(), path.end());
        if (seen.size() != path.size()) {
            complain("app " + app.id + ": path has a loop");
            continue;
        }
        bool links_ok = true;
        for (const auto& lid : path_links(path)) {
            auto it = r.links.find(lid);
            if (it == r.links.end()) {
                complain("app " + app.id + ": path uses unknown link " + lid.first + "->" +
                         lid.second);
                links_ok = false;
                break;
            }
        }
        if (!links_ok) continue;
        for (const auto& lid : path_links(path)) {
            r.links[lid].usage_kbps += r.app_tp_kbps[a];
        }
    }

    // Capacity and load-dependent delay per link.
    for (auto& [lid, load] : r.links) {
        const Link& link = problem.topology.links.at(lid);
        if (load.usage_kbps > link.capacity_kbps + kCapTolKbps) {
            std::ostringstream os;
            os << "capacity: link " << lid.first << "->" << lid.second << " carries "
               << load.usage_kbps << " kbps over capacity " << link.capacity_kbps;
            complain(os.str());
        }
        load.delay_ms = link_delay(
            link.delay_curve,
            std::clamp(load.usage_kbps, 0.0, link.delay_curve.max_usage()));
    }

    // End-to-end delay against the selected budgets.
    r.min_utility = n == 0 ? kScaleTop : std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < n; ++a) {
        const auto& app = problem.apps[a];
        const auto& path = assignment.choices[a].path;
        double ad = 0.0;
        for (const auto& lid : path_links(path)) {
            auto it = r.links.find(lid);
            if (it != r.links.end()) ad += it->second.delay_ms;
        }
        r.app_delay_ms[a] = ad;
        if (ad > r.app_d_ms[a] + kDelayTolMs) {
            std::ostringstream os;
            os << "delay: app " << app.id << " sees " << ad << " ms against budget "
               << r.app_d_ms[a] << " ms";
            complain(os.str());
        }
        r.utility_sum += r.app_utility[a];
        r.total_tp_kbps += r.app_tp_kbps[a];
        r.min_utility = std::min(r.min_utility, r.app_utility[a]);
    }

    r.feasible = r.violations.empty();
    return r;
}

bool assignment_better(const AllocationProblem& problem, const EvalReport& ea,
                       const Assignment& a, const EvalReport& eb, const Assignment& b) {
    if (ea.utility_sum > eb.utility_sum + kUtilityTol) return true;
    if (eb.utility_sum > ea.utility_sum + kUtilityTol) return false;
    if (ea.total_tp_kbps < eb.total_tp_kbps - kTpTol) return true;
    if (eb.total_tp_kbps < ea.total_tp_kbps - kTpTol) return false;

    std::vector<std::size_t> id_order(problem.apps.size());
    std::iota(id_order.begin(), id_order.end(), 0);
    std::stable_sort(id_order.begin(), id_order.end(), [&](std::size_t x, std::size_t y) {
        return problem.apps[x].id < problem.apps[y].id;
    });
    // Apps earlier in id order receive the larger allocation on ties.
    for (std::size_t idx : id_order) {
        if (a.choices[idx].tp_index != b.choices[idx].tp_index) {
            return a.choices[idx].tp_index > b.choices[idx].tp_index;
        }
    }
    for (std::size_t idx : id_order) {
        if (a.choices[idx].d_index != b.choices[idx].d_index) {
            return a.choices[idx].d_index < b.choices[idx].d_index;
        }
    }
    for (std::size_t idx : id_order) {
        if (a.choices[idx].path != b.choices[idx].path) {
            return a.choices[idx].path < b.choices[idx].path;
        }
    }
    return false;
}

Stage1Result solve_stage1(const AllocationProblem& problem) {
    const auto start = Clock::now();
    Stage1Result result;
    if (problem.apps.empty()) {
        result.uv_min1 = kScaleTop;
        result.stats.wall_ms = elapsed_ms(start);
        return result;
    }
    Instance inst = build_instance(problem, /*require_paths=*/true);
    const std::vector<double> values = candidate_min_values(problem);

    // Feasibility is monotone in the target, so binary search the highest
    // achievable minimum utility.
    FeasibilitySearch lowest(inst, values.front());
    if (!lowest.run()) {
        result.stats.nodes_explored = lowest.nodes;
        auto binding = binding_summary(lowest.prunes);
        throw InfeasibleError("infeasible: no assignment satisfies " + binding.front(), binding);
    }
    std::uint64_t nodes = lowest.nodes;

    std::size_t lo = 0, hi = values.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo + 1) / 2;
        FeasibilitySearch probe(inst, values[mid]);
        const bool ok = probe.run();
        nodes += probe.nodes;
        if (ok) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }

    FeasibilitySearch final_run(inst, values[lo]);
    final_run.run();
    nodes += final_run.nodes;
    result.uv_min1 = values[lo];
    result.witness = state_to_assignment(inst, final_run.st);
    result.stats.nodes_explored = nodes;
    result.stats.wall_ms = elapsed_ms(start);
    return result;
}

AllocationResult solve_stage2(const AllocationProblem& problem, double uv_min1) {
    const auto start = Clock::now();
    if (problem.apps.empty()) {
        AllocationResult r = empty_result(problem);
        r.stats.wall_ms = elapsed_ms(start);
        return r;
    }
    Instance inst = build_instance(problem, /*require_paths=*/true);
    const double bound = uv_min1 - problem.epsilon - kUtilityTol;
    auto choices = admissible_choices(inst, bound);

    SumSearch search(inst, choices);
    // The stage-1 witness stays admissible under the epsilon bound; seeding
    // it lets the bound prune from the start.
    FeasibilitySearch seed(inst, uv_min1);
    if (seed.run()) {
        search.seed(state_to_assignment(inst, seed.st));
    }
    search.dfs(0);
    if (!search.best) {
        throw InfeasibleError("infeasible: stage 2 found no admissible assignment",
                              {"utility bound " + std::to_string(bound)});
    }
    SolverStats stats;
    stats.nodes_explored = search.nodes + seed.nodes;
    stats.wall_ms = elapsed_ms(start);
    return make_result(problem, *search.best, uv_min1, stats, /*optimal=*/true);
}

AllocationResult solve(const AllocationProblem& problem) {
    const auto start = Clock::now();
    Stage1Result s1 = solve_stage1(problem);
    AllocationResult r = solve_stage2(problem, s1.uv_min1);
    r.stats.nodes_explored += s1.stats.nodes_explored;
    r.stats.wall_ms = elapsed_ms(start);
    return r;
}

AllocationResult brute_force_oracle(const AllocationProblem& problem) {
    const auto start = Clock::now();
    if (problem.apps.empty()) {
        AllocationResult r = empty_result(problem);
        r.stats.wall_ms = elapsed_ms(start);
        return r;
    }
    Instance inst = build_instance(problem, /*require_paths=*/true);

    double space = 1.0;
    for (std::size_t a = 0; a < problem.apps.size(); ++a) {
        const auto& grid = *problem.apps[a].grid;
        space *= static_cast<double>(grid.tp_count()) * static_cast<double>(grid.d_count()) *
                 static_cast<double>(inst.apps[a].paths.size());
        if (space > kOracleBudget) break;
    }
    if (space > kOracleBudget) {
        std::ostringstream os;
        os << "brute_force_oracle: search space " << space << " exceeds budget " << kOracleBudget;
        throw std::length_error(os.str());
    }

    struct Slot {
        std::size_t tp, d;
        int path;
    };
    std::vector<std::vector<Slot>> options(problem.apps.size());
    for (std::size_t a = 0; a < problem.apps.size(); ++a) {
        const auto& grid = *problem.apps[a].grid;
        for (std::size_t tp = 0; tp < grid.tp_count(); ++tp) {
            for (std::size_t d = 0; d < grid.d_count(); ++d) {
                for (int p = 0; p < static_cast<int>(inst.apps[a].paths.size()); ++p) {
                    options[a].push_back({tp, d, p});
                }
            }
        }
    }

    auto type_equal_ok = [&](const Assignment& as) {
        if (!problem.per_type_equal) return true;
        std::vector<std::pair<std::size_t, std::size_t>> pick(inst.group_count,
                                                              {kNoChoice, kNoChoice});
        for (std::size_t a = 0; a < as.choices.size(); ++a) {
            auto& slot = pick[inst.group[a]];
            if (slot.first == kNoChoice) {
                slot = {as.choices[a].tp_index, as.choices[a].d_index};
            } else if (slot.first != as.choices[a].tp_index ||
                       slot.second != as.choices[a].d_index) {
                return false;
            }
        }
        return true;
    };

    auto for_each_combo = [&](auto&& visit) {
        std::vector<std::size_t> idx(problem.apps.size(), 0);
        Assignment as;
        as.choices.resize(problem.apps.size());
        while (true) {
            for (std::size_t a = 0; a < problem.apps.size(); ++a) {
                const Slot& s = options[a][idx[a]];
                as.choices[a].tp_index = s.tp;
                as.choices[a].d_index = s.d;
                as.choices[a].path = inst.apps[a].paths[static_cast<std::size_t>(s.path)];
            }
            visit(as);
            std::size_t a = 0;
            while (a < idx.size()) {
                if (++idx[a] < options[a].size()) break;
                idx[a] = 0;
                ++a;
            }
            if (a == idx.size()) break;
        }
    };

    // Stage 1: the best achievable minimum utility.
    double uv_min1 = -std::numeric_limits<double>::infinity();
    std::uint64_t combos = 0;
    for_each_combo([&](const Assignment& as) {
        ++combos;
        if (!type_equal_ok(as)) return;
        EvalReport er = evaluate(problem, as);
        if (er.feasible) uv_min1 = std::max(uv_min1, er.min_utility);
    });
    if (!std::isfinite(uv_min1)) {
        throw InfeasibleError("infeasible: exhaustive search found no feasible assignment",
                              {"no feasible combination"});
    }

    // Stage 2 under the epsilon bound, identical tie-break order.
    const double bound = uv_min1 - problem.epsilon - kUtilityTol;
    std::optional<Assignment> best;
    EvalReport best_eval;
    for_each_combo([&](const Assignment& as) {
        if (!type_equal_ok(as)) return;
        EvalReport er = evaluate(problem, as);
        if (!er.feasible || er.min_utility < bound) return;
        if (!best || assignment_better(problem, er, as, best_eval, *best)) {
            best = as;
            best_eval = std::move(er);
        }
    });

    SolverStats stats;
    stats.nodes_explored = combos * 2;
    stats.wall_ms = elapsed_ms(start);
    return make_result(problem, *best, uv_min1, stats, /*optimal=*/true);
}

AllocationResult solve_heuristic(const AllocationProblem& problem) {
    const auto start = Clock::now();
    if (problem.apps.empty()) {
        AllocationResult r = empty_result(problem);
        r.optimal = false;
        r.stats.wall_ms = elapsed_ms(start);
        return r;
    }
    Instance inst = build_instance(problem, /*require_paths=*/true);
    const std::vector<double> values = candidate_min_values(problem);

    // Greedy packer: shortest candidate path that fits, minimum grid point
    // reaching the target, loosest delay budget.
    auto greedy = [&](double target) -> std::optional<SearchState> {
        SearchState st(inst);
        for (std::size_t pos = 0; pos < inst.order.size(); ++pos) {
            const std::size_t a = inst.order[pos];
            const auto& grid = *problem.apps[a].grid;
            const int g = inst.group[a];
            const bool locked = problem.per_type_equal && st.group_tp[g] != kNoChoice;

            std::size_t tp = kNoChoice, d = kNoChoice;
            if (locked) {
                tp = st.group_tp[g];
                d = st.group_d[g];
                if (tp >= grid.tp_count() || d >= grid.d_count() ||
                    grid.values[tp][d] < target) {
                    return std::nullopt;
                }
            } else {
                for (std::size_t t = 0; t < grid.tp_count() && tp == kNoChoice; ++t) {
                    for (std::size_t cand = grid.d_count(); cand-- > 0;) {
                        if (grid.values[t][cand] >= target) {
                            tp = t;
                            d = cand;
                            break;
                        }
                    }
                }
                if (tp == kNoChoice) return std::nullopt;
            }

            const double tp_kbps = grid.tp_levels_kbps[tp];
            bool placed = false;
            for (std::size_t p = 0; p < inst.apps[a].paths.size() && !placed; ++p) {
                const auto& links = inst.apps[a].path_links[p];
                if (!capacity_fits(inst, st.usage, links, tp_kbps)) continue;
                for (int l : links) st.usage[l] += tp_kbps;
                st.chosen[a] = {tp, d, static_cast<int>(p)};
                st.placed[a] = true;
                if (placed_delays_ok(inst, st)) {
                    placed = true;
                    if (problem.per_type_equal && !locked) {
                        st.group_tp[g] = tp;
                        st.group_d[g] = d;
                    }
                } else {
                    st.placed[a] = false;
                    for (int l : links) st.usage[l] -= tp_kbps;
                }
            }
            if (!placed) return std::nullopt;
        }
        if (!evaluate(problem, state_to_assignment(inst, st)).feasible) return std::nullopt;
        return st;
    };

    if (!greedy(values.front())) {
        throw InfeasibleError("infeasible: greedy packer failed at the minimum grid points",
                              {"greedy placement failed"});
    }
    std::size_t lo = 0, hi = values.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo + 1) / 2;
        if (greedy(values[mid])) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    const double target = values[lo];
    SearchState st = *greedy(target);
    Assignment current = state_to_assignment(inst, st);
    const double bound = target - problem.epsilon - kUtilityTol;

    // Single-move sum improvement: per type group (per app when types are
    // free), try the admissible grid upgrades on the fixed paths.
    std::vector<std::vector<std::size_t>> groups(problem.per_type_equal ? inst.group_count
                                                                        : problem.apps.size());
    for (std::size_t idx : inst.id_order) {
        groups[problem.per_type_equal ? static_cast<std::size_t>(inst.group[idx]) : idx]
            .push_back(idx);
    }

    EvalReport cur_eval = evaluate(problem, current);
    bool improved = true;
    int sweeps = 0;
    while (improved && sweeps++ < 100) {
        improved = false;
        for (const auto& members : groups) {
            if (members.empty()) continue;
            const auto& grid = *problem.apps[members.front()].grid;
            Assignment best_alt = current;
            EvalReport best_alt_eval = cur_eval;
            for (std::size_t tp = 0; tp < grid.tp_count(); ++tp) {
                for (std::size_t d = 0; d < grid.d_count(); ++d) {
                    if (grid.values[tp][d] < bound) continue;
                    Assignment alt = current;
                    for (std::size_t m : members) {
                        alt.choices[m].tp_index = tp;
                        alt.choices[m].d_index = d;
                    }
                    EvalReport er = evaluate(problem, alt);
                    if (!er.feasible) continue;
                    if (er.utility_sum > best_alt_eval.utility_sum + kUtilityTol ||
                        (er.utility_sum > best_alt_eval.utility_sum - kUtilityTol &&
                         er.total_tp_kbps < best_alt_eval.total_tp_kbps - kTpTol)) {
                        best_alt = std::move(alt);
                        best_alt_eval = std::move(er);
                    }
                }
            }
            if (best_alt_eval.utility_sum > cur_eval.utility_sum + kUtilityTol) {
                current = std::move(best_alt);
                cur_eval = std::move(best_alt_eval);
                improved = true;
            }
        }
    }

    SolverStats stats;
    stats.wall_ms = elapsed_ms(start);
    AllocationResult r = make_result(problem, current, target, stats, /*optimal=*/false);
    return r;
}

}  // namespace fairpace
