#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "fairpace/allocation.hpp"

namespace fairpace {

using SimTime = std::int64_t;  // microseconds

// --- Source disciplines -------------------------------------------------

struct PacedSource {
    double rate_kbps = 0.0;
};

struct PolicedSource {
    double rate_kbps = 0.0;
    double bucket_bytes = 15000.0;
    double offered_factor = 2.0;  // greedy application overdrives the bucket
};

struct ShapedSource {
    double rate_kbps = 0.0;
    double bucket_bytes = 15000.0;
    double queue_bytes = 60000.0;
    double offered_factor = 2.0;
};

struct AimdSource {
    int mss_bytes = 1500;
    double initial_window_mss = 2.0;
};

struct CbrSource {
    double rate_kbps = 0.0;
    int pkt_bytes = 1500;
};

using Discipline = std::variant<PacedSource, PolicedSource, ShapedSource, AimdSource, CbrSource>;

struct SourceSpec {
    std::string flow_id;
    Discipline discipline;
    int pkt_len_bytes = 1500;          // ignored by cbr (uses its own pkt_bytes)
    double start_jitter_ms = 1000.0;   // start offset drawn uniformly in [0, this]
};

struct SimConfig {
    double bottleneck_capacity_kbps = 100000.0;
    double buffer_bytes = 1000000.0;
    double base_delay_ms = 2.0;
    double duration_s = 60.0;
    double warmup_s = 5.0;
    std::uint64_t rng_seed = 1;
    std::vector<SourceSpec> sources;

    double epoch_s = 5.0;         // per-epoch KPI sampling inside the window
    double start_jitter_ms = 1000.0;  // applied to sources built from templates
    LinkId bottleneck_link{};     // which topology link this sim models
    std::set<LinkId> known_links; // topology links, for allocation_to_sim checks
    std::string trace_path;       // optional event trace CSV (empty = off)
};

// --- Metrics --------------------------------------------------------------

struct FlowMetrics {
    std::string flow_id;
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped = 0;
    double loss_fraction = 0.0;
    double throughput_kbps = 0.0;
    std::vector<double> delay_samples_ms;  // one-way, per delivered packet
    double mean_delay_ms = 0.0;
    double jitter_ms = 0.0;  // mean |delta| of consecutive one-way delays

    std::vector<double> epoch_throughput_kbps;
    std::vector<double> epoch_mean_delay_ms;
    std::vector<double> epoch_loss_fraction;
};

struct LinkMetrics {
    std::uint64_t max_queue_bytes = 0;
    std::uint64_t max_queue_pkts = 0;
    std::uint64_t drops = 0;
    double utilization = 0.0;
    double mean_queue_delay_ms = 0.0;
    double p95_queue_delay_ms = 0.0;
    double max_queue_delay_ms = 0.0;
};

struct SimMetrics {
    std::map<std::string, FlowMetrics> flows;
    LinkMetrics link;
    double measured_window_s = 0.0;
};

// --- Unit-level operations --------------------------------------------------

// now + pkt_len*8/target_rate on the microsecond clock.
SimTime next_departure(SimTime now, double pkt_len_bytes, double target_rate_kbps);

struct AimdState {
    double window_bytes = 0.0;
    double ssthresh_bytes = 0.0;  // <= 0 means "no threshold yet"
    int mss_bytes = 1500;
};

enum class AimdEvent { Ack, Loss };

// Ack: slow start below threshold (+mss per ack), else +mss^2/window.
// Loss: multiplicative decrease to max(mss, window/2).
AimdState aimd_step(AimdState state, AimdEvent event);

struct AdmitDecision {
    enum class Action { Transmit, Drop, Enqueue } action = Action::Transmit;
    SimTime transmit_at = 0;
};

struct TokenBucketState {
    double rate_kbps = 0.0;
    double bucket_bytes = 0.0;
    double tokens_bytes = 0.0;
    SimTime last_refill = 0;

    void refill(SimTime now);
};

struct PolicerDiscState {
    TokenBucketState bucket;
};

struct ShaperDiscState {
    TokenBucketState bucket;
    double queue_capacity_bytes = 0.0;
    double queued_bytes = 0.0;
};

struct PacerDiscState {
    double rate_kbps = 0.0;
    SimTime next_allowed = 0;
};

AdmitDecision discipline_admit(PolicerDiscState& state, int pkt_bytes, SimTime now);
AdmitDecision discipline_admit(ShaperDiscState& state, int pkt_bytes, SimTime now);
AdmitDecision discipline_admit(PacerDiscState& state, int pkt_bytes, SimTime now);

// --- Runs ---------------------------------------------------------------

SimMetrics run(const SimConfig& config);

// One paced source per application at its allocated rate, ordered by app id.
// Only applications routed across the template's bottleneck become sources.
SimConfig allocation_to_sim(const AllocationResult& result, const SimConfig& templ);

}  // namespace fairpace
