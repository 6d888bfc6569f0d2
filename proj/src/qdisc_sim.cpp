#include "fairpace/qdisc_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fairpace/metrics.hpp"

namespace fairpace {

namespace {

constexpr double kUsPerMs = 1000.0;

double serialize_us(double bytes, double rate_kbps) { return bytes * 8000.0 / rate_kbps; }

void check_config(const SimConfig& cfg) {
    if (!(cfg.bottleneck_capacity_kbps > 0.0)) {
        throw std::invalid_argument("sim: bottleneck capacity must be > 0");
    }
    if (!(cfg.buffer_bytes > 0.0)) throw std::invalid_argument("sim: buffer must be > 0");
    if (!(cfg.duration_s > cfg.warmup_s) || cfg.warmup_s < 0.0) {
        throw std::invalid_argument("sim: need duration > warmup >= 0");
    }
    std::set<std::string> ids;
    for (const auto& src : cfg.sources) {
        if (!ids.insert(src.flow_id).second) {
            throw std::invalid_argument("sim: duplicate flow id " + src.flow_id);
        }
        if (src.pkt_len_bytes < 64 || src.pkt_len_bytes > 9000) {
            throw std::invalid_argument("sim: flow " + src.flow_id +
                                        ": pkt_len outside [64, 9000]");
        }
        if (src.start_jitter_ms < 0.0) {
            throw std::invalid_argument("sim: flow " + src.flow_id + ": negative start jitter");
        }
        std::visit(
            [&](const auto& d) {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PacedSource> || std::is_same_v<T, CbrSource>) {
                    if (!(d.rate_kbps > 0.0)) {
                        throw std::invalid_argument("sim: flow " + src.flow_id + ": rate <= 0");
                    }
                } else if constexpr (std::is_same_v<T, PolicedSource> ||
                                     std::is_same_v<T, ShapedSource>) {
                    if (!(d.rate_kbps > 0.0) || !(d.bucket_bytes > 0.0)) {
                        throw std::invalid_argument("sim: flow " + src.flow_id +
                                                    ": bad policer/shaper parameters");
                    }
                } else if constexpr (std::is_same_v<T, AimdSource>) {
                    if (d.mss_bytes < 64 || d.mss_bytes > 9000 || d.initial_window_mss < 1.0) {
                        throw std::invalid_argument("sim: flow " + src.flow_id +
                                                    ": bad aimd parameters");
                    }
                }
                if constexpr (std::is_same_v<T, CbrSource>) {
                    if (d.pkt_bytes < 1 || d.pkt_bytes > 9000) {
                        throw std::invalid_argument("sim: flow " + src.flow_id +
                                                    ": bad cbr packet size");
                    }
                }
            },
            src.discipline);
    }
}

enum class EventKind { Emit, ShaperRelease, ServiceDone, Ack, Loss };

struct Event {
    SimTime at = 0;
    int flow = -1;  // -1 orders link events before flow events at a tie
    std::uint64_t seq = 0;
    EventKind kind = EventKind::Emit;
    SimTime aux = 0;  // Ack: emit time of the acked packet
};

struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
        if (a.at != b.at) return a.at > b.at;
        if (a.flow != b.flow) return a.flow > b.flow;
        return a.seq > b.seq;
    }
};

struct Packet {
    int flow = 0;
    int bytes = 0;
    SimTime emit = 0;     // application send time
    SimTime arrival = 0;  // arrival at the bottleneck queue
};

struct FlowRuntime {
    const SourceSpec* spec = nullptr;
    SimTime start = 0;
    double emit_clock_us = 0.0;  // exact emission schedule
    double emit_gap_us = 0.0;
    int pkt_bytes = 1500;

    PolicerDiscState policer;
    ShaperDiscState shaper;
    std::deque<Packet> shaper_queue;
    bool shaper_release_pending = false;

    // aimd
    AimdState aimd;
    double outstanding_bytes = 0.0;
    double srtt_us = 0.0;
    SimTime recovery_until = -1;

    // accounting
    std::uint64_t sent = 0, delivered = 0, dropped = 0;
    std::uint64_t delivered_bytes = 0;
    std::vector<double> delays_ms;
    double jitter_acc = 0.0;
    std::uint64_t jitter_n = 0;
    double last_delay_ms = -1.0;

    std::vector<std::uint64_t> epoch_bytes;
    std::vector<double> epoch_delay_sum;
    std::vector<std::uint64_t> epoch_delay_n;
    std::vector<std::uint64_t> epoch_sent, epoch_dropped;
};

class Simulator {
public:
    explicit Simulator(const SimConfig& cfg) : cfg_(cfg) {
        check_config(cfg);
        warmup_us_ = static_cast<SimTime>(std::llround(cfg.warmup_s * 1e6));
        end_us_ = static_cast<SimTime>(std::llround(cfg.duration_s * 1e6));
        window_us_ = end_us_ - warmup_us_;
        epoch_us_ = static_cast<SimTime>(std::llround(std::max(cfg.epoch_s, 0.0) * 1e6));
        if (epoch_us_ <= 0 || epoch_us_ > window_us_) epoch_us_ = window_us_;
        n_epochs_ = static_cast<std::size_t>(window_us_ / epoch_us_);
        if (n_epochs_ == 0) n_epochs_ = 1;
        if (!cfg.trace_path.empty()) {
            trace_.open(cfg.trace_path);
            if (!trace_) throw std::runtime_error("sim: cannot open trace file " + cfg.trace_path);
            trace_ << "time_us,flow_id,event,queue_bytes\n";
        }
        base_us_ = cfg.base_delay_ms * kUsPerMs;
        setup_flows();
    }

    SimMetrics run_to_completion() {
        while (!events_.empty()) {
            Event ev = events_.top();
            events_.pop();
            now_ = ev.at;
            dispatch(ev);
        }
        return collect();
    }

private:
    const SimConfig& cfg_;
    SimTime warmup_us_ = 0, end_us_ = 0, window_us_ = 0, epoch_us_ = 0;
    std::size_t n_epochs_ = 1;
    double base_us_ = 0.0;
    SimTime now_ = 0;
    std::uint64_t seq_ = 0;

    std::vector<FlowRuntime> flows_;
    std::priority_queue<Event, std::vector<Event>, EventOrder> events_;

    // bottleneck state
    std::deque<Packet> queue_;
    std::uint64_t queue_bytes_ = 0;
    bool busy_ = false;
    Packet in_service_;
    double service_clock_us_ = 0.0;  // exact completion time of the packet in service
    double service_start_us_ = 0.0;

    std::uint64_t link_drops_ = 0;
    std::uint64_t max_queue_bytes_ = 0, max_queue_pkts_ = 0;
    std::vector<double> queue_waits_ms_;
    double busy_in_window_us_ = 0.0;

    std::ofstream trace_;

    void push_event(SimTime at, int flow, EventKind kind, SimTime aux = 0) {
        events_.push(Event{at, flow, seq_++, kind, aux});
    }

    void trace_event(SimTime at, int flow, const char* what) {
        if (!trace_.is_open()) return;
        trace_ << at << "," << flows_[static_cast<std::size_t>(flow)].spec->flow_id << "," << what
               << "," << queue_bytes_ << "\n";
    }

    void setup_flows() {
        std::mt19937_64 rng(cfg_.rng_seed);
        flows_.resize(cfg_.sources.size());
        for (std::size_t i = 0; i < cfg_.sources.size(); ++i) {
            FlowRuntime& f = flows_[i];
            f.spec = &cfg_.sources[i];
            const SimTime jitter_span =
                static_cast<SimTime>(std::llround(f.spec->start_jitter_ms * kUsPerMs));
            f.start = jitter_span > 0 ? static_cast<SimTime>(rng() % static_cast<std::uint64_t>(
                                                                 jitter_span + 1))
                                      : 0;
            f.epoch_bytes.assign(n_epochs_, 0);
            f.epoch_delay_sum.assign(n_epochs_, 0.0);
            f.epoch_delay_n.assign(n_epochs_, 0);
            f.epoch_sent.assign(n_epochs_, 0);
            f.epoch_dropped.assign(n_epochs_, 0);

            const int fi = static_cast<int>(i);
            std::visit(
                [&](const auto& d) {
                    using T = std::decay_t<decltype(d)>;
                    if constexpr (std::is_same_v<T, PacedSource>) {
                        f.pkt_bytes = f.spec->pkt_len_bytes;
                        f.emit_gap_us = serialize_us(f.pkt_bytes, d.rate_kbps);
                        f.emit_clock_us = static_cast<double>(f.start);
                        push_event(f.start, fi, EventKind::Emit);
                    } else if constexpr (std::is_same_v<T, CbrSource>) {
                        f.pkt_bytes = d.pkt_bytes;
                        f.emit_gap_us = serialize_us(f.pkt_bytes, d.rate_kbps);
                        f.emit_clock_us = static_cast<double>(f.start);
                        push_event(f.start, fi, EventKind::Emit);
                    } else if constexpr (std::is_same_v<T, PolicedSource>) {
                        f.pkt_bytes = f.spec->pkt_len_bytes;
                        f.emit_gap_us =
                            serialize_us(f.pkt_bytes, d.rate_kbps * d.offered_factor);
                        f.emit_clock_us = static_cast<double>(f.start);
                        f.policer.bucket = {d.rate_kbps, d.bucket_bytes, d.bucket_bytes, f.start};
                        push_event(f.start, fi, EventKind::Emit);
                    } else if constexpr (std::is_same_v<T, ShapedSource>) {
                        f.pkt_bytes = f.spec->pkt_len_bytes;
                        f.emit_gap_us =
                            serialize_us(f.pkt_bytes, d.rate_kbps * d.offered_factor);
                        f.emit_clock_us = static_cast<double>(f.start);
                        f.shaper.bucket = {d.rate_kbps, d.bucket_bytes, d.bucket_bytes, f.start};
                        f.shaper.queue_capacity_bytes = d.queue_bytes;
                        push_event(f.start, fi, EventKind::Emit);
                    } else if constexpr (std::is_same_v<T, AimdSource>) {
                        f.pkt_bytes = d.mss_bytes;
                        f.aimd.mss_bytes = d.mss_bytes;
                        f.aimd.window_bytes = d.initial_window_mss * d.mss_bytes;
                        f.aimd.ssthresh_bytes = 0.0;  // slow start until first loss
                        f.srtt_us = 2.0 * base_us_ +
                                    serialize_us(d.mss_bytes, cfg_.bottleneck_capacity_kbps);
                        push_event(f.start, fi, EventKind::Emit);
                    }
                },
                f.spec->discipline);
        }
    }

    bool in_window(SimTime emit) const { return emit >= warmup_us_ && emit < end_us_; }

    std::size_t epoch_of(SimTime emit) const {
        return static_cast<std::size_t>((emit - warmup_us_) / epoch_us_);
    }

    void count_sent(FlowRuntime& f, SimTime emit) {
        if (!in_window(emit)) return;
        ++f.sent;
        const std::size_t e = epoch_of(emit);
        if (e < n_epochs_) ++f.epoch_sent[e];
    }

    void count_drop(FlowRuntime& f, SimTime emit) {
        if (!in_window(emit)) return;
        ++f.dropped;
        const std::size_t e = epoch_of(emit);
        if (e < n_epochs_) ++f.epoch_dropped[e];
    }

    void deliver(const Packet& pkt, double done_exact_us) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(pkt.flow)];
        const double delay_ms = (done_exact_us + base_us_ - static_cast<double>(pkt.emit)) / kUsPerMs;
        if (std::holds_alternative<AimdSource>(f.spec->discipline)) {
            push_event(static_cast<SimTime>(std::llround(done_exact_us + 2.0 * base_us_)),
                       pkt.flow, EventKind::Ack, pkt.emit);
        }
        if (!in_window(pkt.emit)) return;
        ++f.delivered;
        f.delivered_bytes += static_cast<std::uint64_t>(pkt.bytes);
        f.delays_ms.push_back(delay_ms);
        if (f.last_delay_ms >= 0.0) {
            f.jitter_acc += std::abs(delay_ms - f.last_delay_ms);
            ++f.jitter_n;
        }
        f.last_delay_ms = delay_ms;
        const std::size_t e = epoch_of(pkt.emit);
        if (e < n_epochs_) {
            f.epoch_bytes[e] += static_cast<std::uint64_t>(pkt.bytes);
            f.epoch_delay_sum[e] += delay_ms;
            ++f.epoch_delay_n[e];
        }
    }

    void start_service(Packet pkt, double start_exact_us) {
        in_service_ = pkt;
        busy_ = true;
        service_start_us_ = start_exact_us;
        service_clock_us_ = start_exact_us + serialize_us(pkt.bytes, cfg_.bottleneck_capacity_kbps);
        if (pkt.arrival >= warmup_us_ && pkt.arrival < end_us_) {
            queue_waits_ms_.push_back((start_exact_us - static_cast<double>(pkt.arrival)) /
                                      kUsPerMs);
        }
        push_event(static_cast<SimTime>(std::llround(service_clock_us_)), -1,
                   EventKind::ServiceDone);
    }

    void link_arrival(Packet pkt) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(pkt.flow)];
        if (!busy_ && queue_.empty()) {
            trace_event(pkt.arrival, pkt.flow, "enq");
            start_service(pkt, static_cast<double>(pkt.arrival));
            return;
        }
        if (queue_bytes_ + static_cast<std::uint64_t>(pkt.bytes) <=
            static_cast<std::uint64_t>(cfg_.buffer_bytes)) {
            queue_.push_back(pkt);
            queue_bytes_ += static_cast<std::uint64_t>(pkt.bytes);
            if (pkt.arrival >= warmup_us_ && pkt.arrival < end_us_) {
                max_queue_bytes_ = std::max(max_queue_bytes_, queue_bytes_);
                max_queue_pkts_ = std::max(max_queue_pkts_, queue_.size() + 1);  // + in service
            }
            trace_event(pkt.arrival, pkt.flow, "enq");
        } else {
            trace_event(pkt.arrival, pkt.flow, "drop");
            if (in_window(pkt.emit)) ++link_drops_;
            count_drop(f, pkt.emit);
            if (std::holds_alternative<AimdSource>(f.spec->discipline)) {
                push_event(now_ + static_cast<SimTime>(std::llround(2.0 * base_us_)), pkt.flow,
                           EventKind::Loss);
            }
        }
    }

    void aimd_try_send(int flow_idx) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(flow_idx)];
        if (now_ >= end_us_) return;
        const double mss = static_cast<double>(f.aimd.mss_bytes);
        while (f.outstanding_bytes + mss <= f.aimd.window_bytes + 1e-9) {
            f.outstanding_bytes += mss;
            count_sent(f, now_);
            link_arrival(Packet{flow_idx, f.aimd.mss_bytes, now_, now_});
        }
    }

    void dispatch(const Event& ev) {
        switch (ev.kind) {
            case EventKind::Emit: handle_emit(ev); break;
            case EventKind::ShaperRelease: handle_shaper_release(ev); break;
            case EventKind::ServiceDone: handle_service_done(); break;
            case EventKind::Ack: handle_ack(ev); break;
            case EventKind::Loss: handle_loss(ev); break;
        }
    }

    void schedule_next_emit(int flow_idx) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(flow_idx)];
        f.emit_clock_us += f.emit_gap_us;
        const SimTime next = static_cast<SimTime>(std::llround(f.emit_clock_us));
        if (next < end_us_) push_event(next, flow_idx, EventKind::Emit);
    }

    void handle_emit(const Event& ev) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(ev.flow)];
        std::visit(
            [&](const auto& d) {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PacedSource> || std::is_same_v<T, CbrSource>) {
                    count_sent(f, now_);
                    link_arrival(Packet{ev.flow, f.pkt_bytes, now_, now_});
                    schedule_next_emit(ev.flow);
                } else if constexpr (std::is_same_v<T, PolicedSource>) {
                    count_sent(f, now_);
                    auto dec = discipline_admit(f.policer, f.pkt_bytes, now_);
                    if (dec.action == AdmitDecision::Action::Transmit) {
                        link_arrival(Packet{ev.flow, f.pkt_bytes, now_, now_});
                    } else {
                        count_drop(f, now_);
                    }
                    schedule_next_emit(ev.flow);
                } else if constexpr (std::is_same_v<T, ShapedSource>) {
                    count_sent(f, now_);
                    auto dec = discipline_admit(f.shaper, f.pkt_bytes, now_);
                    if (dec.action == AdmitDecision::Action::Transmit) {
                        link_arrival(Packet{ev.flow, f.pkt_bytes, now_, now_});
                    } else if (dec.action == AdmitDecision::Action::Enqueue) {
                        f.shaper_queue.push_back(Packet{ev.flow, f.pkt_bytes, now_, now_});
                        if (!f.shaper_release_pending) schedule_shaper_release(ev.flow);
                    } else {
                        count_drop(f, now_);
                    }
                    schedule_next_emit(ev.flow);
                } else if constexpr (std::is_same_v<T, AimdSource>) {
                    aimd_try_send(ev.flow);
                }
            },
            f.spec->discipline);
    }

    void schedule_shaper_release(int flow_idx) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(flow_idx)];
        if (f.shaper_queue.empty()) return;
        f.shaper.bucket.refill(now_);
        const double deficit =
            static_cast<double>(f.shaper_queue.front().bytes) - f.shaper.bucket.tokens_bytes;
        const double wait_us = deficit <= 0.0 ? 0.0 : serialize_us(deficit, f.shaper.bucket.rate_kbps);
        f.shaper_release_pending = true;
        push_event(now_ + static_cast<SimTime>(std::llround(std::max(wait_us, 1.0))), flow_idx,
                   EventKind::ShaperRelease);
    }

    void handle_shaper_release(const Event& ev) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(ev.flow)];
        f.shaper_release_pending = false;
        if (f.shaper_queue.empty()) return;
        f.shaper.bucket.refill(now_);
        Packet head = f.shaper_queue.front();
        if (f.shaper.bucket.tokens_bytes + 1e-9 >= static_cast<double>(head.bytes)) {
            f.shaper.bucket.tokens_bytes -= static_cast<double>(head.bytes);
            f.shaper.queued_bytes -= static_cast<double>(head.bytes);
            f.shaper_queue.pop_front();
            head.arrival = now_;
            link_arrival(head);
        }
        if (!f.shaper_queue.empty()) schedule_shaper_release(ev.flow);
    }

    void handle_service_done() {
        const Packet done = in_service_;
        const double done_exact = service_clock_us_;
        const double start_w = std::max(service_start_us_, static_cast<double>(warmup_us_));
        const double end_w = std::min(done_exact, static_cast<double>(end_us_));
        if (end_w > start_w) busy_in_window_us_ += end_w - start_w;

        trace_event(now_, done.flow, "deq");
        deliver(done, done_exact);

        if (!queue_.empty()) {
            Packet next = queue_.front();
            queue_.pop_front();
            queue_bytes_ -= static_cast<std::uint64_t>(next.bytes);
            start_service(next, done_exact);
        } else {
            busy_ = false;
        }
    }

    void handle_ack(const Event& ev) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(ev.flow)];
        f.outstanding_bytes =
            std::max(0.0, f.outstanding_bytes - static_cast<double>(f.aimd.mss_bytes));
        const double rtt_sample = static_cast<double>(now_ - ev.aux);
        f.srtt_us = f.srtt_us <= 0.0 ? rtt_sample : 0.875 * f.srtt_us + 0.125 * rtt_sample;
        f.aimd = aimd_step(f.aimd, AimdEvent::Ack);
        aimd_try_send(ev.flow);
    }

    void handle_loss(const Event& ev) {
        FlowRuntime& f = flows_[static_cast<std::size_t>(ev.flow)];
        f.outstanding_bytes =
            std::max(0.0, f.outstanding_bytes - static_cast<double>(f.aimd.mss_bytes));
        if (now_ >= f.recovery_until) {
            f.aimd = aimd_step(f.aimd, AimdEvent::Loss);
            f.recovery_until = now_ + static_cast<SimTime>(std::llround(f.srtt_us));
        }
        aimd_try_send(ev.flow);
    }

    SimMetrics collect() {
        SimMetrics m;
        m.measured_window_s = static_cast<double>(window_us_) / 1e6;
        for (auto& f : flows_) {
            FlowMetrics fm;
            fm.flow_id = f.spec->flow_id;
            fm.sent = f.sent;
            fm.delivered = f.delivered;
            fm.dropped = f.dropped;
            fm.loss_fraction =
                f.sent == 0 ? 0.0 : static_cast<double>(f.dropped) / static_cast<double>(f.sent);
            fm.throughput_kbps =
                static_cast<double>(f.delivered_bytes) * 8.0 / (m.measured_window_s * 1000.0);
            fm.mean_delay_ms = f.delays_ms.empty() ? 0.0 : mean(f.delays_ms);
            fm.jitter_ms = f.jitter_n == 0 ? 0.0 : f.jitter_acc / static_cast<double>(f.jitter_n);
            const double epoch_s = static_cast<double>(epoch_us_) / 1e6;
            for (std::size_t e = 0; e < n_epochs_; ++e) {
                fm.epoch_throughput_kbps.push_back(static_cast<double>(f.epoch_bytes[e]) * 8.0 /
                                                   (epoch_s * 1000.0));
                fm.epoch_mean_delay_ms.push_back(
                    f.epoch_delay_n[e] == 0
                        ? 0.0
                        : f.epoch_delay_sum[e] / static_cast<double>(f.epoch_delay_n[e]));
                fm.epoch_loss_fraction.push_back(
                    f.epoch_sent[e] == 0 ? 0.0
                                         : static_cast<double>(f.epoch_dropped[e]) /
                                               static_cast<double>(f.epoch_sent[e]));
            }
            fm.delay_samples_ms = std::move(f.delays_ms);
            m.flows.emplace(fm.flow_id, std::move(fm));
        }
        m.link.drops = link_drops_;
        m.link.max_queue_bytes = max_queue_bytes_;
        m.link.max_queue_pkts = max_queue_pkts_;
        m.link.utilization =
            std::min(1.0, busy_in_window_us_ / static_cast<double>(window_us_));
        if (!queue_waits_ms_.empty()) {
            m.link.mean_queue_delay_ms = mean(queue_waits_ms_);
            m.link.p95_queue_delay_ms = percentile(queue_waits_ms_, 95.0);
            m.link.max_queue_delay_ms = *std::max_element(queue_waits_ms_.begin(),
                                                          queue_waits_ms_.end());
        }
        return m;
    }
};

}  // namespace

SimTime next_departure(SimTime now, double pkt_len_bytes, double target_rate_kbps) {
    if (!(target_rate_kbps > 0.0)) {
        throw std::invalid_argument("next_departure: rate must be > 0");
    }
    if (pkt_len_bytes < 0.0) {
        throw std::invalid_argument("next_departure: negative packet length");
    }
    return now + static_cast<SimTime>(std::llround(serialize_us(pkt_len_bytes, target_rate_kbps)));
}

AimdState aimd_step(AimdState state, AimdEvent event) {
    const double mss = static_cast<double>(state.mss_bytes);
    if (event == AimdEvent::Ack) {
        if (state.ssthresh_bytes <= 0.0 || state.window_bytes < state.ssthresh_bytes) {
            state.window_bytes += mss;  // slow start: doubles per RTT
        } else {
            state.window_bytes += mss * mss / state.window_bytes;  // 1 mss per RTT
        }
    } else {
        state.window_bytes = std::max(mss, state.window_bytes / 2.0);
        state.ssthresh_bytes = state.window_bytes;
    }
    return state;
}

void TokenBucketState::refill(SimTime now) {
    if (now <= last_refill) return;
    const double dt_us = static_cast<double>(now - last_refill);
    tokens_bytes = std::min(bucket_bytes, tokens_bytes + rate_kbps * dt_us / 8000.0);
    last_refill = now;
}

AdmitDecision discipline_admit(PolicerDiscState& state, int pkt_bytes, SimTime now) {
    state.bucket.refill(now);
    if (state.bucket.tokens_bytes + 1e-9 >= static_cast<double>(pkt_bytes)) {
        state.bucket.tokens_bytes -= static_cast<double>(pkt_bytes);
        return {AdmitDecision::Action::Transmit, now};
    }
    return {AdmitDecision::Action::Drop, now};
}

AdmitDecision discipline_admit(ShaperDiscState& state, int pkt_bytes, SimTime now) {
    state.bucket.refill(now);
    if (state.bucket.tokens_bytes + 1e-9 >= static_cast<double>(pkt_bytes)) {
        state.bucket.tokens_bytes -= static_cast<double>(pkt_bytes);
        return {AdmitDecision::Action::Transmit, now};
    }
    if (state.queued_bytes + static_cast<double>(pkt_bytes) <= state.queue_capacity_bytes) {
        state.queued_bytes += static_cast<double>(pkt_bytes);
        return {AdmitDecision::Action::Enqueue, now};
    }
    return {AdmitDecision::Action::Drop, now};
}

AdmitDecision discipline_admit(PacerDiscState& state, int pkt_bytes, SimTime now) {
    const SimTime at = std::max(now, state.next_allowed);
    state.next_allowed = next_departure(at, pkt_bytes, state.rate_kbps);
    return {AdmitDecision::Action::Transmit, at};
}

SimMetrics run(const SimConfig& config) {
    Simulator sim(config);
    return sim.run_to_completion();
}

SimConfig allocation_to_sim(const AllocationResult& result, const SimConfig& templ) {
    SimConfig out = templ;
    out.sources.clear();

    std::vector<std::size_t> order(result.app_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return result.app_ids[a] < result.app_ids[b];
    });

    const bool filter_by_bottleneck = !templ.bottleneck_link.first.empty();
    for (std::size_t i : order) {
        const auto& path = result.assignment.choices[i].path;
        bool crosses = !filter_by_bottleneck;
        for (const auto& lid : path_links(path)) {
            if (!templ.known_links.empty() && !templ.known_links.count(lid)) {
                throw std::invalid_argument("allocation_to_sim: app " + result.app_ids[i] +
                                            " routed over unknown link " + lid.first + "->" +
                                            lid.second);
            }
            if (filter_by_bottleneck && lid == templ.bottleneck_link) crosses = true;
        }
        if (!crosses) continue;
        SourceSpec spec;
        spec.flow_id = result.app_ids[i];
        spec.discipline = PacedSource{result.app_tp_kbps[i]};
        spec.start_jitter_ms = templ.start_jitter_ms;
        out.sources.push_back(std::move(spec));
    }
    return out;
}

}  // namespace fairpace
