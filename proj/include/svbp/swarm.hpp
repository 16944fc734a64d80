// Decentralized execution harness: one worker thread per robot running the
// MPC loop against belief snapshots received from its peers, a lockstep
// round structure, and a post office injecting configurable delay and drops.
// Snapshots cross the transport as length-prefixed binary frames; a
// loopback-socket mode routes the same frames through a real local socket.
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <sys/socket.h>
#include <unistd.h>

#include "svbp/planning/mpc.hpp"
#include "svbp/rng.hpp"

namespace svbp {

struct DecodeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct WorkerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BeliefSnapshot {
    std::uint32_t robot_id = 0;
    std::uint64_t iteration = 0;
    Eigen::MatrixXd particles;  // N x d
    Eigen::VectorXd weights;
    double send_time = 0.0;  // local wall clock, not part of the wire format
};

// Wire format (little-endian throughout): u32 frame length (bytes after the
// prefix) | "SVBP" | u16 version | u32 robot id | u64 iteration | u32 N |
// u32 d | N*d f64 particles row-major | N f64 weights.
constexpr std::uint16_t kSnapshotVersion = 1;

namespace wire {

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
    const std::size_t at = out.size();
    out.resize(at + sizeof(T));
    std::memcpy(out.data() + at, &value, sizeof(T));
}

template <typename T>
T take(const std::uint8_t* data, std::size_t size, std::size_t& offset, const char* what) {
    if (offset + sizeof(T) > size)
        throw DecodeError(std::string("snapshot frame truncated reading ") + what +
                          " at offset " + std::to_string(offset));
    T value;
    std::memcpy(&value, data + offset, sizeof(T));
    offset += sizeof(T);
    return value;
}

}  // namespace wire

inline std::vector<std::uint8_t> encode_snapshot(const BeliefSnapshot& snap) {
    require(snap.particles.rows() == snap.weights.size(),
            "encode_snapshot: particle/weight count mismatch");
    if (!snap.particles.allFinite() || !snap.weights.allFinite())
        throw NumericError("encode_snapshot: non-finite values");
    std::vector<std::uint8_t> out;
    wire::put<std::uint32_t>(out, 0);  // length prefix patched below
    out.push_back('S');
    out.push_back('V');
    out.push_back('B');
    out.push_back('P');
    wire::put<std::uint16_t>(out, kSnapshotVersion);
    wire::put<std::uint32_t>(out, snap.robot_id);
    wire::put<std::uint64_t>(out, snap.iteration);
    const auto n = static_cast<std::uint32_t>(snap.particles.rows());
    const auto d = static_cast<std::uint32_t>(snap.particles.cols());
    wire::put<std::uint32_t>(out, n);
    wire::put<std::uint32_t>(out, d);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d; ++j) wire::put<double>(out, snap.particles(i, j));
    for (std::uint32_t i = 0; i < n; ++i) wire::put<double>(out, snap.weights(i));
    const auto length = static_cast<std::uint32_t>(out.size() - 4);
    std::memcpy(out.data(), &length, 4);
    return out;
}

inline BeliefSnapshot decode_snapshot(const std::uint8_t* data, std::size_t size) {
    std::size_t offset = 0;
    const auto length = wire::take<std::uint32_t>(data, size, offset, "length prefix");
    if (size - offset < length)
        throw DecodeError("snapshot frame truncated: payload needs " + std::to_string(length) +
                          " bytes, have " + std::to_string(size - offset));
    if (offset + 4 > size || std::memcmp(data + offset, "SVBP", 4) != 0)
        throw DecodeError("bad snapshot magic at offset " + std::to_string(offset));
    offset += 4;
    const auto version = wire::take<std::uint16_t>(data, size, offset, "version");
    if (version != kSnapshotVersion)
        throw DecodeError("unsupported snapshot version " + std::to_string(version));
    BeliefSnapshot snap;
    snap.robot_id = wire::take<std::uint32_t>(data, size, offset, "robot id");
    snap.iteration = wire::take<std::uint64_t>(data, size, offset, "iteration");
    const auto n = wire::take<std::uint32_t>(data, size, offset, "particle count");
    const auto d = wire::take<std::uint32_t>(data, size, offset, "particle dim");
    snap.particles.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d; ++j)
            snap.particles(i, j) = wire::take<double>(data, size, offset, "particles");
    snap.weights.resize(n);
    for (std::uint32_t i = 0; i < n; ++i)
        snap.weights(i) = wire::take<double>(data, size, offset, "weights");
    return snap;
}

inline BeliefSnapshot decode_snapshot(const std::vector<std::uint8_t>& bytes) {
    return decode_snapshot(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------

struct TransportConfig {
    enum class Mode { InProcessChannels, LoopbackSockets };
    Mode mode = Mode::InProcessChannels;
    double drop_probability = 0.0;   // per snapshot per receiver
    int latency_rounds_min = 0;      // delivery delay measured in rounds
    int latency_rounds_max = 0;
    std::uint64_t seed = 0;
};

struct StalenessStats {
    long snapshots_sent = 0;
    long snapshots_dropped = 0;
    long stale_reads = 0;  // rounds where a peer's stamp lagged the previous round
    std::uint64_t max_stamp_lag = 0;
};

struct SwarmResult {
    PlanRunLog log;
    StalenessStats stats;
};

namespace detail {

class Barrier {
public:
    explicit Barrier(int parties) : parties_(parties) {}

    // Returns false once the barrier is aborted; callers must bail out.
    bool arrive_and_wait() {
        std::unique_lock<std::mutex> lock(mutex_);
        if (aborted_) return false;
        const long gen = generation_;
        if (++waiting_ == parties_) {
            waiting_ = 0;
            ++generation_;
            cv_.notify_all();
        } else {
            cv_.wait(lock, [&] { return generation_ != gen || aborted_; });
            if (aborted_) return false;
        }
        return true;
    }

    void abort() {
        std::lock_guard<std::mutex> lock(mutex_);
        aborted_ = true;
        cv_.notify_all();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int parties_;
    int waiting_ = 0;
    long generation_ = 0;
    bool aborted_ = false;
};

// Loopback byte pipe: frames written by the coordinator round-trip through
// a connected local socket pair before delivery.
class LoopbackBus {
public:
    LoopbackBus() {
        int fds[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
            throw TransportError("loopback socket setup failed");
        write_fd_ = fds[0];
        read_fd_ = fds[1];
    }
    ~LoopbackBus() {
        if (write_fd_ >= 0) ::close(write_fd_);
        if (read_fd_ >= 0) ::close(read_fd_);
    }
    LoopbackBus(const LoopbackBus&) = delete;
    LoopbackBus& operator=(const LoopbackBus&) = delete;

    std::vector<std::uint8_t> roundtrip(const std::vector<std::uint8_t>& bytes) {
        std::lock_guard<std::mutex> lock(mutex_);
        std::vector<std::uint8_t> back(bytes.size());
        std::size_t sent = 0, received = 0;
        while (sent < bytes.size() || received < bytes.size()) {
            if (sent < bytes.size()) {
                const ssize_t n = ::send(write_fd_, bytes.data() + sent,
                                         std::min<std::size_t>(bytes.size() - sent, 1 << 16), 0);
                if (n < 0) throw TransportError("loopback send failed");
                sent += static_cast<std::size_t>(n);
            }
            while (received < sent) {
                const ssize_t n = ::recv(read_fd_, back.data() + received, sent - received, 0);
                if (n <= 0) throw TransportError("loopback recv failed");
                received += static_cast<std::size_t>(n);
            }
        }
        return back;
    }

private:
    std::mutex mutex_;
    int write_fd_ = -1;
    int read_fd_ = -1;
};

}  // namespace detail

// Runs the decentralized MPC: each robot is a worker thread holding the
// full local graph view, exchanging belief snapshots at iteration
// boundaries through the configured transport; a world stepper integrates
// the submitted controls. Deterministic whenever the latency distribution
// is degenerate and seeds are fixed.
class SwarmHarness {
public:
    SwarmHarness(PlanningScenario scenario, TransportConfig transport)
        : sc_(std::move(scenario)), transport_(transport) {
        const auto violations = sc_.validate();
        require(violations.empty(),
                "SwarmHarness: invalid scenario: " + (violations.empty() ? "" : violations[0]));
        require(transport_.drop_probability >= 0.0 && transport_.drop_probability < 1.0,
                "SwarmHarness: drop probability must be in [0, 1)");
        require(transport_.latency_rounds_min >= 0 &&
                    transport_.latency_rounds_max >= transport_.latency_rounds_min,
                "SwarmHarness: bad latency bounds");
    }

    SwarmResult run(std::uint64_t seed) {
        const int R = sc_.num_robots();
        state_.stop.store(false);
        state_.error.clear();
        state_.states.resize(R, sc_.model.state_dim());
        for (int r = 0; r < R; ++r)
            state_.states.row(r) = sc_.robots[static_cast<std::size_t>(r)].start;
        state_.controls = Eigen::MatrixXd::Zero(R, 2);
        state_.costs = Eigen::VectorXd::Zero(R);
        state_.mailboxes.assign(static_cast<std::size_t>(R),
                                std::vector<Mailbox>(static_cast<std::size_t>(R)));
        state_.stats_per_worker.assign(static_cast<std::size_t>(R), StalenessStats{});

        std::unique_ptr<detail::LoopbackBus> bus;
        if (transport_.mode == TransportConfig::Mode::LoopbackSockets)
            bus = std::make_unique<detail::LoopbackBus>();

        SwarmResult result;
        result.log.method = "svbp";
        result.log.scenario_name = sc_.name;
        result.log.dt = sc_.model.dt;
        result.log.initial_states = state_.states;

        detail::Barrier barrier(R);
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(R));
        for (int r = 0; r < R; ++r)
            workers.emplace_back([&, r] { worker_body(r, seed, barrier, bus.get(), result); });
        for (auto& t : workers) t.join();
        if (!state_.error.empty()) throw WorkerError("swarm halted: " + state_.error);

        for (const auto& s : state_.stats_per_worker) {
            result.stats.snapshots_sent += s.snapshots_sent;
            result.stats.snapshots_dropped += s.snapshots_dropped;
            result.stats.stale_reads += s.stale_reads;
            result.stats.max_stamp_lag = std::max(result.stats.max_stamp_lag, s.max_stamp_lag);
        }
        return result;
    }

private:
    struct Pending {
        long deliver_round;
        std::vector<std::uint8_t> bytes;
    };
    struct Mailbox {
        std::vector<Pending> pending;
        std::optional<BeliefSnapshot> latest;
        std::uint64_t last_stamp = 0;
    };
    struct Shared {
        Eigen::MatrixXd states;
        Eigen::MatrixXd controls;
        Eigen::VectorXd costs;
        std::vector<std::vector<Mailbox>> mailboxes;  // [receiver][sender]
        std::vector<StalenessStats> stats_per_worker;
        std::atomic<bool> stop{false};
        std::string error;
        std::mutex error_mutex;
    };

    void send_snapshot(int sender, const BeliefSnapshot& snap, long round,
                       detail::LoopbackBus* bus) {
        std::vector<std::uint8_t> bytes = encode_snapshot(snap);
        if (bus != nullptr) bytes = bus->roundtrip(bytes);
        auto& stats = state_.stats_per_worker[static_cast<std::size_t>(sender)];
        for (int recv = 0; recv < sc_.num_robots(); ++recv) {
            if (recv == sender) continue;
            ++stats.snapshots_sent;
            Rng rng = Rng(transport_.seed)
                          .child("transport", static_cast<std::uint64_t>(sender),
                                 static_cast<std::uint64_t>(recv))
                          .child(static_cast<std::uint64_t>(round));
            if (transport_.drop_probability > 0.0 &&
                rng.uniform() < transport_.drop_probability) {
                ++stats.snapshots_dropped;
                continue;
            }
            const long delay =
                transport_.latency_rounds_min == transport_.latency_rounds_max
                    ? transport_.latency_rounds_min
                    : rng.uniform_int(transport_.latency_rounds_min,
                                      transport_.latency_rounds_max);
            state_.mailboxes[static_cast<std::size_t>(recv)][static_cast<std::size_t>(sender)]
                .pending.push_back({round + delay, bytes});
        }
    }

    // Applies every due frame in stamp order; keeps the newest. Out-of-order
    // stamps are discarded, so the applied stamp sequence is monotone.
    void pull_mail(int receiver, long round) {
        auto& stats = state_.stats_per_worker[static_cast<std::size_t>(receiver)];
        for (int sender = 0; sender < sc_.num_robots(); ++sender) {
            if (sender == receiver) continue;
            Mailbox& box =
                state_.mailboxes[static_cast<std::size_t>(receiver)][static_cast<std::size_t>(sender)];
            std::vector<Pending> keep;
            for (auto& p : box.pending) {
                if (p.deliver_round > round) {
                    keep.push_back(std::move(p));
                    continue;
                }
                const BeliefSnapshot snap = decode_snapshot(p.bytes);
                if (snap.iteration > box.last_stamp || box.last_stamp == 0) {
                    box.last_stamp = snap.iteration;
                    box.latest = snap;
                }
            }
            box.pending = std::move(keep);
            if (box.latest.has_value() && round > 0) {
                const std::uint64_t expect = static_cast<std::uint64_t>(round);
                if (box.last_stamp < expect) {
                    ++stats.stale_reads;
                    stats.max_stamp_lag =
                        std::max(stats.max_stamp_lag, expect - box.last_stamp);
                }
            }
        }
    }

    void worker_body(int me, std::uint64_t seed, detail::Barrier& barrier,
                     detail::LoopbackBus* bus, SwarmResult& result) {
        try {
            const int R = sc_.num_robots();
            const int dim = sc_.model.trajectory_dim();
            Rng init_rng = Rng(seed).child("plan-init", static_cast<std::uint64_t>(me));
            Eigen::MatrixXd own = init_rng.normal_matrix(
                sc_.planner.particles, dim,
                0.0, sc_.planner.init_control_sigma_frac * sc_.model.control_limit);

            // initial beliefs are distributed reliably at spawn
            std::vector<Eigen::MatrixXd> peers(static_cast<std::size_t>(R));
            {
                for (int r = 0; r < R; ++r) {
                    Rng rng = Rng(seed).child("plan-init", static_cast<std::uint64_t>(r));
                    peers[static_cast<std::size_t>(r)] = rng.normal_matrix(
                        sc_.planner.particles, dim,
                        0.0, sc_.planner.init_control_sigma_frac * sc_.model.control_limit);
                }
            }

            long round = 0;
            for (int step = 0; step < sc_.max_steps && !state_.stop.load(); ++step) {
                const Eigen::MatrixXd states = state_.states;  // frozen during the step
                const MrfGraph graph = build_local_graph(states);
                const SvbpEngine engine(graph, make_config(states));
                const TrajectoryKernel kernel(sc_.model, states.row(me).transpose());
                StepState step_state;
                std::vector<Eigen::MatrixXd> beliefs = peers;
                beliefs[static_cast<std::size_t>(me)] = own;
                SvbpState st = engine.make_state(beliefs);

                const int rounds = step == 0 ? sc_.planner.init_iters : sc_.planner.iters_per_step;
                for (int k = 0; k < rounds; ++k) {
                    if (!barrier.arrive_and_wait()) return;
                    pull_mail(me, round);
                    refresh_peer_beliefs(st, peers, me, own);
                    engine.refresh_messages(st);
                    const Eigen::MatrixXd grad = engine.belief_log_grad(st, me);
                    const Eigen::MatrixXd dir = stein_direction(own, grad, kernel);
                    apply_step(own, dir, StepPolicy{StepPolicy::Mode::Adaptive,
                                                    sc_.planner.step_size,
                                                    sc_.planner.step_decay},
                               step_state);
                    st.beliefs[static_cast<std::size_t>(me)].particles = own;
                    invalidate(st);
                    if (!barrier.arrive_and_wait()) return;
                    ++round;
                    publish(me, own, round, bus);
                }

                // boundary: final refresh with the freshest peers, select and
                // submit the command
                if (!barrier.arrive_and_wait()) return;
                pull_mail(me, round);
                refresh_peer_beliefs(st, peers, me, own);
                engine.refresh_messages(st);
                engine.finalize_weights(st);
                const Eigen::VectorXd best =
                    st.beliefs[static_cast<std::size_t>(me)].map_estimate();
                state_.controls.row(me) =
                    sc_.model.clamp_control(Eigen::Vector2d(best(0), best(1))).transpose();
                Eigen::VectorXd lp;
                graph.unary(me).evaluate_values(best.transpose(), lp);
                state_.costs(me) = -lp(0);
                if (!barrier.arrive_and_wait()) return;

                if (me == 0) coordinator_step(step, result);
                if (!barrier.arrive_and_wait()) return;

                // shift the warm start and publish the post-shift belief
                own.block(0, 0, own.rows(), dim - 2) = own.block(0, 2, own.rows(), dim - 2).eval();
                own = own.cwiseMax(-sc_.model.control_limit).cwiseMin(sc_.model.control_limit);
                ++round;
                publish(me, own, round, bus);
            }
        } catch (const std::exception& e) {
            {
                std::lock_guard<std::mutex> lock(state_.error_mutex);
                if (state_.error.empty())
                    state_.error = "worker " + std::to_string(me) + ": " + e.what();
            }
            state_.stop.store(true);
            barrier.abort();  // peers bail at their next barrier
        }
    }

    void coordinator_step(int step, SwarmResult& result) {
        StepRecord rec;
        rec.step = step;
        rec.states = state_.states;
        rec.controls = state_.controls;
        rec.best_cost = state_.costs;
        result.log.steps.push_back(std::move(rec));

        const int R = sc_.num_robots();
        for (int r = 0; r < R; ++r)
            state_.states.row(r) =
                sc_.model.step(state_.states.row(r), state_.controls.row(r).transpose());

        bool all_reached = true;
        for (int r = 0; r < R; ++r)
            if ((state_.states.row(r).head<2>().transpose() -
                 sc_.robots[static_cast<std::size_t>(r)].goal)
                    .norm() > 0.5 * sc_.success_threshold) {
                all_reached = false;
                break;
            }
        if (all_reached || step + 1 == sc_.max_steps) {
            StepRecord final_rec;
            final_rec.step = static_cast<int>(result.log.steps.size());
            final_rec.states = state_.states;
            final_rec.controls = Eigen::MatrixXd::Zero(R, 2);
            final_rec.best_cost = Eigen::VectorXd::Zero(R);
            result.log.steps.push_back(std::move(final_rec));
            state_.stop.store(true);
        }
    }

    void publish(int me, const Eigen::MatrixXd& own, long round, detail::LoopbackBus* bus) {
        BeliefSnapshot snap;
        snap.robot_id = static_cast<std::uint32_t>(me);
        snap.iteration = static_cast<std::uint64_t>(round);
        snap.particles = own;
        snap.weights =
            Eigen::VectorXd::Constant(own.rows(), 1.0 / static_cast<double>(own.rows()));
        snap.send_time =
            std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
                .count();
        send_snapshot(me, snap, round, bus);
    }

    void refresh_peer_beliefs(SvbpState& st, std::vector<Eigen::MatrixXd>& peers, int me,
                              const Eigen::MatrixXd& own) {
        for (int r = 0; r < sc_.num_robots(); ++r) {
            if (r == me) {
                st.beliefs[static_cast<std::size_t>(r)].particles = own;
                continue;
            }
            const auto& box =
                state_.mailboxes[static_cast<std::size_t>(me)][static_cast<std::size_t>(r)];
            if (box.latest.has_value()) peers[static_cast<std::size_t>(r)] = box.latest->particles;
            st.beliefs[static_cast<std::size_t>(r)].particles = peers[static_cast<std::size_t>(r)];
        }
        invalidate(st);
    }

    static void invalidate(SvbpState& st) {
        for (auto& v : st.unary_logs) v.resize(0);
        for (auto& g : st.unary_grads) g.resize(0, 0);
        for (auto& v : st.source_terms) v.resize(0);
        for (auto& m : st.pair_logs) m.resize(0, 0);
    }

    MrfGraph build_local_graph(const Eigen::MatrixXd& states) const {
        MrfGraph g(sc_.num_robots());
        for (int r = 0; r < sc_.num_robots(); ++r)
            g.set_unary(r, std::make_shared<TrajectoryUnary>(
                               sc_.model, sc_.env, states.row(r).transpose(),
                               sc_.robots[static_cast<std::size_t>(r)].goal, sc_.weights));
        for (int a = 0; a < sc_.num_robots(); ++a)
            for (int b = a + 1; b < sc_.num_robots(); ++b)
                g.add_edge(a, b, std::make_shared<CollisionPairwise>(
                                     sc_.model, states.row(a).transpose(),
                                     states.row(b).transpose(), sc_.collision));
        return g;
    }

    SvbpConfig make_config(const Eigen::MatrixXd& /*states*/) const {
        SvbpConfig cfg;
        cfg.num_particles = sc_.planner.particles;
        cfg.num_iterations = 0;
        cfg.step = StepPolicy{StepPolicy::Mode::Adaptive, sc_.planner.step_size,
                              sc_.planner.step_decay};
        return cfg;
    }

    PlanningScenario sc_;
    TransportConfig transport_;
    Shared state_;
};

inline SwarmResult spawn_swarm(const PlanningScenario& scenario, const TransportConfig& transport,
                               std::uint64_t seed) {
    SwarmHarness harness(scenario, transport);
    return harness.run(seed);
}

}  // namespace svbp
