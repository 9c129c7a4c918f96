#pragma once

#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <unordered_map>
#include <vector>

#include "credo/engine.hpp"
#include "credo/oracle.hpp"

namespace credo {

struct WorkloadSpec {
    std::uint64_t seed = 1;
    std::uint32_t streams = 4;  // logical streams (deterministic) or OS threads
    std::uint32_t txns = 200;   // total across all streams
    std::uint32_t mix_insert = 40;
    std::uint32_t mix_update = 30;
    std::uint32_t mix_delete = 10;
    std::uint32_t mix_read = 20;
    double abort_prob = 0.10;
    double savepoint_prob = 0.10;
    std::uint32_t snapshot_readers = 0;
    bool deterministic = true;
    bool validate_reads = true;  // deterministic mode only
    // Deterministic-mode freeze sampling: invoked roughly every
    // freeze_every steps when set.
    std::uint32_t freeze_every = 0;
    std::function<void(Engine&)> freeze_hook;
};

struct RunResult {
    bool crashed = false;
    std::uint64_t committed = 0;
    std::uint64_t aborted = 0;
    std::uint64_t ops = 0;
};

// Shared bookkeeping between the harness and the oracle journal: the
// currently committed logical state plus a sampling vector for rid choice.
class CommittedView {
  public:
    void apply(const std::vector<oracle::Op>& ops) {
        std::lock_guard g(mtx_);
        for (const auto& op : ops) {
            const RecordId rid{op.page, op.slot};
            switch (op.kind) {
                case oracle::Op::Insert:
                    values_[rid] = op.payload;
                    keys_.push_back(rid);
                    break;
                case oracle::Op::Update:
                    values_[rid] = op.payload;
                    break;
                case oracle::Op::Delete:
                    values_.erase(rid);
                    break;
            }
        }
    }

    std::optional<RecordId> sample(std::uint64_t r) const {
        std::lock_guard g(mtx_);
        for (std::size_t attempt = 0; attempt < 8 && !keys_.empty(); ++attempt) {
            const RecordId rid = keys_[(r + attempt * 7919) % keys_.size()];
            if (values_.count(rid)) return rid;
        }
        return std::nullopt;
    }

    std::optional<std::vector<std::uint8_t>> value(const RecordId& rid) const {
        std::lock_guard g(mtx_);
        auto it = values_.find(rid);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const {
        std::lock_guard g(mtx_);
        return values_.size();
    }

  private:
    mutable std::mutex mtx_;
    std::unordered_map<RecordId, std::vector<std::uint8_t>, RecordIdHash> values_;
    std::vector<RecordId> keys_;
};

namespace workload_detail {

inline std::vector<std::uint8_t> random_payload(std::mt19937_64& rng) {
    std::size_t len = 1 + rng() % 200;
    if (rng() % 19 == 0) len = kMaxRecordPayload;
    std::vector<std::uint8_t> out(len);
    for (std::size_t i = 0; i < len; i += 8) {
        const std::uint64_t v = rng();
        for (std::size_t k = 0; k < 8 && i + k < len; ++k)
            out[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
    }
    return out;
}

// One logical transaction stream. Tracks its own uncommitted view so reads
// can be validated and savepoint rollbacks replayed onto the oracle ops.
struct Stream {
    std::mt19937_64 rng;
    std::uint32_t remaining = 0;
    Transaction* txn = nullptr;
    std::uint32_t ops_left = 0;
    bool plan_partial_rollback = false;
    bool savepoint_placed = false;
    std::size_t sp_ops_mark = 0;
    std::vector<oracle::Op> ops;
    std::map<RecordId, std::optional<std::vector<std::uint8_t>>> own;
    std::map<RecordId, std::optional<std::vector<std::uint8_t>>> own_at_sp;

    bool done() const { return remaining == 0 && txn == nullptr; }
};

}  // namespace workload_detail

// Drives one workload against an engine. In deterministic mode a single
// thread interleaves the streams under the seeded schedule and the engine
// runs with inline commits; the same seed replays the same disk bytes.
class WorkloadRunner {
  public:
    WorkloadRunner(Engine& engine, const WorkloadSpec& spec, oracle::Journal& journal)
        : engine_(engine), spec_(spec), journal_(journal) {}

    CommittedView& committed() { return committed_; }

    RunResult run() {
        if (spec_.deterministic) return run_deterministic();
        return run_threaded();
    }

  private:
    using Stream = workload_detail::Stream;

    RunResult run_deterministic() {
        RunResult res;
        std::mt19937_64 sched(spec_.seed);
        std::vector<Stream> streams(spec_.streams);
        for (std::uint32_t i = 0; i < spec_.streams; ++i) {
            streams[i].rng.seed(spec_.seed * 0x9E3779B97F4A7C15ull + i + 1);
            streams[i].remaining = spec_.txns / spec_.streams +
                                   (i < spec_.txns % spec_.streams ? 1 : 0);
        }
        std::uint64_t step_count = 0;
        try {
            for (;;) {
                std::vector<std::size_t> live;
                for (std::size_t i = 0; i < streams.size(); ++i)
                    if (!streams[i].done()) live.push_back(i);
                if (live.empty()) break;
                Stream& s = streams[live[sched() % live.size()]];
                step(s, res);
                ++step_count;
                ++res.ops;
                if (sched() % 8 == 0)
                    engine_.propagation().clean_pass(1 + sched() % 4);
                if (sched() % 97 == 0) engine_.propagation().take_checkpoint();
                if (spec_.freeze_every && spec_.freeze_hook &&
                    step_count % spec_.freeze_every == 0)
                    spec_.freeze_hook(engine_);
                if (spec_.snapshot_readers && sched() % 23 == 0) snapshot_probe(sched);
            }
        } catch (const CrashInjected&) {
            res.crashed = true;
        }
        return res;
    }

    RunResult run_threaded() {
        RunResult res;
        std::mutex res_mtx;
        std::atomic<bool> stop_readers{false};
        std::vector<std::thread> workers;
        for (std::uint32_t i = 0; i < spec_.streams; ++i) {
            workers.emplace_back([&, i] {
                Stream s;
                s.rng.seed(spec_.seed * 0x9E3779B97F4A7C15ull + i + 1);
                s.remaining = spec_.txns / spec_.streams +
                              (i < spec_.txns % spec_.streams ? 1 : 0);
                RunResult local;
                try {
                    while (!s.done()) step(s, local);
                } catch (const CrashInjected&) {
                    local.crashed = true;
                } catch (const EngineStoppedError&) {
                    local.crashed = true;
                }
                std::lock_guard g(res_mtx);
                res.committed += local.committed;
                res.aborted += local.aborted;
                res.crashed = res.crashed || local.crashed;
            });
        }
        std::vector<std::thread> readers;
        for (std::uint32_t i = 0; i < spec_.snapshot_readers; ++i) {
            readers.emplace_back([&, i] {
                std::mt19937_64 rng(spec_.seed ^ (0xABCDull + i));
                try {
                    while (!stop_readers.load()) {
                        snapshot_probe(rng);
                        std::this_thread::sleep_for(std::chrono::microseconds(200));
                    }
                } catch (const CrashInjected&) {
                } catch (const EngineStoppedError&) {
                }
            });
        }
        for (auto& w : workers) w.join();
        stop_readers.store(true);
        for (auto& r : readers) r.join();
        return res;
    }

    void step(Stream& s, RunResult& res) {
        if (s.txn == nullptr) {
            if (s.remaining == 0) return;
            s.txn = &engine_.begin();
            --s.remaining;
            s.ops_left = 1 + s.rng() % 8;
            s.plan_partial_rollback = chance(s.rng, spec_.savepoint_prob);
            s.savepoint_placed = false;
            s.ops.clear();
            s.own.clear();
            return;
        }
        if (s.ops_left > 0) {
            --s.ops_left;
            try {
                one_op(s);
            } catch (const LockTimeoutError&) {
                finish_abort(s, res);
                return;
            } catch (const ResourceError&) {
                // Pool or extent pressure: rolling back frees this
                // transaction's non-evictable frames and extents.
                finish_abort(s, res);
                return;
            } catch (const NotFoundError&) {
                // Concurrent delete won the race; skip the op.
            }
            if (s.plan_partial_rollback && !s.savepoint_placed) {
                engine_.savepoint(*s.txn, "wl");
                s.savepoint_placed = true;
                s.sp_ops_mark = s.ops.size();
                s.own_at_sp = s.own;
            }
            return;
        }
        // Transaction end: optional partial rollback, then abort or commit.
        if (s.savepoint_placed) {
            engine_.rollback_to(*s.txn, "wl");
            s.ops.resize(s.sp_ops_mark);
            s.own = s.own_at_sp;
        }
        if (chance(s.rng, spec_.abort_prob)) {
            finish_abort(s, res);
            return;
        }
        const TxnId id = s.txn->id();
        journal_.record_in_flight(id, s.ops);
        try {
            engine_.commit(*s.txn);
        } catch (const LockTimeoutError&) {
            finish_abort(s, res);
            return;
        }
        journal_.record_committed(id, s.ops);
        committed_.apply(s.ops);
        s.txn = nullptr;
        ++res.committed;
    }

    void finish_abort(Stream& s, RunResult& res) {
        const TxnId id = s.txn->id();
        engine_.abort(*s.txn);
        journal_.record_aborted(id);
        s.txn = nullptr;
        ++res.aborted;
    }

    void one_op(Stream& s) {
        const std::uint32_t total =
            spec_.mix_insert + spec_.mix_update + spec_.mix_delete + spec_.mix_read;
        std::uint32_t pick = total ? s.rng() % total : 0;
        auto kind = oracle::Op::Insert;
        if (pick < spec_.mix_insert) {
            kind = oracle::Op::Insert;
        } else if ((pick -= spec_.mix_insert) < spec_.mix_update) {
            kind = oracle::Op::Update;
        } else if ((pick -= spec_.mix_update) < spec_.mix_delete) {
            kind = oracle::Op::Delete;
        } else {
            do_read(s);
            return;
        }

        if (kind == oracle::Op::Insert) {
            auto payload = workload_detail::random_payload(s.rng);
            const RecordId rid = engine_.store().insert(*s.txn, payload);
            s.ops.push_back({oracle::Op::Insert, rid.page, rid.slot, payload});
            s.own[rid] = payload;
            return;
        }
        const auto target = pick_target(s);
        if (!target) {
            auto payload = workload_detail::random_payload(s.rng);
            const RecordId rid = engine_.store().insert(*s.txn, payload);
            s.ops.push_back({oracle::Op::Insert, rid.page, rid.slot, payload});
            s.own[rid] = payload;
            return;
        }
        if (kind == oracle::Op::Update) {
            auto payload = workload_detail::random_payload(s.rng);
            engine_.store().update(*s.txn, *target, payload);
            s.ops.push_back({oracle::Op::Update, target->page, target->slot, payload});
            s.own[*target] = payload;
        } else {
            engine_.store().erase(*s.txn, *target);
            s.ops.push_back({oracle::Op::Delete, target->page, target->slot, {}});
            s.own[*target] = std::nullopt;
        }
    }

    void do_read(Stream& s) {
        const auto target = pick_target(s);
        if (!target) return;
        std::optional<std::vector<std::uint8_t>> got;
        try {
            got = engine_.store().read(*s.txn, *target);
        } catch (const NotFoundError&) {
            got = std::nullopt;
        }
        if (!spec_.deterministic || !spec_.validate_reads) return;
        std::optional<std::vector<std::uint8_t>> want;
        auto own = s.own.find(*target);
        if (own != s.own.end())
            want = own->second;
        else
            want = committed_.value(*target);
        if (got != want) throw IntegrityError("read returned an unexpected value");
    }

    std::optional<RecordId> pick_target(Stream& s) {
        // Prefer own writes occasionally so read-your-writes is exercised.
        if (!s.own.empty() && s.rng() % 4 == 0) {
            auto it = s.own.begin();
            std::advance(it, static_cast<long>(s.rng() % s.own.size()));
            if (it->second.has_value()) return it->first;
        }
        return committed_.sample(s.rng());
    }

    template <typename Rng>
    void snapshot_probe(Rng& rng) {
        SnapshotHandle snap = engine_.snapshot_begin();
        for (int i = 0; i < 3; ++i) {
            const auto rid = committed_.sample(rng());
            if (!rid) return;
            std::optional<std::vector<std::uint8_t>> first, second;
            try {
                first = engine_.store().read(snap, *rid);
            } catch (const NotFoundError&) {
            }
            try {
                second = engine_.store().read(snap, *rid);
            } catch (const NotFoundError&) {
            }
            if (first != second)
                throw IntegrityError("snapshot read was not stable");
        }
    }

    static bool chance(std::mt19937_64& rng, double p) {
        return p > 0 && (rng() % 10000) < static_cast<std::uint64_t>(p * 10000);
    }

    Engine& engine_;
    const WorkloadSpec& spec_;
    oracle::Journal& journal_;
    CommittedView committed_;
};

// --- crash-test orchestration ---

struct CrashVerdict {
    bool ok = true;
    bool crashed = false;
    std::uint64_t crash_op = 0;
    std::string failure;
    std::uint64_t committed = 0;
    std::uint64_t recovered_records = 0;
    std::uint64_t undo_ops_during_recovery = 0;
    std::uint64_t workload_log_reads = 0;  // persistent-log reads during the run
    bool disk_check_ok = true;             // committed-state scan after recovery
};

inline Config harness_config(bool deterministic) {
    Config cfg;
    if (deterministic) {
        cfg.inline_commit = true;
        cfg.start_cleaner = false;
        cfg.lock_timeout = std::chrono::milliseconds(0);
        cfg.checkpoint_interval = 64;
    }
    return cfg;
}

inline std::map<std::pair<std::uint64_t, std::uint16_t>, std::vector<std::uint8_t>>
scan_logical_state(Engine& e) {
    std::map<std::pair<std::uint64_t, std::uint16_t>, std::vector<std::uint8_t>> out;
    for (auto& [rid, payload] : e.store().scan_all()) out[{rid.page, rid.slot}] = payload;
    return out;
}

// Runs the workload with a crash planted at `crash_op`, recovers, and checks
// the recovered state against the oracle. A second crash can be planted into
// the recovery itself to exercise idempotence.
inline CrashVerdict run_crash_test(const WorkloadSpec& spec, std::uint64_t crash_op,
                                   std::uint64_t recovery_crash_op = kNoCrash,
                                   Config base_cfg = harness_config(true)) {
    CrashVerdict verdict;
    verdict.crash_op = crash_op;
    oracle::Journal journal;

    VirtualDisk disk(FaultPlan{crash_op, spec.seed});
    bool crashed_at_open = false;
    {
        std::unique_ptr<Engine> engine;
        try {
            engine = Engine::open(disk, base_cfg);
        } catch (const CrashInjected&) {
            crashed_at_open = true;
            verdict.crashed = true;
        }
        if (engine) {
            WorkloadRunner runner(*engine, spec, journal);
            const RunResult r = runner.run();
            verdict.crashed = r.crashed;
            verdict.committed = r.committed;
            verdict.workload_log_reads = engine->stats().persistent_log_reads.load();
        }
    }
    (void)crashed_at_open;

    // Classify in-flight commits against the surviving log before recovery.
    disk.reopen_after_crash(FaultPlan{recovery_crash_op, spec.seed ^ 0x5bd1e995});
    const auto pre_scan = oracle::scan_log(disk.synced_log_bytes());

    std::unique_ptr<Engine> recovered;
    try {
        recovered = Engine::open(disk, base_cfg);
    } catch (const CrashInjected&) {
        // Crash during recovery: reopen once more, cleanly.
        disk.reopen_after_crash();
        recovered = Engine::open(disk, base_cfg);
    }
    // A planted recovery crash that never fired must not interrupt the
    // verdict below.
    disk.clear_fault_plan();

    const auto expect = journal.expected_state(pre_scan);
    if (!expect.ack_honest) {
        verdict.ok = false;
        verdict.failure = "acknowledged transaction missing from the durable log";
        return verdict;
    }
    if (!expect.no_aborted_winners) {
        verdict.ok = false;
        verdict.failure = "aborted transaction present in the durable log";
        return verdict;
    }
    const auto actual = scan_logical_state(*recovered);
    verdict.recovered_records = actual.size();
    verdict.undo_ops_during_recovery = recovered->stats().undo_ops_during_recovery.load();
    if (actual != expect.state) {
        verdict.ok = false;
        verdict.failure = "recovered state diverges from the oracle";
        return verdict;
    }
    if (verdict.undo_ops_during_recovery != 0) {
        verdict.ok = false;
        verdict.failure = "recovery performed undo work";
        return verdict;
    }
    recovered->shutdown();
    const auto post_scan = oracle::scan_log(disk.synced_log_bytes());
    if (post_scan.interleaved_groups || post_scan.commitless_group_midlog ||
        post_scan.valid_end != disk.synced_size()) {
        verdict.ok = false;
        verdict.failure = "log contains an incomplete committed group";
        return verdict;
    }
    verdict.disk_check_ok =
        oracle::check_committed_disk(disk.synced_log_bytes(), disk.page_ids(),
                                     [&](std::uint64_t pid) {
                                         auto img = disk.read_page(pid);
                                         oracle::OraclePage out{};
                                         if (img) std::memcpy(out.data(), img->data(), kPageSize);
                                         return out;
                                     })
            .ok;
    if (!verdict.disk_check_ok) {
        verdict.ok = false;
        verdict.failure = "recovered disk violates the committed-state invariant";
    }
    return verdict;
}

// Dry-runs the workload to learn the total write-op count, for picking
// crash points that land inside the run.
inline std::uint64_t dry_run_write_ops(const WorkloadSpec& spec,
                                       Config base_cfg = harness_config(true)) {
    oracle::Journal journal;
    VirtualDisk disk;
    auto engine = Engine::open(disk, base_cfg);
    WorkloadRunner runner(*engine, spec, journal);
    runner.run();
    engine->shutdown();
    return disk.write_ops();
}

}  // namespace credo
