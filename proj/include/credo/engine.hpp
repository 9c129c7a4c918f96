#pragma once

#include <memory>
#include <shared_mutex>

#include "credo/buffer_pool.hpp"
#include "credo/lock_table.hpp"
#include "credo/persistent_log.hpp"
#include "credo/propagation.hpp"
#include "credo/record_store.hpp"
#include "credo/recovery.hpp"
#include "credo/snapshot.hpp"
#include "credo/transaction_manager.hpp"
#include "credo/types.hpp"
#include "credo/virtual_disk.hpp"
#include "credo/volatile_log_manager.hpp"

namespace credo {

// Everything wired together over one virtual disk. Opening an existing
// database always runs restart (log analysis + REDO); a fresh disk is
// bootstrapped with the catalog page. New transactions are admitted only
// once restart has completed.
class Engine {
  public:
    static std::unique_ptr<Engine> open(VirtualDisk& disk, Config cfg = {}) {
        auto e = std::unique_ptr<Engine>(new Engine(disk, cfg));
        e->startup();
        return e;
    }

    ~Engine() {
        tm_.stop();
        prop_.stop();
        plog_.stop();
    }

    // Clean shutdown: all frames propagated, an empty checkpoint, no tail.
    // The caller guarantees no transactions are in flight.
    void shutdown() {
        prop_.stop();
        prop_.flush_all();
        prop_.take_checkpoint();
        tm_.stop();
        plog_.stop();
    }

    Transaction& begin() { return tm_.begin(TxnKind::User); }
    TransactionManager::CommitInfo commit(Transaction& t) { return tm_.commit(t); }
    void abort(Transaction& t) { tm_.abort(t); }
    void savepoint(Transaction& t, const std::string& name) { tm_.savepoint(t, name); }
    void rollback_to(Transaction& t, const std::string& name) { tm_.rollback_to(t, name); }

    SnapshotHandle snapshot_begin() const { return SnapshotHandle(tt_, plog_.durable_lsn()); }
    PageImage fix_at(PageId pid, Lsn l) const { return tt_.fix_at(pid, l); }

    RecordStore& store() { return store_; }
    TransactionManager& tm() { return tm_; }
    Propagation& propagation() { return prop_; }
    BufferPool& pool() { return pool_; }
    PersistentLog& plog() { return plog_; }
    VolatileLogManager& vlm() { return vlm_; }
    LockTable& locks() { return locks_; }
    VirtualDisk& disk() { return disk_; }
    Stats& stats() { return stats_; }
    const Config& config() const { return cfg_; }
    const AnalysisResult& last_restart() const { return last_restart_; }

    // Cooperative quiesce: pauses the daemons between operations and runs the
    // inspector against the raw disk. Workload threads must be parked by the
    // caller; in deterministic mode there are none.
    template <typename Fn>
    void freeze_and_inspect(Fn&& fn) {
        tm_.pause(true);
        prop_.pause(true);
        fn(static_cast<const VirtualDisk&>(disk_));
        prop_.pause(false);
        tm_.pause(false);
    }

  private:
    Engine(VirtualDisk& disk, Config cfg)
        : cfg_(cfg), disk_(disk), vlm_(cfg_.extent_size, cfg_.max_extents),
          plog_(disk_, stats_), pool_(disk_, cfg_.pool_frames, stats_), locks_(stats_),
          tm_(cfg_, stats_, vlm_, plog_, pool_, locks_, coord_),
          prop_(cfg_, stats_, vlm_, plog_, pool_, tm_, coord_),
          recovery_(stats_, disk_, plog_, pool_, prop_),
          tt_(vlm_, plog_, pool_, disk_, coord_), store_(cfg_, tm_, pool_) {
        pool_.set_flush_hook([this](PageId pid) { prop_.flush_page(pid); });
        tm_.set_checkpoint_hook([this] { prop_.take_checkpoint(); });
    }

    void startup() {
        const bool virgin = disk_.synced_size() == 0 && disk_.page_ids().empty();
        if (!virgin) last_restart_ = recovery_.restart();
        // No catalog page anywhere means nothing ever committed (a crash in
        // the middle of the very first bootstrap leaves only a torn tail):
        // start the database from scratch.
        if (!pool_.resident(kCatalogPage) && !disk_.read_page(kCatalogPage)) {
            store_.bootstrap();
            prop_.flush_all();
            prop_.take_checkpoint();
        } else {
            store_.reload_catalog();
        }
        if (!cfg_.inline_commit && cfg_.start_cleaner) prop_.start_cleaner();
    }

    Config cfg_;
    VirtualDisk& disk_;
    Stats stats_;
    std::shared_mutex coord_;  // shared: flush/fix_at window; exclusive: abort/rollback undo
    VolatileLogManager vlm_;
    PersistentLog plog_;
    BufferPool pool_;
    LockTable locks_;
    TransactionManager tm_;
    Propagation prop_;
    Recovery recovery_;
    TimeTravel tt_;
    RecordStore store_;
    AnalysisResult last_restart_;
};

}  // namespace credo
