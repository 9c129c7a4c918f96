#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "credo/engine.hpp"
#include "credo/oracle.hpp"

using namespace credo;

namespace {

Config det_config() {
    Config cfg;
    cfg.inline_commit = true;
    cfg.start_cleaner = false;
    cfg.lock_timeout = std::chrono::milliseconds(0);
    return cfg;
}

std::vector<std::uint8_t> bytes(std::initializer_list<std::uint8_t> v) { return v; }

// Creates an empty data page through a system transaction and propagates it,
// so tests start from a committed, on-disk state.
PageId make_committed_page(Engine& e, PageId pid) {
    e.tm().run_system_txn([&](Transaction& t) {
        FrameGuard f = e.pool().create_page(pid);
        XLatch x(*f);
        const auto after = page::format_region_bytes(pid, false);
        const std::vector<std::uint8_t> before(after.size(), 0);
        e.tm().log_update(t, *f, page::kFormatRegionOffset, before, after);
    });
    REQUIRE(e.propagation().flush_page(pid) == FlushOutcome::Flushed);
    return pid;
}

void raw_update(Engine& e, Transaction& t, PageId pid, std::uint16_t off,
                std::vector<std::uint8_t> before, std::vector<std::uint8_t> after) {
    FrameGuard f = e.pool().lookup(pid);
    REQUIRE(f);
    XLatch x(*f);
    e.tm().log_update(t, *f, off, before, after);
}

std::vector<std::uint8_t> page_bytes(Engine& e, PageId pid, std::uint16_t off, std::size_t n) {
    FrameGuard f = e.pool().lookup(pid);
    REQUIRE(f);
    SLatch s(*f);
    return {f->image().begin() + off, f->image().begin() + off + n};
}

}  // namespace

TEST_CASE("buffer pool: fetch, cache, latch semantics") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const PageId pid = make_committed_page(*e, 4711);

    CHECK_THROWS_AS(e->pool().fetch(999), NotFoundError);

    // Fetched frames are committed and propagated, PageLSN from the header.
    e->pool().evict(pid);
    const auto before_writes = disk.page_write_count();
    FrameGuard f = e->pool().fetch(pid);
    CHECK(f->is_committed());
    CHECK(f->is_propagated());
    CHECK(f->page_lsn().has_value());
    CHECK(*f->page_lsn() == *page::page_lsn(*disk.read_page(pid)));

    FrameGuard again = e->pool().fetch(pid);
    CHECK(again.get() == f.get());  // same frame, no I/O
    CHECK(disk.page_write_count() == before_writes);

    f->latch_shared();
    again->latch_shared();  // two shared latches coexist
    again->unlatch_shared();
    std::atomic<bool> got_x{false};
    std::thread t([&] {
        f->latch_exclusive();
        got_x.store(true);
        f->unlatch_exclusive();
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    CHECK(!got_x.load());  // exclusive blocks behind shared
    f->unlatch_shared();
    t.join();
    CHECK(got_x.load());
}

TEST_CASE("buffer pool: eviction honors the page state") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const PageId pid = make_committed_page(*e, 10);

    SUBCASE("committed and propagated: no write on eviction") {
        const auto writes = disk.page_write_count();
        e->pool().evict(pid);
        CHECK(disk.page_write_count() == writes);
        CHECK(!e->pool().resident(pid));
    }
    SUBCASE("committed but unpropagated: flushed first") {
        auto& t = e->begin();
        raw_update(*e, t, pid, 100, bytes({0, 0}), bytes({1, 2}));
        e->commit(t);  // PageLSN moved; frame unpropagated
        const auto writes = disk.page_write_count();
        e->pool().evict(pid);
        CHECK(disk.page_write_count() == writes + 1);
        FrameGuard f = e->pool().fetch(pid);
        CHECK(f->image()[100] == 1);  // the committed update survived the cycle
    }
    SUBCASE("uncommitted frames are not evictable") {
        auto& t = e->begin();
        raw_update(*e, t, pid, 100, bytes({0, 0}), bytes({1, 2}));
        CHECK_THROWS_AS(e->pool().evict(pid), LogicError);
        e->abort(t);
        e->pool().evict(pid);  // committed again after the abort
    }
}

TEST_CASE("page life cycle: update, commit, flush, abort transitions") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const PageId pid = make_committed_page(*e, 4711);
    FrameGuard f = e->pool().lookup(pid);
    const Lsn fetched_lsn = *f->page_lsn();

    // Fetched: committed + propagated.
    CHECK(f->is_committed());
    CHECK(f->is_propagated());

    // Updates leave the frame uncommitted but, by PageLSN equality, still
    // propagated; the PageLSN itself may only move at commit time.
    auto& t1 = e->begin();
    auto& t2 = e->begin();
    raw_update(*e, t1, pid, 200, bytes({0, 0}), bytes({0xA1, 0xA2}));  // record r
    raw_update(*e, t2, pid, 300, bytes({0, 0}), bytes({0xB1, 0xB2}));  // record s
    CHECK(!f->is_committed());
    CHECK(f->is_propagated());
    CHECK(*f->page_lsn() == fetched_lsn);

    // T2 commits: PageLSN advances, page unpropagated, still uncommitted.
    e->commit(t2);
    const Lsn after_t2 = *f->page_lsn();
    CHECK(after_t2 > fetched_lsn);
    CHECK(!f->is_committed());
    CHECK(!f->is_propagated());

    // Full abort of the last active writer: committed again, propagation
    // state unchanged, PageLSN untouched by the abort.
    e->abort(t1);
    CHECK(f->is_committed());
    CHECK(!f->is_propagated());
    CHECK(*f->page_lsn() == after_t2);
    CHECK(page_bytes(*e, pid, 200, 2) == bytes({0, 0}));        // r rolled back
    CHECK(page_bytes(*e, pid, 300, 2) == bytes({0xB1, 0xB2}));  // s committed

    // Flush completes with an unchanged PageLSN: propagated.
    CHECK(e->propagation().flush_page(pid) == FlushOutcome::Flushed);
    CHECK(f->is_propagated());
    CHECK(*page::page_lsn(*disk.read_page(pid)) == after_t2);
}

TEST_CASE("commit assigns LSNs and builds the per-page chain") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const PageId pid = make_committed_page(*e, 4711);
    FrameGuard f = e->pool().lookup(pid);
    const Lsn base_lsn = *f->page_lsn();

    auto& t2 = e->begin();
    raw_update(*e, t2, pid, 300, bytes({0, 0}), bytes({0xB1, 0xB2}));
    const auto info2 = e->commit(t2);
    const Lsn lsn2 = *f->page_lsn();
    CHECK(info2.first_record_lsn == lsn2);

    auto& t1 = e->begin();
    raw_update(*e, t1, pid, 200, bytes({0, 0}), bytes({0xA1, 0xA2}));
    e->commit(t1);
    const Lsn lsn1 = *f->page_lsn();
    CHECK(lsn1 > lsn2);

    // Walk prev links from the final PageLSN: exactly the committed updates
    // to this page, newest first, ending at the null link.
    auto r1 = e->plog().read_record(lsn1);
    CHECK(r1.page_id == pid);
    CHECK(r1.prev_page_lsn == lsn2);
    auto r2 = e->plog().read_record(r1.prev_page_lsn);
    CHECK(r2.prev_page_lsn == base_lsn);
    auto r0 = e->plog().read_record(r2.prev_page_lsn);
    CHECK(r0.prev_page_lsn == kNullLsn);  // the format record

    // A transaction with several updates to one page keeps an intact chain
    // through all of them, PageLSN ending at the last.
    auto& t3 = e->begin();
    raw_update(*e, t3, pid, 400, bytes({0, 0}), bytes({1, 1}));
    raw_update(*e, t3, pid, 402, bytes({0, 0}), bytes({2, 2}));
    e->commit(t3);
    const Lsn lsn3b = *f->page_lsn();
    auto rec_b = e->plog().read_record(lsn3b);
    auto rec_a = e->plog().read_record(rec_b.prev_page_lsn);
    CHECK(rec_a.prev_page_lsn == lsn1);
    CHECK(rec_b.lsn == rec_a.lsn + rec_a.encoded_size());  // adjacent in the group
}

TEST_CASE("read-only commit performs no log I/O") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const auto writes = disk.write_ops();
    auto& t = e->begin();
    e->commit(t);
    CHECK(disk.write_ops() == writes);
    CHECK(e->vlm().open_count() == 0);  // private log released
}

TEST_CASE("log_update preconditions") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const PageId pid = make_committed_page(*e, 11);
    auto& t = e->begin();
    FrameGuard f = e->pool().lookup(pid);

    CHECK_THROWS_AS(e->tm().log_update(t, *f, 100, bytes({0}), bytes({1})), LogicError);

    {
        XLatch x(*f);
        e->tm().log_update(t, *f, 100, {}, {});  // zero-length: no record
        CHECK_THROWS_AS(e->tm().log_update(t, *f, 100, bytes({0}), bytes({1, 2})), LogicError);
    }
    CHECK(t.log().entries().empty());
    e->abort(t);
}

TEST_CASE("abort restores every touched frame and reads no persistent log") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const PageId a = make_committed_page(*e, 20);
    const PageId b = make_committed_page(*e, 21);

    auto& t = e->begin();
    raw_update(*e, t, a, 100, bytes({0, 0}), bytes({1, 1}));
    raw_update(*e, t, b, 100, bytes({0, 0}), bytes({2, 2}));
    raw_update(*e, t, a, 100, bytes({1, 1}), bytes({3, 3}));  // same range twice

    const auto reads = e->stats().persistent_log_reads.load();
    const auto log_bytes_before = disk.synced_size();
    e->abort(t);
    CHECK(e->stats().persistent_log_reads.load() == reads);
    CHECK(disk.synced_size() == log_bytes_before);  // nothing of the loser persists
    CHECK(page_bytes(*e, a, 100, 2) == bytes({0, 0}));
    CHECK(page_bytes(*e, b, 100, 2) == bytes({0, 0}));

    auto& ro = e->begin();
    e->abort(ro);  // aborting a read-only txn touches nothing
}

TEST_CASE("savepoints: partial rollback undoes exactly the suffix") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const PageId pid = make_committed_page(*e, 30);

    auto& t = e->begin();
    raw_update(*e, t, pid, 100, bytes({0}), bytes({1}));
    raw_update(*e, t, pid, 101, bytes({0}), bytes({2}));
    raw_update(*e, t, pid, 102, bytes({0}), bytes({3}));
    e->savepoint(t, "sp");
    raw_update(*e, t, pid, 103, bytes({0}), bytes({4}));
    raw_update(*e, t, pid, 104, bytes({0}), bytes({5}));

    e->rollback_to(t, "sp");
    CHECK(page_bytes(*e, pid, 100, 5) == bytes({1, 2, 3, 0, 0}));
    e->rollback_to(t, "sp");  // second rollback is a no-op
    CHECK(page_bytes(*e, pid, 100, 5) == bytes({1, 2, 3, 0, 0}));
    CHECK_THROWS_AS(e->rollback_to(t, "nope"), NotFoundError);

    // Undone entries are excluded from the copied range: the group holds
    // exactly three updates plus the commit record.
    const TxnId tid = t.id();
    e->commit(t);
    const auto scan = oracle::scan_log(disk.synced_log_bytes());
    std::size_t updates_of_t = 0;
    for (auto& r : scan.records)
        if (r.type == 1 && r.txn_id == tid) ++updates_of_t;
    CHECK(updates_of_t == 3);

    // Savepoint with no updates after it: rollback is a no-op.
    auto& t2 = e->begin();
    e->savepoint(t2, "empty");
    e->rollback_to(t2, "empty");
    e->commit(t2);
}

TEST_CASE("fully rolled-back transaction commits without log I/O") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    const PageId pid = make_committed_page(*e, 31);
    auto& t = e->begin();
    e->savepoint(t, "sp");
    raw_update(*e, t, pid, 100, bytes({0}), bytes({9}));
    e->rollback_to(t, "sp");
    const auto writes = disk.write_ops();
    e->commit(t);
    CHECK(disk.write_ops() == writes);
}

TEST_CASE("system transactions commit durably and independently") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());

    // Allocation persists even when the user transaction that triggered it
    // aborts.
    auto& user = e->begin();
    const RecordId rid = e->store().insert(user, bytes({1, 2, 3}));
    e->abort(user);
    const auto scan = oracle::scan_log(disk.synced_log_bytes());
    bool saw_sys_commit = false;
    for (auto& r : scan.records)
        if (r.type == 3) saw_sys_commit = true;
    CHECK(saw_sys_commit);
    CHECK(e->store().snapshot_pages().size() == 1);

    // The slot itself is free again after the abort.
    auto& user2 = e->begin();
    const RecordId rid2 = e->store().insert(user2, bytes({4}));
    CHECK(rid2 == rid);
    e->commit(user2);
}

TEST_CASE("record store: crud, read-your-writes, isolation") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());

    auto& t = e->begin();
    const RecordId rid = e->store().insert(t, bytes({10, 20, 30}));
    CHECK(rid.page == 1);
    CHECK(rid.slot == 0);  // first insert lands in slot 0 of a fresh page
    CHECK(e->store().read(t, rid) == bytes({10, 20, 30}));  // own write visible
    e->store().update(t, rid, bytes({40}));
    CHECK(e->store().read(t, rid) == bytes({40}));

    // Another transaction cannot observe or touch the uncommitted record.
    auto& other = e->begin();
    CHECK_THROWS_AS(e->store().read(other, rid), LockTimeoutError);
    e->abort(other);

    e->commit(t);
    auto& t2 = e->begin();
    CHECK(e->store().read(t2, rid) == bytes({40}));
    e->store().erase(t2, rid);
    CHECK_THROWS_AS(e->store().read(t2, rid), NotFoundError);
    e->commit(t2);

    // A deleted slot is not reused; the next insert takes a fresh slot.
    auto& t3 = e->begin();
    const RecordId fresh = e->store().insert(t3, bytes({7}));
    CHECK(fresh.slot == 1);
    e->commit(t3);
}

TEST_CASE("record store: update then abort leaves the original") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    auto& t = e->begin();
    const RecordId rid = e->store().insert(t, bytes({1, 1}));
    e->commit(t);

    auto& u = e->begin();
    e->store().update(u, rid, bytes({2, 2}));
    e->abort(u);

    auto& r = e->begin();
    CHECK(e->store().read(r, rid) == bytes({1, 1}));
    e->commit(r);
}

TEST_CASE("record store: payload limits and page capacity") {
    VirtualDisk disk;
    auto e = Engine::open(disk, det_config());
    auto& t = e->begin();
    CHECK_THROWS_AS(e->store().insert(t, std::vector<std::uint8_t>(513, 1)), LogicError);

    // Page capacity from the layout arithmetic: 15 cells of up to 512 bytes
    // per page, so 17 maximum-size inserts spill onto a second page.
    const std::size_t capacity = (kPageSize - page::kHeaderSize) / page::kCellSize;
    CHECK(capacity == 15);
    for (int i = 0; i < 17; ++i) e->store().insert(t, std::vector<std::uint8_t>(512, 2));
    CHECK(e->store().snapshot_pages().size() == 2);
    e->commit(t);
}

TEST_CASE("group commit: concurrent committers keep groups contiguous") {
    VirtualDisk disk;
    Config cfg;  // threaded: real commit daemon
    cfg.group_commit_window = std::chrono::microseconds(1000);
    cfg.start_cleaner = false;
    {
        auto e = Engine::open(disk, cfg);
        constexpr int kCommitters = 8;
        std::vector<std::thread> threads;
        for (int i = 0; i < kCommitters; ++i) {
            threads.emplace_back([&] {
                auto& t = e->begin();
                e->store().insert(t, bytes({0xEE}));
                e->commit(t);
            });
        }
        for (auto& th : threads) th.join();
        e->shutdown();
    }
    const auto scan = oracle::scan_log(disk.synced_log_bytes());
    CHECK(!scan.interleaved_groups);  // one contiguous range per transaction
    CHECK(scan.valid_end == disk.synced_size());
}

TEST_CASE("commit batch: distinct reservations, no duplicate first LSNs") {
    VirtualDisk disk;
    Config cfg;
    cfg.group_commit_window = std::chrono::microseconds(3000);
    cfg.start_cleaner = false;
    auto e = Engine::open(disk, cfg);

    std::mutex mtx;
    std::vector<Lsn> firsts;
    constexpr int kCommitters = 6;
    std::vector<std::thread> threads;
    for (int i = 0; i < kCommitters; ++i) {
        threads.emplace_back([&] {
            auto& t = e->begin();
            e->store().insert(t, bytes({1}));
            const auto info = e->commit(t);
            std::lock_guard g(mtx);
            firsts.push_back(info.first_record_lsn);
        });
    }
    for (auto& th : threads) th.join();
    std::sort(firsts.begin(), firsts.end());
    CHECK(std::adjacent_find(firsts.begin(), firsts.end()) == firsts.end());
    e->shutdown();
}
