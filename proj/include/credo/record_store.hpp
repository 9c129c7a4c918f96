#pragma once

#include <mutex>
#include <vector>

#include "credo/buffer_pool.hpp"
#include "credo/snapshot.hpp"
#include "credo/transaction_manager.hpp"
#include "credo/types.hpp"

namespace credo {

inline constexpr PageId kCatalogPage = 0;
inline constexpr std::size_t kMaxRecordPayload = page::kCellDataSize;

// Minimal record API over fixed-cell slotted pages. Inserts take a fresh
// never-used cell (tombstoned cells are not reused); page allocation and the
// catalog run inside system transactions.
class RecordStore {
  public:
    RecordStore(const Config& cfg, TransactionManager& tm, BufferPool& pool)
        : cfg_(cfg), tm_(tm), pool_(pool) {}

    // Fresh database: format the catalog page.
    void bootstrap() {
        tm_.run_system_txn([&](Transaction& t) {
            FrameGuard frame = pool_.create_page(kCatalogPage);
            XLatch x(*frame);
            const auto after = page::format_region_bytes(kCatalogPage, /*catalog=*/true);
            const std::vector<std::uint8_t> before(after.size(), 0);
            tm_.log_update(t, *frame, page::kFormatRegionOffset, before, after);
        });
        reload_catalog();
    }

    // Rebuilds the volatile page list from the catalog page after restart.
    void reload_catalog() {
        std::lock_guard g(catalog_mtx_);
        FrameGuard frame = pool_.fetch(kCatalogPage);
        SLatch s(*frame);
        data_pages_ = page::catalog_entries(frame->image());
    }

    RecordId insert(Transaction& t, std::span<const std::uint8_t> payload) {
        if (payload.size() > kMaxRecordPayload) throw LogicError("record payload too large");
        if (payload.empty()) throw LogicError("empty record payload");
        for (;;) {
            // Try known pages first, newest allocation last.
            for (PageId pid : snapshot_pages()) {
                auto rid = try_insert_on(t, pid, payload);
                if (rid) return *rid;
            }
            allocate_data_page(t);
        }
    }

    void update(Transaction& t, const RecordId& rid, std::span<const std::uint8_t> payload) {
        if (payload.size() > kMaxRecordPayload) throw LogicError("record payload too large");
        if (payload.empty()) throw LogicError("empty record payload");
        tm_.locks().acquire(t.id(), rid, LockMode::Exclusive, cfg_.lock_timeout);
        FrameGuard frame = pool_.fetch(rid.page);
        XLatch x(*frame);
        require_live(frame->image(), rid);
        const auto before = page::cell_bytes(frame->image(), rid.slot);
        const auto after = page::make_live_cell(payload);
        tm_.log_update(t, *frame, static_cast<std::uint16_t>(page::cell_offset(rid.slot)),
                       before, after);
    }

    void erase(Transaction& t, const RecordId& rid) {
        tm_.locks().acquire(t.id(), rid, LockMode::Exclusive, cfg_.lock_timeout);
        FrameGuard frame = pool_.fetch(rid.page);
        XLatch x(*frame);
        require_live(frame->image(), rid);
        const auto before = page::cell_bytes(frame->image(), rid.slot);
        const auto after = page::make_tombstone_cell();
        tm_.log_update(t, *frame, static_cast<std::uint16_t>(page::cell_offset(rid.slot)),
                       before, after);
    }

    std::vector<std::uint8_t> read(Transaction& t, const RecordId& rid) {
        tm_.locks().acquire(t.id(), rid, LockMode::Shared, cfg_.lock_timeout);
        FrameGuard frame = pool_.fetch(rid.page);
        SLatch s(*frame);
        require_live(frame->image(), rid);
        auto data = page::cell_data(frame->image(), rid.slot);
        return {data.begin(), data.end()};
    }

    // Snapshot read: no record locks, resolved against the handle's LSN.
    std::vector<std::uint8_t> read(SnapshotHandle& snap, const RecordId& rid) {
        const PageImage& img = snap.page(rid.page);
        require_live(img, rid);
        auto data = page::cell_data(img, rid.slot);
        return {data.begin(), data.end()};
    }

    // All live records; used by verification paths on a quiesced engine.
    std::vector<std::pair<RecordId, std::vector<std::uint8_t>>> scan_all() {
        std::vector<std::pair<RecordId, std::vector<std::uint8_t>>> out;
        for (PageId pid : snapshot_pages()) {
            FrameGuard frame = pool_.fetch(pid);
            SLatch s(*frame);
            for (std::uint16_t slot = 0; slot < page::kCellsPerPage; ++slot) {
                if (page::cell_flag(frame->image(), slot) != page::kCellLive) continue;
                auto data = page::cell_data(frame->image(), slot);
                out.emplace_back(RecordId{pid, slot},
                                 std::vector<std::uint8_t>(data.begin(), data.end()));
            }
        }
        return out;
    }

    std::vector<PageId> snapshot_pages() const {
        std::lock_guard g(catalog_mtx_);
        return data_pages_;
    }

  private:
    static void require_live(const PageImage& img, const RecordId& rid) {
        if (rid.page == kCatalogPage || rid.slot >= page::kCellsPerPage)
            throw NotFoundError("no such record");
        if (page::cell_flag(img, rid.slot) != page::kCellLive)
            throw NotFoundError("no such record");
    }

    std::optional<RecordId> try_insert_on(Transaction& t, PageId pid,
                                          std::span<const std::uint8_t> payload) {
        FrameGuard frame = pool_.fetch(pid);
        XLatch x(*frame);
        for (std::uint16_t slot = 0; slot < page::kCellsPerPage; ++slot) {
            if (page::cell_flag(frame->image(), slot) != page::kCellFree) continue;
            const RecordId rid{pid, slot};
            // Non-blocking: a failed try-lock means another inserter beat us
            // to this never-used cell.
            if (!tm_.locks().try_acquire(t.id(), rid, LockMode::Exclusive)) continue;
            const auto before = page::cell_bytes(frame->image(), slot);
            const auto after = page::make_live_cell(payload);
            tm_.log_update(t, *frame, static_cast<std::uint16_t>(page::cell_offset(slot)),
                           before, after);
            return rid;
        }
        return std::nullopt;
    }

    void allocate_data_page(Transaction&) {
        std::lock_guard g(alloc_mtx_);
        // Re-check under the allocation lock: someone else may have grown the
        // catalog while we waited.
        const auto known = snapshot_pages();
        tm_.run_system_txn([&](Transaction& st) {
            FrameGuard cat = pool_.fetch(kCatalogPage);
            XLatch cx(*cat);
            const auto entries = page::catalog_entries(cat->image());
            if (entries.size() > known.size()) return;  // raced; retry insert
            if (entries.size() >= page::kCatalogCapacity)
                throw ResourceError("catalog page full");
            const PageId pid = entries.empty() ? 1 : entries.back() + 1;

            FrameGuard frame = pool_.create_page(pid);
            {
                XLatch x(*frame);
                const auto after = page::format_region_bytes(pid, /*catalog=*/false);
                const std::vector<std::uint8_t> before(after.size(), 0);
                tm_.log_update(st, *frame, page::kFormatRegionOffset, before, after);
            }
            std::vector<std::uint8_t> entry(8, 0);
            detail::put_u64(entry.data(), pid);
            const std::vector<std::uint8_t> before(8, 0);
            tm_.log_update(st, *cat,
                           static_cast<std::uint16_t>(page::catalog_entry_offset(entries.size())),
                           before, entry);
        });
        reload_catalog();
    }

    const Config& cfg_;
    TransactionManager& tm_;
    BufferPool& pool_;
    mutable std::mutex catalog_mtx_;
    std::mutex alloc_mtx_;
    std::vector<PageId> data_pages_;
};

}  // namespace credo
