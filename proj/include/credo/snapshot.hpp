#pragma once

#include <map>
#include <shared_mutex>
#include <unordered_map>
#include <unordered_set>

#include "credo/buffer_pool.hpp"
#include "credo/persistent_log.hpp"
#include "credo/types.hpp"
#include "credo/volatile_log_manager.hpp"

namespace credo {

// Reconstructs committed page states as of an arbitrary LSN: the current
// committed copy via single-page rollback, then the persistent per-page
// chain walked downwards until a record with LSN lower than the travel
// point is reached. Readers take only page latches for the copy instant,
// never record locks.
class TimeTravel {
  public:
    TimeTravel(VolatileLogManager& vlm, PersistentLog& plog, BufferPool& pool,
               VirtualDisk& disk, std::shared_mutex& coord)
        : vlm_(vlm), plog_(plog), pool_(pool), disk_(disk), coord_(coord) {}

    PageImage fix_at(PageId pid, Lsn l) const {
        if (l > plog_.durable_lsn()) throw LogicError("fix_at beyond the durable log");

        PageImage copy;
        std::uint64_t copy_stored = kVirginStoredLsn;
        // lsn -> prev link for records undone from volatile candidates; the
        // chain walk must skip them without touching the log (they may not be
        // synced, or even written, yet).
        std::map<Lsn, Lsn> undone_links;

        FrameGuard frame = pool_.lookup(pid);
        if (frame) {
            std::shared_lock coord(coord_);
            Vlsn copy_vlsn;
            {
                SLatch s(*frame);
                copy = frame->image();
                copy_stored = frame->stored_lsn();
                copy_vlsn = frame->page_vlsn();
            }
            auto candidates = vlm_.collect_undo_candidates(pid, copy_vlsn);

            // A transaction's records are kept only as a whole group with all
            // LSNs assigned and at or below l; anything else is rolled back.
            std::unordered_map<TxnId, bool> keep;
            for (const auto& c : candidates) {
                if (c.log_state == TxnState::Aborted || c.undone) continue;
                auto [it, fresh] = keep.try_emplace(c.txn_id, true);
                if (!c.lsn_assigned || c.rec.lsn >= l) it->second = false;
            }
            for (const auto& c : candidates) {
                if (c.log_state == TxnState::Aborted || c.undone) continue;
                if (keep.at(c.txn_id)) continue;
                page::apply_image(copy, c.rec.undo);
                if (c.lsn_assigned) undone_links[c.rec.lsn] = c.rec.prev_page_lsn;
            }
        } else {
            auto img = disk_.read_page(pid);
            if (!img) {
                // Nothing was ever propagated; at or below l the page is in
                // its initial state.
                copy.fill(0);
                return copy;
            }
            copy = *img;
            copy_stored = page::stored_lsn(copy);
        }

        // Chain walk: undo every record above l, descending prev links.
        Lsn chain = copy_stored == kVirginStoredLsn ? kNullLsn : from_stored_lsn(copy_stored);
        TxnId last_undone_txn = 0;
        bool walked = false;
        auto descend_undone = [&] {
            while (chain != kNullLsn) {
                auto it = undone_links.find(chain);
                if (it == undone_links.end()) break;
                chain = it->second;
            }
        };
        descend_undone();
        while (chain != kNullLsn && chain >= l) {
            const LogRecord rec = plog_.read_record(chain);
            if (rec.page_id != pid) throw IntegrityError("per-page chain leads to a foreign page");
            page::apply_image(copy, rec.undo);
            last_undone_txn = rec.txn_id;
            walked = true;
            chain = rec.prev_page_lsn;
            descend_undone();
        }
        // Boundary group rule: if the first record below l belongs to the
        // transaction just rolled back, its whole adjacent run straddles l
        // and must go too.
        if (walked) {
            while (chain != kNullLsn) {
                const LogRecord rec = plog_.read_record(chain);
                if (rec.txn_id != last_undone_txn) break;
                page::apply_image(copy, rec.undo);
                chain = rec.prev_page_lsn;
            }
        }
        page::set_stored_lsn(copy, chain == kNullLsn ? kVirginStoredLsn : to_stored_lsn(chain));
        return copy;
    }

    Lsn durable_lsn() const { return plog_.durable_lsn(); }

  private:
    VolatileLogManager& vlm_;
    PersistentLog& plog_;
    BufferPool& pool_;
    VirtualDisk& disk_;
    std::shared_mutex& coord_;
};

// A reader's fixed view: every page access resolves at the LSN observed at
// begin, cached per page.
class SnapshotHandle {
  public:
    SnapshotHandle(const TimeTravel& tt, Lsn as_of) : tt_(tt), as_of_(as_of) {}

    Lsn as_of() const { return as_of_; }

    const PageImage& page(PageId pid) {
        auto it = cache_.find(pid);
        if (it != cache_.end()) return it->second;
        auto [ins, _] = cache_.emplace(pid, tt_.fix_at(pid, as_of_));
        return ins->second;
    }

  private:
    const TimeTravel& tt_;
    Lsn as_of_;
    std::unordered_map<PageId, PageImage> cache_;
};

}  // namespace credo
