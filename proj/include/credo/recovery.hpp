#pragma once

#include <map>
#include <vector>

#include "credo/buffer_pool.hpp"
#include "credo/persistent_log.hpp"
#include "credo/propagation.hpp"
#include "credo/types.hpp"

namespace credo {

struct AnalysisResult {
    Lsn redo_start = 0;
    std::map<PageId, Lsn> in_doubt;  // page -> earliest LSN that may need redo
    Lsn valid_end = 0;               // byte after the last intact committed group
    Lsn checkpoint_lsn = kNullLsn;
};

// Restart is log analysis plus a REDO pass; there is nothing to undo because
// losers never reach persistent storage.
class Recovery {
  public:
    Recovery(Stats& stats, VirtualDisk& disk, PersistentLog& plog, BufferPool& pool,
             Propagation& prop)
        : stats_(stats), disk_(disk), plog_(plog), pool_(pool), prop_(prop) {}

    AnalysisResult analyze() const { return analyze_disk(disk_); }

    // Read-only. Scans forward from the master checkpoint, truncating at the
    // torn tail; a trailing group without its commit record is the only loser
    // shape atomic copy can produce, and anything else is corruption.
    static AnalysisResult analyze_disk(const VirtualDisk& disk) {
        AnalysisResult out;
        const std::uint64_t log_end = disk.synced_size();

        Lsn start = 0;
        const Lsn master = disk.read_master();
        if (master != kNullLsn && master < log_end) {
            auto head = disk.read_log(master, LogRecordLayout::kFixedOverhead);
            if (head.size() == LogRecordLayout::kFixedOverhead) {
                const std::uint32_t total = detail::get_u32(head.data());
                auto bytes = disk.read_log(master, total);
                auto rec = decode(bytes);
                if (rec && rec->type == LogRecordType::Checkpoint) {
                    start = master;
                    out.checkpoint_lsn = master;
                }
            }
        }

        out.valid_end = start;
        TxnId group_txn = 0;
        bool in_group = false;
        std::vector<std::pair<PageId, Lsn>> pending_updates;
        std::vector<std::pair<PageId, Lsn>> pending_checkpoint;

        auto bytes = disk.read_log(start, log_end - start);
        std::size_t pos = 0;
        while (pos < bytes.size()) {
            auto rec = decode(std::span<const std::uint8_t>(bytes).subspan(pos));
            if (!rec) break;  // torn tail
            const Lsn lsn = start + pos;
            pos += rec->encoded_size();

            if (!in_group) {
                group_txn = rec->txn_id;
                in_group = true;
            } else if (rec->txn_id != group_txn) {
                throw IntegrityError("interleaved record groups in the persistent log");
            }

            switch (rec->type) {
                case LogRecordType::Update:
                    pending_updates.emplace_back(rec->page_id, lsn);
                    break;
                case LogRecordType::Checkpoint:
                    for (auto& e : decode_checkpoint_entries(rec->redo))
                        pending_checkpoint.push_back(e);
                    break;
                case LogRecordType::Commit:
                case LogRecordType::SystemCommit:
                    for (auto& [pid, l] : pending_updates) {
                        auto it = out.in_doubt.find(pid);
                        if (it == out.in_doubt.end() || l < it->second) out.in_doubt[pid] = l;
                    }
                    for (auto& [pid, bound] : pending_checkpoint) {
                        auto it = out.in_doubt.find(pid);
                        if (it == out.in_doubt.end() || bound < it->second)
                            out.in_doubt[pid] = bound;
                    }
                    pending_updates.clear();
                    pending_checkpoint.clear();
                    in_group = false;
                    out.valid_end = start + pos;
                    break;
            }
        }
        // Whatever is left past valid_end is the torn tail: either undecodable
        // bytes or a commit-less trailing group. Both are losers.

        out.redo_start = out.valid_end;
        for (auto& [pid, l] : out.in_doubt) out.redo_start = std::min(out.redo_start, l);
        return out;
    }

    void redo(const AnalysisResult& a) {
        if (a.in_doubt.empty()) return;
        auto scan = plog_scan(a.redo_start, a.valid_end);
        for (auto& [lsn, rec] : scan) {
            if (rec.type != LogRecordType::Update) continue;
            auto it = a.in_doubt.find(rec.page_id);
            if (it == a.in_doubt.end() || lsn < it->second) continue;
            FrameGuard frame = pool_.fetch_for_redo(rec.page_id);
            XLatch x(*frame);
            const auto stored = frame->stored_lsn();
            const bool apply = stored == kVirginStoredLsn || lsn > from_stored_lsn(stored);
            if (!apply) continue;  // exact-state rule: already reflected
            const Lsn expect_prev =
                stored == kVirginStoredLsn ? kNullLsn : from_stored_lsn(stored);
            if (rec.prev_page_lsn != expect_prev)
                throw IntegrityError("page LSN inconsistent with its log chain");
            page::apply_image(frame->image(), rec.redo);
            frame->set_stored_lsn(to_stored_lsn(lsn));
            stats_.redo_ops.fetch_add(1);
        }
    }

    // Full restart: analyze, redo, chop the tail, re-propagate, checkpoint.
    AnalysisResult restart() {
        const AnalysisResult a = analyze();
        redo(a);
        if (a.valid_end < disk_.synced_size()) disk_.truncate_log(a.valid_end);
        plog_.reset_to(a.valid_end);
        prop_.flush_all();
        prop_.take_checkpoint();
        return a;
    }

  private:
    std::vector<std::pair<Lsn, LogRecord>> plog_scan(Lsn from, Lsn until) const {
        std::vector<std::pair<Lsn, LogRecord>> out;
        auto bytes = disk_.read_log(from, until > from ? until - from : 0);
        std::size_t pos = 0;
        while (pos < bytes.size()) {
            auto rec = decode(std::span<const std::uint8_t>(bytes).subspan(pos));
            if (!rec) break;
            out.emplace_back(from + pos, *rec);
            pos += rec->encoded_size();
        }
        return out;
    }

    Stats& stats_;
    VirtualDisk& disk_;
    PersistentLog& plog_;
    BufferPool& pool_;
    Propagation& prop_;
};

}  // namespace credo
