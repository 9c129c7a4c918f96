#pragma once

#include <condition_variable>
#include <mutex>
#include <span>
#include <vector>

#include "credo/log_record.hpp"
#include "credo/types.hpp"
#include "credo/virtual_disk.hpp"

namespace credo {

// Append-only durable log. Space is reserved atomically, groups are copied
// into disjoint reserved ranges, and the durable watermark advances only at
// sync, always at a group boundary.
class PersistentLog {
  public:
    PersistentLog(VirtualDisk& disk, Stats& stats) : disk_(disk), stats_(stats) {
        end_offset_ = disk.synced_size();
        durable_.store(disk.synced_size());
    }

    Lsn reserve_space(std::uint64_t s) {
        if (s == 0) throw LogicError("zero-byte reservation");
        std::lock_guard g(reserve_mtx_);
        const Lsn at = end_offset_;
        end_offset_ += s;
        return at;
    }

    void write_group(Lsn base, std::span<const std::uint8_t> bytes) {
        disk_.write_log(base, bytes);
    }

    void sync_to(Lsn upto) {
        disk_.sync_log(upto);
        {
            std::lock_guard g(durable_mtx_);
            if (upto > durable_.load()) durable_.store(upto);
        }
        durable_cv_.notify_all();
    }

    Lsn durable_lsn() const { return durable_.load(); }
    Lsn end_offset() const {
        std::lock_guard g(reserve_mtx_);
        return end_offset_;
    }

    // Blocks until durable_lsn > l. Strictly greater: the watermark sits at
    // group boundaries, so anything above l implies l's whole group is down.
    void wait_durable_above(Lsn l) {
        std::unique_lock g(durable_mtx_);
        durable_cv_.wait(g, [&] { return durable_.load() > l || stopped_; });
        if (durable_.load() <= l) throw EngineStoppedError("log stopped before durability");
    }

    void stop() {
        {
            std::lock_guard g(durable_mtx_);
            stopped_ = true;
        }
        durable_cv_.notify_all();
    }

    LogRecord read_record(Lsn lsn) const {
        if (lsn == kNullLsn) throw LogicError("read_record(NULL_LSN)");
        if (lsn >= durable_.load()) throw LogicError("read_record beyond durable log");
        stats_.persistent_log_reads.fetch_add(1);
        auto head = disk_.read_log(lsn, LogRecordLayout::kFixedOverhead);
        if (head.size() < LogRecordLayout::kFixedOverhead)
            throw IntegrityError("record header out of range");
        const std::uint32_t total = detail::get_u32(head.data());
        auto bytes = disk_.read_log(lsn, total);
        auto rec = decode(bytes);
        if (!rec) throw IntegrityError("no valid record at offset");
        return *rec;
    }

    struct ScanResult {
        std::vector<std::pair<Lsn, LogRecord>> records;
        Lsn end = 0;  // byte after the last valid record
    };

    // Decodes records in offset order starting at a record boundary; stops
    // cleanly at a torn tail or at the durable end.
    ScanResult scan_from(Lsn start) const {
        ScanResult out;
        const Lsn limit = durable_.load();
        auto bytes = disk_.read_log(start, limit > start ? limit - start : 0);
        std::size_t pos = 0;
        out.end = start;
        while (pos < bytes.size()) {
            auto rec = decode(std::span<const std::uint8_t>(bytes).subspan(pos));
            if (!rec) break;  // torn tail
            const std::size_t size = rec->encoded_size();
            out.records.emplace_back(start + pos, *rec);
            pos += size;
            out.end = start + pos;
        }
        return out;
    }

    // Recovery resets both counters after chopping the torn tail.
    void reset_to(Lsn valid_end) {
        std::lock_guard g(reserve_mtx_);
        end_offset_ = valid_end;
        {
            std::lock_guard d(durable_mtx_);
            durable_.store(valid_end);
        }
    }

    VirtualDisk& disk() { return disk_; }

  private:
    VirtualDisk& disk_;
    Stats& stats_;
    mutable std::mutex reserve_mtx_;
    Lsn end_offset_ = 0;
    std::atomic<Lsn> durable_{0};
    mutable std::mutex durable_mtx_;
    std::condition_variable durable_cv_;
    bool stopped_ = false;
};

}  // namespace credo
