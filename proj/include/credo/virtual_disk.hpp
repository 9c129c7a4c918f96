#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <memory>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "credo/types.hpp"

namespace credo {

using PageImage = std::array<std::uint8_t, kPageSize>;

inline constexpr std::uint64_t kNoCrash = ~static_cast<std::uint64_t>(0);

// Pure function of (seed, op-count): which write op crashes, and how many of
// the bytes pending at a torn log sync become durable.
struct FaultPlan {
    std::uint64_t crash_after_writes = kNoCrash;
    std::uint64_t seed = 0;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D4A885397149F5ull;
    return x ^ (x >> 31);
}
}  // namespace detail

// Simulated persistent store: page array + append-only log stream + master
// slot. Page writes are atomic and immediately durable; log bytes become
// durable only at sync, and a sync interrupted by the fault plan makes a
// seeded prefix of the pending bytes durable (the torn tail).
class VirtualDisk {
  public:
    explicit VirtualDisk(FaultPlan plan = {}) : plan_(plan) {}

    // --- engine-facing writes (count against the fault plan) ---

    void write_page(PageId pid, const PageImage& image) {
        std::lock_guard g(mtx_);
        begin_write_op();
        pages_[pid] = image;
        ++page_writes_;
    }

    // Fills log bytes at [offset, offset+size). Volatile until synced.
    void write_log(std::uint64_t offset, std::span<const std::uint8_t> bytes) {
        std::lock_guard g(mtx_);
        begin_write_op();
        if (offset < synced_)
            throw LogicError("write below the synced log watermark");
        if (log_.size() < offset + bytes.size()) log_.resize(offset + bytes.size());
        std::memcpy(log_.data() + offset, bytes.data(), bytes.size());
        ++log_writes_;
    }

    void sync_log(std::uint64_t upto) {
        std::lock_guard g(mtx_);
        if (crashed_) throw CrashInjected{};
        if (upto > log_.size()) throw LogicError("sync beyond written log bytes");
        if (ops_done_ == plan_.crash_after_writes) {
            // Torn sync: a seeded prefix of the pending bytes reaches the medium.
            if (upto > synced_) {
                const std::uint64_t pending = upto - synced_;
                const std::uint64_t torn =
                    detail::splitmix64(plan_.seed ^ ops_done_) % (pending + 1);
                synced_ += torn;
            }
            log_.resize(synced_);
            crashed_ = true;
            throw CrashInjected{};
        }
        ++ops_done_;
        if (upto > synced_) synced_ = upto;
        ++sync_count_;
    }

    void write_master(Lsn checkpoint_lsn) {
        std::lock_guard g(mtx_);
        begin_write_op();
        master_ = checkpoint_lsn;
    }

    // Recovery chops the torn tail; the watermark moves down with it.
    void truncate_log(std::uint64_t new_end) {
        std::lock_guard g(mtx_);
        begin_write_op();
        if (new_end > log_.size()) throw LogicError("truncate beyond log end");
        log_.resize(new_end);
        if (synced_ > new_end) synced_ = new_end;
    }

    // --- reads (never crash, never counted) ---

    std::optional<PageImage> read_page(PageId pid) const {
        std::lock_guard g(mtx_);
        auto it = pages_.find(pid);
        if (it == pages_.end()) return std::nullopt;
        return it->second;
    }

    Lsn read_master() const {
        std::lock_guard g(mtx_);
        return master_;
    }

    std::uint64_t log_size() const {
        std::lock_guard g(mtx_);
        return log_.size();
    }
    std::uint64_t synced_size() const {
        std::lock_guard g(mtx_);
        return synced_;
    }

    // Reads written log bytes (including not-yet-synced ones for scans by the
    // live engine; recovery only ever sees synced bytes because a crash
    // discards the rest).
    std::vector<std::uint8_t> read_log(std::uint64_t offset, std::uint64_t len) const {
        std::lock_guard g(mtx_);
        if (offset >= log_.size()) return {};
        len = std::min<std::uint64_t>(len, log_.size() - offset);
        return {log_.begin() + static_cast<std::ptrdiff_t>(offset),
                log_.begin() + static_cast<std::ptrdiff_t>(offset + len)};
    }

    std::vector<std::uint8_t> synced_log_bytes() const {
        std::lock_guard g(mtx_);
        return {log_.begin(), log_.begin() + static_cast<std::ptrdiff_t>(synced_)};
    }

    std::vector<PageId> page_ids() const {
        std::lock_guard g(mtx_);
        std::vector<PageId> ids;
        ids.reserve(pages_.size());
        for (auto& [pid, _] : pages_) ids.push_back(pid);
        return ids;
    }

    // --- crash control ---

    bool crashed() const {
        std::lock_guard g(mtx_);
        return crashed_;
    }

    // Clears the crashed flag so a new engine can be opened on the surviving
    // state. The volatile log tail was already discarded at the crash.
    void reopen_after_crash(FaultPlan next_plan = {}) {
        std::lock_guard g(mtx_);
        crashed_ = false;
        plan_ = next_plan;
    }

    void clear_fault_plan() {
        std::lock_guard g(mtx_);
        plan_ = {};
    }

    // --- instrumentation ---

    std::uint64_t write_ops() const { std::lock_guard g(mtx_); return ops_done_; }
    std::uint64_t sync_count() const { std::lock_guard g(mtx_); return sync_count_; }
    std::uint64_t page_write_count() const { std::lock_guard g(mtx_); return page_writes_; }
    std::uint64_t log_write_count() const { std::lock_guard g(mtx_); return log_writes_; }

    // --- serialization of the durable state (postmortem debugging) ---

    std::vector<std::uint8_t> serialize() const {
        std::lock_guard g(mtx_);
        std::vector<std::uint8_t> out;
        auto put64 = [&out](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        };
        out.insert(out.end(), {'C', 'R', 'E', 'D', 'O', 'D', 'S', 'K'});
        put64(1);  // format version
        put64(master_);
        put64(synced_);
        out.insert(out.end(), log_.begin(), log_.begin() + static_cast<std::ptrdiff_t>(synced_));
        put64(pages_.size());
        for (auto& [pid, image] : pages_) {
            put64(pid);
            out.insert(out.end(), image.begin(), image.end());
        }
        return out;
    }

    void save(const std::string& path) const {
        auto bytes = serialize();
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw ResourceError("cannot write disk image: " + path);
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
    }

    static std::unique_ptr<VirtualDisk> load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw ResourceError("cannot read disk image: " + path);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
        std::size_t pos = 0;
        auto get64 = [&bytes, &pos]() {
            if (pos + 8 > bytes.size()) throw EncodingError("truncated disk image");
            std::uint64_t v = 0;
            for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
            pos += 8;
            return v;
        };
        static const char magic[8] = {'C', 'R', 'E', 'D', 'O', 'D', 'S', 'K'};
        if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 8) != 0)
            throw EncodingError("not a disk image file");
        pos = 8;
        if (get64() != 1) throw EncodingError("unsupported disk image version");
        auto d = std::make_unique<VirtualDisk>();
        d->master_ = get64();
        d->synced_ = get64();
        if (pos + d->synced_ > bytes.size()) throw EncodingError("truncated disk image");
        d->log_.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + d->synced_));
        pos += d->synced_;
        const std::uint64_t n_pages = get64();
        for (std::uint64_t i = 0; i < n_pages; ++i) {
            const PageId pid = get64();
            if (pos + kPageSize > bytes.size()) throw EncodingError("truncated disk image");
            PageImage img;
            std::memcpy(img.data(), bytes.data() + pos, kPageSize);
            pos += kPageSize;
            d->pages_[pid] = img;
        }
        return d;
    }

  private:
    void begin_write_op() {
        if (crashed_) throw CrashInjected{};
        if (ops_done_ == plan_.crash_after_writes) {
            // Non-sync ops are atomic: the interrupted op simply never happens.
            log_.resize(synced_);
            crashed_ = true;
            throw CrashInjected{};
        }
        ++ops_done_;
    }

    mutable std::mutex mtx_;
    std::map<PageId, PageImage> pages_;
    std::vector<std::uint8_t> log_;
    std::uint64_t synced_ = 0;
    Lsn master_ = kNullLsn;
    FaultPlan plan_;
    bool crashed_ = false;
    std::uint64_t ops_done_ = 0;
    std::uint64_t sync_count_ = 0;
    std::uint64_t page_writes_ = 0;
    std::uint64_t log_writes_ = 0;
};

}  // namespace credo
