#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <thread>
#include <unordered_map>
#include <vector>

#include "credo/page.hpp"
#include "credo/types.hpp"
#include "credo/virtual_disk.hpp"

namespace credo {

inline constexpr std::uint64_t kNeverPropagated = ~static_cast<std::uint64_t>(0);

// A resident page plus its control data. The stored-LSN mirror duplicates the
// header field so state checks need no latch; writers keep both in sync under
// the exclusive latch.
class BufferFrame {
  public:
    PageId pid() const { return pid_; }
    PageImage& image() { return image_; }
    const PageImage& image() const { return image_; }

    std::uint64_t stored_lsn() const { return stored_lsn_mirror_.load(); }
    std::optional<Lsn> page_lsn() const {
        const auto s = stored_lsn();
        if (s == kVirginStoredLsn) return std::nullopt;
        return from_stored_lsn(s);
    }
    void set_stored_lsn(std::uint64_t stored) {
        page::set_stored_lsn(image_, stored);
        stored_lsn_mirror_.store(stored);
    }

    Vlsn page_vlsn() const { return page_vlsn_.load(); }
    void set_page_vlsn(Vlsn v) { page_vlsn_.store(v); }

    std::uint64_t propagated_stored() const { return propagated_stored_.load(); }
    void set_propagated_stored(std::uint64_t s) { propagated_stored_.store(s); }

    // Fig-style state predicates.
    bool is_propagated() const { return propagated_stored() == stored_lsn(); }
    bool is_committed() const { return uncommitted_.load() == 0; }
    std::uint32_t uncommitted_records() const { return uncommitted_.load(); }
    void add_uncommitted(std::int32_t delta) {
        uncommitted_.fetch_add(static_cast<std::uint32_t>(delta));
    }

    void latch_shared() { latch_.lock_shared(); }
    void unlatch_shared() { latch_.unlock_shared(); }
    void latch_exclusive() {
        latch_.lock();
        x_owner_.store(std::this_thread::get_id());
    }
    void unlatch_exclusive() {
        x_owner_.store(std::thread::id{});
        latch_.unlock();
    }
    bool latched_exclusive_by_me() const {
        return x_owner_.load() == std::this_thread::get_id();
    }

    std::uint32_t pins() const { return pin_.load(); }

  private:
    friend class BufferPool;
    friend class FrameGuard;

    PageId pid_ = kNullPage;
    PageImage image_{};
    std::atomic<std::uint64_t> stored_lsn_mirror_{kVirginStoredLsn};
    std::atomic<Vlsn> page_vlsn_{0};
    std::atomic<std::uint64_t> propagated_stored_{kNeverPropagated};
    std::atomic<std::uint32_t> uncommitted_{0};
    std::atomic<std::uint32_t> pin_{0};
    std::shared_mutex latch_;
    std::atomic<std::thread::id> x_owner_{};
    bool in_use_ = false;
    bool ref_bit_ = false;
};

// Pins a frame for the guard's lifetime.
class FrameGuard {
  public:
    FrameGuard() = default;
    FrameGuard(BufferFrame* f) : frame_(f) {}
    FrameGuard(FrameGuard&& o) noexcept : frame_(o.frame_) { o.frame_ = nullptr; }
    FrameGuard& operator=(FrameGuard&& o) noexcept {
        release();
        frame_ = o.frame_;
        o.frame_ = nullptr;
        return *this;
    }
    FrameGuard(const FrameGuard&) = delete;
    FrameGuard& operator=(const FrameGuard&) = delete;
    ~FrameGuard() { release(); }

    explicit operator bool() const { return frame_ != nullptr; }
    BufferFrame* operator->() const { return frame_; }
    BufferFrame& operator*() const { return *frame_; }
    BufferFrame* get() const { return frame_; }

    void release() {
        if (frame_) {
            frame_->pin_.fetch_sub(1);
            frame_ = nullptr;
        }
    }

  private:
    BufferFrame* frame_ = nullptr;
};

// Scoped exclusive latch.
class XLatch {
  public:
    explicit XLatch(BufferFrame& f) : f_(&f) { f_->latch_exclusive(); }
    ~XLatch() { unlock(); }
    XLatch(const XLatch&) = delete;
    void unlock() {
        if (f_) {
            f_->unlatch_exclusive();
            f_ = nullptr;
        }
    }

  private:
    BufferFrame* f_;
};

class SLatch {
  public:
    explicit SLatch(BufferFrame& f) : f_(&f) { f_->latch_shared(); }
    ~SLatch() { unlock(); }
    SLatch(const SLatch&) = delete;
    void unlock() {
        if (f_) {
            f_->unlatch_shared();
            f_ = nullptr;
        }
    }

  private:
    BufferFrame* f_;
};

// Fixed-size frame cache with clock replacement. Frames holding un-undone
// records of live transactions are never victims: the committed copy a flush
// writes could not be reconstructed after a premature eviction.
class BufferPool {
  public:
    BufferPool(VirtualDisk& disk, std::uint32_t frames, Stats& stats)
        : disk_(disk), stats_(stats) {
        frames_.reserve(frames);
        for (std::uint32_t i = 0; i < frames; ++i) frames_.push_back(std::make_unique<BufferFrame>());
    }

    // Called with the page id of an unpropagated victim; must flush it.
    void set_flush_hook(std::function<void(PageId)> hook) { flush_hook_ = std::move(hook); }

    FrameGuard fetch(PageId pid) {
        return fetch_impl(pid, /*create=*/false, /*for_redo=*/false);
    }

    // Recovery fetch: an absent disk page materializes as a virgin frame.
    FrameGuard fetch_for_redo(PageId pid) {
        return fetch_impl(pid, /*create=*/false, /*for_redo=*/true);
    }

    // A system transaction materializes a brand-new page in the pool; nothing
    // exists on disk until propagation.
    FrameGuard create_page(PageId pid) {
        return fetch_impl(pid, /*create=*/true, /*for_redo=*/false);
    }

    FrameGuard lookup(PageId pid) {
        std::lock_guard g(table_mtx_);
        auto it = table_.find(pid);
        if (it == table_.end()) return {};
        BufferFrame* f = frames_[it->second].get();
        f->pin_.fetch_add(1);
        f->ref_bit_ = true;
        return FrameGuard(f);
    }

    bool resident(PageId pid) const {
        std::lock_guard g(table_mtx_);
        return table_.count(pid) != 0;
    }

    // Evicts one specific page (tests); normal eviction happens inside fetch.
    void evict(PageId pid) {
        std::unique_lock g(table_mtx_);
        auto it = table_.find(pid);
        if (it == table_.end()) return;
        BufferFrame* f = frames_[it->second].get();
        if (f->pins() > 0) throw LogicError("evicting a pinned frame");
        if (!f->is_committed()) throw LogicError("evicting an uncommitted frame");
        if (!f->is_propagated() && f->stored_lsn() != kVirginStoredLsn) {
            g.unlock();
            flush_hook_(pid);
            g.lock();
            it = table_.find(pid);
            if (it == table_.end()) return;
            f = frames_[it->second].get();
            if (f->pins() > 0 || !f->is_committed() || !f->is_propagated())
                throw LogicError("frame changed during eviction");
        }
        f->in_use_ = false;
        table_.erase(it);
        stats_.evictions.fetch_add(1);
    }

    template <typename Fn>
    void for_each_resident(Fn&& fn) {
        std::lock_guard g(table_mtx_);
        for (auto& [pid, idx] : table_) fn(*frames_[idx]);
    }

    std::size_t resident_count() const {
        std::lock_guard g(table_mtx_);
        return table_.size();
    }

  private:
    FrameGuard fetch_impl(PageId pid, bool create, bool for_redo) {
        std::unique_lock g(table_mtx_);
        auto it = table_.find(pid);
        if (it != table_.end()) {
            if (create) throw LogicError("create of a resident page");
            BufferFrame* f = frames_[it->second].get();
            f->pin_.fetch_add(1);
            f->ref_bit_ = true;
            return FrameGuard(f);
        }
        std::optional<PageImage> img;
        if (!create) {
            img = disk_.read_page(pid);
            if (!img && !for_redo) throw NotFoundError("page not on disk");
        }
        if (create && disk_.read_page(pid)) throw LogicError("create of an existing page");

        const std::size_t idx = find_victim_slot(g);
        BufferFrame* f = frames_[idx].get();
        f->pid_ = pid;
        f->in_use_ = true;
        f->ref_bit_ = true;
        f->page_vlsn_.store(0);
        f->uncommitted_.store(0);
        if (img) {
            f->image_ = *img;
            f->stored_lsn_mirror_.store(page::stored_lsn(f->image_));
            // Freshly fetched frames are committed and propagated.
            f->propagated_stored_.store(page::stored_lsn(f->image_));
        } else {
            f->image_.fill(0);
            f->stored_lsn_mirror_.store(kVirginStoredLsn);
            f->propagated_stored_.store(kNeverPropagated);
        }
        table_[pid] = idx;
        f->pin_.fetch_add(1);
        return FrameGuard(f);
    }

    // Clock sweep; assumes table_mtx_ held. May drop the lock to flush an
    // unpropagated victim through the hook.
    std::size_t find_victim_slot(std::unique_lock<std::mutex>& g) {
        for (std::size_t i = 0; i < frames_.size(); ++i)
            if (!frames_[i]->in_use_) return i;
        for (int rounds = 0; rounds < 3; ++rounds) {
            for (std::size_t step = 0; step < 2 * frames_.size(); ++step) {
                const std::size_t idx = clock_hand_;
                clock_hand_ = (clock_hand_ + 1) % frames_.size();
                BufferFrame* f = frames_[idx].get();
                if (f->pins() > 0 || !f->is_committed()) continue;
                if (f->ref_bit_) {
                    f->ref_bit_ = false;
                    continue;
                }
                if (!f->is_propagated() && f->stored_lsn() != kVirginStoredLsn) {
                    const PageId victim = f->pid_;
                    f->pin_.fetch_add(1);
                    g.unlock();
                    try {
                        flush_hook_(victim);
                    } catch (...) {
                        g.lock();
                        f->pin_.fetch_sub(1);
                        throw;
                    }
                    g.lock();
                    f->pin_.fetch_sub(1);
                    if (f->pins() > 0 || !f->is_committed() || !f->is_propagated() ||
                        f->pid_ != victim)
                        continue;
                }
                table_.erase(f->pid_);
                f->in_use_ = false;
                stats_.evictions.fetch_add(1);
                return idx;
            }
        }
        throw ResourceError("buffer pool exhausted: no evictable frame");
    }

    VirtualDisk& disk_;
    Stats& stats_;
    std::vector<std::unique_ptr<BufferFrame>> frames_;
    mutable std::mutex table_mtx_;
    std::unordered_map<PageId, std::size_t> table_;
    std::size_t clock_hand_ = 0;
    std::function<void(PageId)> flush_hook_ = [](PageId) {
        throw LogicError("flush hook not wired");
    };
};

}  // namespace credo
