#pragma once

#include <chrono>
#include <cstdint>
#include <atomic>
#include <stdexcept>
#include <string>

namespace credo {

using Lsn = std::uint64_t;     // byte offset into the persistent log
using Vlsn = std::uint64_t;    // volatile ticket from the global counter
using PageId = std::uint64_t;
using TxnId = std::uint64_t;

inline constexpr Lsn kNullLsn = ~static_cast<Lsn>(0);
inline constexpr PageId kNullPage = ~static_cast<PageId>(0);
inline constexpr std::size_t kPageSize = 8192;

// Page headers store page_lsn + 1 so that 0 means "no committed state yet";
// a raw 0 is a valid byte offset (the first record in the log).
inline constexpr std::uint64_t kVirginStoredLsn = 0;
inline std::uint64_t to_stored_lsn(Lsn lsn) { return lsn + 1; }
inline Lsn from_stored_lsn(std::uint64_t stored) { return stored - 1; }

enum class TxnState : std::uint8_t { Active, Committing, Committed, Aborting, Aborted };

inline const char* to_string(TxnState s) {
    switch (s) {
        case TxnState::Active: return "Active";
        case TxnState::Committing: return "Committing";
        case TxnState::Committed: return "Committed";
        case TxnState::Aborting: return "Aborting";
        case TxnState::Aborted: return "Aborted";
    }
    return "?";
}

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LogicError : Error { using Error::Error; };
struct ResourceError : Error { using Error::Error; };
struct NotFoundError : Error { using Error::Error; };
struct LockTimeoutError : Error { using Error::Error; };
struct IntegrityError : Error { using Error::Error; };
struct EncodingError : Error { using Error::Error; };
struct EngineStoppedError : Error { using Error::Error; };

// Thrown by the virtual disk when the configured fault plan fires, and by any
// engine entry point afterwards. Unwinds worker and daemon threads.
struct CrashInjected : std::exception {
    const char* what() const noexcept override { return "injected crash"; }
};

struct Config {
    std::uint32_t pool_frames = 1024;
    std::uint32_t extent_size = 64 * 1024;
    std::uint32_t max_extents = 4096;
    std::chrono::microseconds group_commit_window{1000};
    std::uint32_t max_commit_batch = 64;
    std::chrono::milliseconds lock_timeout{500};
    std::uint32_t checkpoint_interval = 256;  // commits between automatic checkpoints
    std::chrono::microseconds spr_wait{0};
    // Deterministic mode: commits run inline on the caller thread and no
    // daemon threads are started; the harness drives cleaning explicitly.
    bool inline_commit = false;
    bool start_cleaner = true;
    std::chrono::microseconds cleaner_interval{500};
    std::uint32_t cleaner_budget = 8;
};

struct Stats {
    std::atomic<std::uint64_t> commits{0};
    std::atomic<std::uint64_t> aborts{0};
    std::atomic<std::uint64_t> system_commits{0};
    std::atomic<std::uint64_t> pages_flushed{0};
    std::atomic<std::uint64_t> flush_abandons{0};
    std::atomic<std::uint64_t> spr_undos{0};
    std::atomic<std::uint64_t> checkpoints{0};
    std::atomic<std::uint64_t> persistent_log_reads{0};
    std::atomic<std::uint64_t> undo_ops_during_recovery{0};
    std::atomic<std::uint64_t> redo_ops{0};
    std::atomic<std::uint64_t> lock_acquires{0};
    std::atomic<std::uint64_t> evictions{0};
};

}  // namespace credo
