#pragma once

#include <iomanip>
#include <ostream>

#include "credo/log_record.hpp"
#include "credo/types.hpp"
#include "credo/virtual_disk.hpp"

namespace credo {

inline const char* to_string(LogRecordType t) {
    switch (t) {
        case LogRecordType::Update: return "UPDATE";
        case LogRecordType::Commit: return "COMMIT";
        case LogRecordType::SystemCommit: return "SYSCOMMIT";
        case LogRecordType::Checkpoint: return "CHECKPOINT";
    }
    return "?";
}

// Human-readable rendering of the persistent log, one line per record, with
// blank lines between committed groups and a marker at the torn tail.
inline void dump_log(const VirtualDisk& disk, std::ostream& os) {
    const auto bytes = disk.synced_log_bytes();
    os << "log size " << bytes.size() << " bytes, master checkpoint ";
    if (disk.read_master() == kNullLsn)
        os << "none";
    else
        os << disk.read_master();
    os << "\n";
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        auto rec = decode(std::span<const std::uint8_t>(bytes).subspan(pos));
        if (!rec) {
            os << "lsn " << pos << ": torn tail (" << bytes.size() - pos << " bytes)\n";
            return;
        }
        os << "lsn " << pos << ": " << to_string(rec->type) << " txn " << rec->txn_id;
        if (rec->page_id != kNullPage) {
            os << " page " << rec->page_id << " prev ";
            if (rec->prev_page_lsn == kNullLsn)
                os << "-";
            else
                os << rec->prev_page_lsn;
        }
        if (!rec->undo.empty() || !rec->redo.empty())
            os << " undo " << rec->undo.size() << "B redo " << rec->redo.size() << "B";
        os << "\n";
        if (is_commit_type(rec->type)) os << "\n";
        pos += rec->encoded_size();
    }
}

}  // namespace credo
