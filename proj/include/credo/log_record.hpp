#pragma once

#include <array>
#include <cstring>
#include <optional>
#include <span>
#include <vector>

#include "credo/types.hpp"

namespace credo {

enum class LogRecordType : std::uint8_t {
    Update = 1,
    Commit = 2,
    SystemCommit = 3,
    Checkpoint = 4,
};

inline bool is_commit_type(LogRecordType t) {
    return t == LogRecordType::Commit || t == LogRecordType::SystemCommit;
}

namespace detail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k)
                c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i)
        crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

inline void put_u16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v);
    p[1] = static_cast<std::uint8_t>(v >> 8);
}
inline void put_u32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline void put_u64(std::uint8_t* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
inline std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

// On-disk layout, little-endian, byte-packed (see docs/format.md):
//   [0]  total_len     u32
//   [4]  type          u8
//   [5]  txn_id        u64
//   [13] page_id       u64
//   [21] lsn           u64
//   [29] prev_page_lsn u64
//   [37] vlsn          u64   (always written as 0)
//   [45] undo_len      u16
//   [47] redo_len      u16
//   [49] undo_payload, redo_payload
//   [..] crc           u32   over all preceding bytes
struct LogRecordLayout {
    static constexpr std::size_t kTotalLen = 0;
    static constexpr std::size_t kType = 4;
    static constexpr std::size_t kTxnId = 5;
    static constexpr std::size_t kPageId = 13;
    static constexpr std::size_t kLsn = 21;
    static constexpr std::size_t kPrevPageLsn = 29;
    static constexpr std::size_t kVlsn = 37;
    static constexpr std::size_t kUndoLen = 45;
    static constexpr std::size_t kRedoLen = 47;
    static constexpr std::size_t kPayload = 49;
    static constexpr std::size_t kCrcLen = 4;
    static constexpr std::size_t kFixedOverhead = kPayload + kCrcLen;  // 53
};

struct LogRecord {
    LogRecordType type = LogRecordType::Update;
    TxnId txn_id = 0;
    PageId page_id = kNullPage;
    Lsn lsn = 0;                 // local offset before assignment, final LSN after
    Lsn prev_page_lsn = kNullLsn;
    Vlsn vlsn = 0;               // volatile only, encoded as zero
    std::vector<std::uint8_t> undo;  // 2-byte in-page offset prefix + image
    std::vector<std::uint8_t> redo;

    std::size_t encoded_size() const {
        return LogRecordLayout::kFixedOverhead + undo.size() + redo.size();
    }

    bool operator==(const LogRecord& o) const {
        return type == o.type && txn_id == o.txn_id && page_id == o.page_id &&
               lsn == o.lsn && prev_page_lsn == o.prev_page_lsn && vlsn == o.vlsn &&
               undo == o.undo && redo == o.redo;
    }
};

// Payloads of Update records: u16 in-page offset followed by the image bytes.
inline std::vector<std::uint8_t> make_image_payload(std::uint16_t page_offset,
                                                    std::span<const std::uint8_t> image) {
    std::vector<std::uint8_t> out(2 + image.size());
    detail::put_u16(out.data(), page_offset);
    std::memcpy(out.data() + 2, image.data(), image.size());
    return out;
}

inline std::uint16_t payload_page_offset(std::span<const std::uint8_t> payload) {
    if (payload.size() < 2) throw EncodingError("image payload too short");
    return detail::get_u16(payload.data());
}

inline std::span<const std::uint8_t> payload_image(std::span<const std::uint8_t> payload) {
    if (payload.size() < 2) throw EncodingError("image payload too short");
    return payload.subspan(2);
}

inline void encode_into(const LogRecord& rec, std::uint8_t* out) {
    namespace d = detail;
    using L = LogRecordLayout;
    if (rec.undo.size() > 0xFFFF || rec.redo.size() > 0xFFFF)
        throw EncodingError("payload exceeds 16-bit length field");
    const std::size_t total = rec.encoded_size();
    d::put_u32(out + L::kTotalLen, static_cast<std::uint32_t>(total));
    out[L::kType] = static_cast<std::uint8_t>(rec.type);
    d::put_u64(out + L::kTxnId, rec.txn_id);
    d::put_u64(out + L::kPageId, rec.page_id);
    d::put_u64(out + L::kLsn, rec.lsn);
    d::put_u64(out + L::kPrevPageLsn, rec.prev_page_lsn);
    d::put_u64(out + L::kVlsn, 0);  // never persisted
    d::put_u16(out + L::kUndoLen, static_cast<std::uint16_t>(rec.undo.size()));
    d::put_u16(out + L::kRedoLen, static_cast<std::uint16_t>(rec.redo.size()));
    std::memcpy(out + L::kPayload, rec.undo.data(), rec.undo.size());
    std::memcpy(out + L::kPayload + rec.undo.size(), rec.redo.data(), rec.redo.size());
    d::put_u32(out + total - L::kCrcLen, d::crc32(out, total - L::kCrcLen));
}

inline std::vector<std::uint8_t> encode(const LogRecord& rec) {
    std::vector<std::uint8_t> out(rec.encoded_size());
    encode_into(rec, out.data());
    return out;
}

// Rewrites the lsn and prev_page_lsn fields of an encoded record in place and
// refreshes the checksum. Used at commit time when final LSNs are assigned.
inline void patch_lsn_fields(std::span<std::uint8_t> bytes, Lsn lsn, Lsn prev_page_lsn) {
    namespace d = detail;
    using L = LogRecordLayout;
    d::put_u64(bytes.data() + L::kLsn, lsn);
    d::put_u64(bytes.data() + L::kPrevPageLsn, prev_page_lsn);
    d::put_u32(bytes.data() + bytes.size() - L::kCrcLen,
               d::crc32(bytes.data(), bytes.size() - L::kCrcLen));
}

// A decode failure is a value, not an error: any malformed or incomplete
// suffix is an unfinished tail to be truncated.
inline std::optional<LogRecord> decode(std::span<const std::uint8_t> bytes) {
    namespace d = detail;
    using L = LogRecordLayout;
    if (bytes.size() < L::kFixedOverhead) return std::nullopt;
    const std::uint32_t total = d::get_u32(bytes.data() + L::kTotalLen);
    if (total < L::kFixedOverhead || total > bytes.size()) return std::nullopt;
    const std::uint32_t crc = d::get_u32(bytes.data() + total - L::kCrcLen);
    if (crc != d::crc32(bytes.data(), total - L::kCrcLen)) return std::nullopt;
    const std::uint8_t type = bytes[L::kType];
    if (type < 1 || type > 4) return std::nullopt;
    const std::uint16_t undo_len = d::get_u16(bytes.data() + L::kUndoLen);
    const std::uint16_t redo_len = d::get_u16(bytes.data() + L::kRedoLen);
    if (L::kFixedOverhead + undo_len + redo_len != total) return std::nullopt;
    LogRecord rec;
    rec.type = static_cast<LogRecordType>(type);
    rec.txn_id = d::get_u64(bytes.data() + L::kTxnId);
    rec.page_id = d::get_u64(bytes.data() + L::kPageId);
    rec.lsn = d::get_u64(bytes.data() + L::kLsn);
    rec.prev_page_lsn = d::get_u64(bytes.data() + L::kPrevPageLsn);
    rec.vlsn = 0;
    rec.undo.assign(bytes.begin() + L::kPayload, bytes.begin() + L::kPayload + undo_len);
    rec.redo.assign(bytes.begin() + L::kPayload + undo_len,
                    bytes.begin() + L::kPayload + undo_len + redo_len);
    return rec;
}

}  // namespace credo
