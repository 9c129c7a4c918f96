#pragma once

#include <cstring>
#include <optional>
#include <span>

#include "credo/log_record.hpp"
#include "credo/types.hpp"
#include "credo/virtual_disk.hpp"

namespace credo {

// 8 KiB page, fixed-cell slotted layout (see docs/format.md):
//   [0]  page_lsn_stored u64  (page_lsn + 1; 0 = no committed state)
//   [8]  page_id         u64
//   [16] slot_count      u16  (cell capacity, fixed at format time)
//   [18] free_offset     u16  (first cell byte, fixed at format time)
//   [20] cells           slot_count * 515 bytes
// Cell: [flag u8][len u16][data 512]; flag 0 = never used, 1 = live,
// 2 = tombstone. Tombstoned cells are not reused.
// The catalog page (page 0) uses the same header with slot_count = 0 and a
// packed array of u64 page ids at [20..]; a zero entry terminates the list.
namespace page {

inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::size_t kCellDataSize = 512;
inline constexpr std::size_t kCellSize = 1 + 2 + kCellDataSize;
inline constexpr std::uint16_t kCellsPerPage =
    static_cast<std::uint16_t>((kPageSize - kHeaderSize) / kCellSize);
inline constexpr std::size_t kCatalogCapacity = (kPageSize - kHeaderSize) / 8;

inline constexpr std::uint8_t kCellFree = 0;
inline constexpr std::uint8_t kCellLive = 1;
inline constexpr std::uint8_t kCellTombstone = 2;

inline std::uint64_t stored_lsn(const PageImage& p) { return detail::get_u64(p.data()); }
inline void set_stored_lsn(PageImage& p, std::uint64_t stored) { detail::put_u64(p.data(), stored); }
inline std::optional<Lsn> page_lsn(const PageImage& p) {
    const auto s = stored_lsn(p);
    if (s == kVirginStoredLsn) return std::nullopt;
    return from_stored_lsn(s);
}
inline PageId page_id(const PageImage& p) { return detail::get_u64(p.data() + 8); }
inline std::uint16_t slot_count(const PageImage& p) { return detail::get_u16(p.data() + 16); }
inline std::uint16_t free_offset(const PageImage& p) { return detail::get_u16(p.data() + 18); }

inline std::size_t cell_offset(std::uint16_t slot) { return kHeaderSize + std::size_t{slot} * kCellSize; }

inline std::uint8_t cell_flag(const PageImage& p, std::uint16_t slot) {
    return p[cell_offset(slot)];
}
inline std::uint16_t cell_len(const PageImage& p, std::uint16_t slot) {
    return detail::get_u16(p.data() + cell_offset(slot) + 1);
}
inline std::span<const std::uint8_t> cell_data(const PageImage& p, std::uint16_t slot) {
    return {p.data() + cell_offset(slot) + 3, cell_len(p, slot)};
}
inline std::span<const std::uint8_t> cell_bytes(const PageImage& p, std::uint16_t slot) {
    return {p.data() + cell_offset(slot), kCellSize};
}

// Cell after-images for the three mutations; unused data bytes are zeroed so
// images are deterministic.
inline std::vector<std::uint8_t> make_live_cell(std::span<const std::uint8_t> payload) {
    std::vector<std::uint8_t> cell(kCellSize, 0);
    cell[0] = kCellLive;
    detail::put_u16(cell.data() + 1, static_cast<std::uint16_t>(payload.size()));
    std::memcpy(cell.data() + 3, payload.data(), payload.size());
    return cell;
}
inline std::vector<std::uint8_t> make_tombstone_cell() {
    std::vector<std::uint8_t> cell(kCellSize, 0);
    cell[0] = kCellTombstone;
    return cell;
}

// The format region covers [8, 20): page_id and the geometry fields. The
// page_lsn field at [0, 8) is deliberately outside every logged image; it is
// maintained only by LSN assignment and by recovery.
inline constexpr std::uint16_t kFormatRegionOffset = 8;

inline std::vector<std::uint8_t> format_region_bytes(PageId pid, bool catalog) {
    std::vector<std::uint8_t> out(12, 0);
    detail::put_u64(out.data(), pid);
    detail::put_u16(out.data() + 8, catalog ? 0 : kCellsPerPage);
    detail::put_u16(out.data() + 10, static_cast<std::uint16_t>(kHeaderSize));
    return out;
}

// Catalog entries.
inline std::size_t catalog_entry_offset(std::size_t index) { return kHeaderSize + index * 8; }
inline PageId catalog_entry(const PageImage& p, std::size_t index) {
    return detail::get_u64(p.data() + catalog_entry_offset(index));
}
inline std::vector<PageId> catalog_entries(const PageImage& p) {
    std::vector<PageId> out;
    for (std::size_t i = 0; i < kCatalogCapacity; ++i) {
        const PageId pid = catalog_entry(p, i);
        if (pid == 0) break;
        out.push_back(pid);
    }
    return out;
}

// Applies an offset-prefixed physical image to a page buffer.
inline void apply_image(PageImage& p, std::span<const std::uint8_t> payload) {
    const std::uint16_t off = payload_page_offset(payload);
    const auto image = payload_image(payload);
    if (off + image.size() > kPageSize) throw IntegrityError("image outside page bounds");
    if (off < 8 && !image.empty()) throw IntegrityError("image overlaps the page_lsn field");
    std::memcpy(p.data() + off, image.data(), image.size());
}

}  // namespace page

struct RecordId {
    PageId page = kNullPage;
    std::uint16_t slot = 0;

    bool operator==(const RecordId&) const = default;
    auto operator<=>(const RecordId&) const = default;
};

struct RecordIdHash {
    std::size_t operator()(const RecordId& r) const {
        return std::hash<std::uint64_t>{}(r.page * 1000003u + r.slot);
    }
};

}  // namespace credo
