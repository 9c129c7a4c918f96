#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>

#include "credo/log_record.hpp"
#include "credo/oracle.hpp"
#include "credo/page.hpp"
#include "credo/virtual_disk.hpp"

using namespace credo;

namespace {

std::string hex(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

std::string read_golden(const std::string& name) {
    std::ifstream f(std::string(CREDO_GOLDEN_DIR) + "/" + name);
    REQUIRE(f.good());
    std::string out;
    f >> out;
    return out;
}

LogRecord sample_update() {
    LogRecord rec;
    rec.type = LogRecordType::Update;
    rec.txn_id = 7;
    rec.page_id = 4711;
    rec.lsn = 100;
    rec.prev_page_lsn = 40;
    rec.undo = make_image_payload(32, std::vector<std::uint8_t>{0xAA, 0xBB, 0xCC, 0xDD});
    rec.redo = make_image_payload(32, std::vector<std::uint8_t>{0x11, 0x22, 0x33, 0x44});
    return rec;
}

LogRecord random_record(std::mt19937_64& rng) {
    LogRecord rec;
    const auto t = rng() % 4;
    rec.type = static_cast<LogRecordType>(t + 1);
    rec.txn_id = rng();
    if (rec.type == LogRecordType::Update) {
        rec.page_id = rng() % 1000;
        std::vector<std::uint8_t> img(rng() % 64 + 1);
        for (auto& b : img) b = static_cast<std::uint8_t>(rng());
        rec.undo = make_image_payload(static_cast<std::uint16_t>(rng() % 8000), img);
        for (auto& b : img) b = static_cast<std::uint8_t>(rng());
        rec.redo = make_image_payload(static_cast<std::uint16_t>(rng() % 8000), img);
    } else {
        rec.page_id = kNullPage;
        if (rec.type == LogRecordType::Checkpoint) {
            std::vector<std::uint8_t> list(16 * (rng() % 4));
            for (auto& b : list) b = static_cast<std::uint8_t>(rng());
            rec.redo = list;
        }
    }
    rec.lsn = rng() % 100000;
    rec.prev_page_lsn = rng() % 2 ? kNullLsn : rng() % 100000;
    return rec;
}

}  // namespace

TEST_CASE("record sizes follow the field-width arithmetic") {
    // Independent sum of the documented field widths.
    const std::size_t header = 4 + 1 + 8 + 8 + 8 + 8 + 8 + 2 + 2;
    const std::size_t fixed = header + 4;  // + crc
    CHECK(LogRecordLayout::kFixedOverhead == fixed);
    CHECK(fixed == 53);

    LogRecord commit;
    commit.type = LogRecordType::Commit;
    commit.txn_id = 7;
    commit.page_id = kNullPage;
    CHECK(encode(commit).size() == fixed);

    // 4-byte before and after images, each with the 2-byte offset prefix.
    const auto upd = sample_update();
    CHECK(upd.undo.size() == 6);
    CHECK(upd.redo.size() == 6);
    CHECK(encode(upd).size() == fixed + 6 + 6);
    CHECK(detail::get_u32(encode(upd).data()) == fixed + 12);
}

TEST_CASE("round trip: decode(encode(r)) == r with vlsn zeroed") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 300; ++i) {
        LogRecord rec = random_record(rng);
        rec.vlsn = rng();  // never encoded
        const auto bytes = encode(rec);
        auto back = decode(bytes);
        REQUIRE(back.has_value());
        LogRecord want = rec;
        want.vlsn = 0;
        CHECK(*back == want);
    }
}

TEST_CASE("torn and corrupt suffixes decode as a tail") {
    const auto bytes = encode(sample_update());
    SUBCASE("truncated by one byte") {
        CHECK(!decode(std::span(bytes).first(bytes.size() - 1)).has_value());
    }
    SUBCASE("one flipped payload bit") {
        auto bad = bytes;
        bad[LogRecordLayout::kPayload + 2] ^= 0x01;
        CHECK(!decode(bad).has_value());
    }
    SUBCASE("corrupted crc") {
        auto bad = bytes;
        bad[bad.size() - 1] ^= 0xFF;
        CHECK(!decode(bad).has_value());
    }
    SUBCASE("empty input") { CHECK(!decode({}).has_value()); }
}

TEST_CASE("prefix safety: truncation never corrupts earlier records") {
    std::mt19937_64 rng(7);
    std::vector<LogRecord> recs;
    std::vector<std::uint8_t> stream;
    std::vector<std::size_t> boundaries{0};
    for (int i = 0; i < 5; ++i) {
        auto rec = random_record(rng);
        recs.push_back(rec);
        auto bytes = encode(rec);
        stream.insert(stream.end(), bytes.begin(), bytes.end());
        boundaries.push_back(stream.size());
    }
    for (std::size_t cut = 0; cut <= stream.size(); ++cut) {
        std::span<const std::uint8_t> prefix(stream.data(), cut);
        std::size_t pos = 0, idx = 0;
        while (pos < prefix.size()) {
            auto rec = decode(prefix.subspan(pos));
            if (!rec) break;
            LogRecord want = recs[idx];
            want.vlsn = 0;
            CHECK(*rec == want);
            pos += rec->encoded_size();
            ++idx;
        }
        // Every record fully inside the prefix decodes; the boundary is torn.
        std::size_t full = 0;
        while (full < recs.size() && boundaries[full + 1] <= cut) ++full;
        CHECK(idx == full);
    }
}

TEST_CASE("oversized payload is an encoding error") {
    LogRecord rec = sample_update();
    rec.undo.resize(0x10000);
    CHECK_THROWS_AS(encode(rec), EncodingError);
}

TEST_CASE("golden log records pin the on-disk format") {
    LogRecord commit;
    commit.type = LogRecordType::Commit;
    commit.txn_id = 7;
    commit.page_id = kNullPage;
    commit.lsn = 200;
    commit.prev_page_lsn = kNullLsn;
    CHECK(hex(encode(commit)) == read_golden("commit_record.hex"));
    CHECK(hex(encode(sample_update())) == read_golden("update_record.hex"));
}

TEST_CASE("the independent reader agrees field by field") {
    // The harness oracle carries its own decoder; both must see the same
    // bytes the same way.
    const auto upd = sample_update();
    LogRecord commit;
    commit.type = LogRecordType::Commit;
    commit.txn_id = upd.txn_id;
    commit.page_id = kNullPage;
    commit.lsn = 165;
    std::vector<std::uint8_t> stream = encode(upd);
    const auto cbytes = encode(commit);
    stream.insert(stream.end(), cbytes.begin(), cbytes.end());

    const auto scan = oracle::scan_log(stream);
    REQUIRE(scan.records.size() == 2);
    CHECK(scan.winners == std::vector<std::uint64_t>{7});
    CHECK(scan.valid_end == stream.size());
    CHECK(scan.records[0].type == 1);
    CHECK(scan.records[0].txn_id == 7);
    CHECK(scan.records[0].page_id == 4711);
    CHECK(scan.records[0].stored_lsn_field == 100);
    CHECK(scan.records[0].prev_page_lsn == 40);
    CHECK(scan.records[0].undo == upd.undo);
    CHECK(scan.records[0].redo == upd.redo);
    CHECK(scan.records[1].type == 2);

    // A torn stream keeps only whole groups.
    stream.pop_back();
    const auto torn = oracle::scan_log(stream);
    CHECK(torn.records.empty());
    CHECK(torn.valid_end == 0);
}

TEST_CASE("page layout geometry") {
    CHECK(page::kCellSize == 515);
    CHECK(page::kCellsPerPage == (kPageSize - page::kHeaderSize) / page::kCellSize);
    CHECK(page::kCellsPerPage == 15);
    CHECK(page::cell_offset(page::kCellsPerPage - 1) + page::kCellSize <= kPageSize);

    PageImage img{};
    CHECK(!page::page_lsn(img).has_value());
    page::set_stored_lsn(img, to_stored_lsn(0));
    REQUIRE(page::page_lsn(img).has_value());
    CHECK(*page::page_lsn(img) == 0);  // LSN 0 is a valid offset, distinct from virgin

    const auto fmt = page::format_region_bytes(4711, false);
    PageImage formatted{};
    page::apply_image(formatted, make_image_payload(page::kFormatRegionOffset, fmt));
    CHECK(page::page_id(formatted) == 4711);
    CHECK(page::slot_count(formatted) == page::kCellsPerPage);
    CHECK(page::free_offset(formatted) == page::kHeaderSize);
    CHECK(page::stored_lsn(formatted) == kVirginStoredLsn);  // format never touches the LSN

    auto cell = page::make_live_cell(std::vector<std::uint8_t>{9, 8, 7});
    page::apply_image(formatted, make_image_payload(
                                     static_cast<std::uint16_t>(page::cell_offset(3)), cell));
    CHECK(page::cell_flag(formatted, 3) == page::kCellLive);
    CHECK(page::cell_len(formatted, 3) == 3);
    CHECK(page::cell_data(formatted, 3)[0] == 9);
    CHECK(page::cell_flag(formatted, 2) == page::kCellFree);
}

TEST_CASE("physical images may not touch the page_lsn field or overflow") {
    PageImage img{};
    CHECK_THROWS_AS(
        page::apply_image(img, make_image_payload(0, std::vector<std::uint8_t>{1})),
        IntegrityError);
    CHECK_THROWS_AS(
        page::apply_image(img, make_image_payload(8190, std::vector<std::uint8_t>{1, 2, 3})),
        IntegrityError);
}

TEST_CASE("virtual disk: sync honesty and torn syncs") {
    std::vector<std::uint8_t> payload(100, 0x5A);
    SUBCASE("synced bytes survive any crash") {
        VirtualDisk disk(FaultPlan{2, 99});  // ops: write, sync, then crash
        disk.write_log(0, payload);
        disk.sync_log(100);
        CHECK(disk.synced_size() == 100);
        CHECK_THROWS_AS(disk.write_log(100, payload), CrashInjected);
        CHECK(disk.crashed());
        CHECK(disk.synced_size() == 100);
        CHECK(disk.read_log(0, 100) == payload);
        CHECK_THROWS_AS(disk.sync_log(100), CrashInjected);  // still down
    }
    SUBCASE("a torn sync makes a seeded prefix durable") {
        VirtualDisk a(FaultPlan{1, 1234});
        a.write_log(0, payload);
        CHECK_THROWS_AS(a.sync_log(100), CrashInjected);
        CHECK(a.synced_size() <= 100);
        // Same plan, same tear.
        VirtualDisk b(FaultPlan{1, 1234});
        b.write_log(0, payload);
        CHECK_THROWS_AS(b.sync_log(100), CrashInjected);
        CHECK(a.synced_size() == b.synced_size());
        CHECK(a.log_size() == a.synced_size());  // unsynced tail is gone
    }
    SUBCASE("crash after zero writes leaves a virgin disk") {
        VirtualDisk disk(FaultPlan{0, 1});
        CHECK_THROWS_AS(disk.write_log(0, payload), CrashInjected);
        CHECK(disk.synced_size() == 0);
        CHECK(disk.page_ids().empty());
    }
    SUBCASE("page writes are atomic: the interrupted write never happens") {
        VirtualDisk disk(FaultPlan{0, 1});
        PageImage img{};
        img[100] = 42;
        CHECK_THROWS_AS(disk.write_page(9, img), CrashInjected);
        CHECK(!disk.read_page(9).has_value());
    }
}

TEST_CASE("virtual disk: watermark immutability and determinism") {
    VirtualDisk disk;
    std::vector<std::uint8_t> bytes(10, 1);
    disk.write_log(0, bytes);
    disk.sync_log(10);
    CHECK_THROWS_AS(disk.write_log(5, bytes), LogicError);

    auto run = [] {
        VirtualDisk d;
        PageImage img{};
        img[0] = 7;
        d.write_page(3, img);
        std::vector<std::uint8_t> b(33, 0xAB);
        d.write_log(0, b);
        d.sync_log(33);
        d.write_master(0);
        return d.serialize();
    };
    CHECK(run() == run());
}

TEST_CASE("virtual disk: save and load round trip") {
    VirtualDisk disk;
    PageImage img{};
    img[17] = 0xEE;
    disk.write_page(12, img);
    std::vector<std::uint8_t> b(20, 0xCD);
    disk.write_log(0, b);
    disk.sync_log(20);
    disk.write_master(0);
    const std::string path = "unit_format_disk.bin";
    disk.save(path);
    auto back = VirtualDisk::load(path);
    CHECK(back->serialize() == disk.serialize());
    CHECK(back->read_master() == 0);
    CHECK(back->read_page(12)->at(17) == 0xEE);
}

TEST_CASE("virtual disk: truncate chops the tail and lowers the watermark") {
    VirtualDisk disk;
    std::vector<std::uint8_t> b(50, 9);
    disk.write_log(0, b);
    disk.sync_log(50);
    disk.truncate_log(20);
    CHECK(disk.synced_size() == 20);
    CHECK(disk.log_size() == 20);
    disk.write_log(20, b);  // the freed range is writable again
    CHECK(disk.log_size() == 70);
}
