// credo command-line front end: workload generation, crash testing,
// verification, and inspection over serialized virtual-disk images.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "credo/dump.hpp"
#include "credo/engine.hpp"
#include "credo/oracle.hpp"
#include "credo/recovery.hpp"
#include "credo/workload.hpp"

namespace {

// Exit codes: 0 ok, 2 usage, 10 oracle mismatch, 11 committed-disk
// violation, 12 REDO-only violation, 13 log-format violation.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitOracleMismatch = 10;
constexpr int kExitCommittedDisk = 11;
constexpr int kExitRedoOnly = 12;
constexpr int kExitLogFormat = 13;

struct CommonOpts {
    std::uint64_t seed = 1;
    std::uint32_t threads = 4;
    std::uint32_t txns = 200;
    std::string mix = "40:30:10:20";
    double abort_prob = 0.10;
    double savepoint_prob = 0.10;
    std::uint32_t snapshot_readers = 0;
    std::uint32_t checkpoint_interval = 256;
    std::uint64_t spr_wait_us = 0;
    std::uint32_t pool_frames = 1024;
    std::uint32_t extent_size = 64 * 1024;
    std::uint64_t commit_window_us = 1000;
    bool threaded = false;
    bool json = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--seed", o.seed, "workload seed");
    cmd->add_option("--threads", o.threads, "transaction streams / worker threads");
    cmd->add_option("--txns", o.txns, "total transactions");
    cmd->add_option("--mix", o.mix, "insert:update:delete:read weights");
    cmd->add_option("--abort-prob", o.abort_prob, "per-transaction abort probability");
    cmd->add_option("--savepoint-prob", o.savepoint_prob, "partial-rollback probability");
    cmd->add_option("--snapshot-readers", o.snapshot_readers, "concurrent snapshot readers");
    cmd->add_option("--checkpoint-interval", o.checkpoint_interval,
                    "commits between automatic checkpoints");
    cmd->add_option("--spr-wait", o.spr_wait_us, "microseconds to wait before the rollback scan");
    cmd->add_option("--pool-frames", o.pool_frames, "buffer pool frames");
    cmd->add_option("--extent-size", o.extent_size, "volatile log extent size in bytes");
    cmd->add_option("--commit-window", o.commit_window_us, "group commit window in microseconds");
    cmd->add_flag("--threaded", o.threaded, "run real worker threads instead of the deterministic scheduler");
    cmd->add_flag("--json", o.json, "machine-readable report");
}

credo::WorkloadSpec make_spec(const CommonOpts& o) {
    credo::WorkloadSpec spec;
    spec.seed = o.seed;
    spec.streams = o.threads;
    spec.txns = o.txns;
    spec.abort_prob = o.abort_prob;
    spec.savepoint_prob = o.savepoint_prob;
    spec.snapshot_readers = o.snapshot_readers;
    spec.deterministic = !o.threaded;
    unsigned i = 40, u = 30, d = 10, r = 20;
    char c;
    std::istringstream in(o.mix);
    if (in >> i >> c >> u >> c >> d >> c >> r) {
        spec.mix_insert = i;
        spec.mix_update = u;
        spec.mix_delete = d;
        spec.mix_read = r;
    }
    return spec;
}

credo::Config make_config(const CommonOpts& o) {
    credo::Config cfg = credo::harness_config(!o.threaded);
    cfg.pool_frames = o.pool_frames;
    cfg.extent_size = o.extent_size;
    cfg.checkpoint_interval = o.checkpoint_interval;
    cfg.spr_wait = std::chrono::microseconds(o.spr_wait_us);
    cfg.group_commit_window = std::chrono::microseconds(o.commit_window_us);
    return cfg;
}

nlohmann::json stats_json(const credo::VirtualDisk& disk, const credo::Stats& st) {
    return {
        {"disk_write_ops", disk.write_ops()},
        {"disk_syncs", disk.sync_count()},
        {"log_bytes", disk.synced_size()},
        {"commits", st.commits.load()},
        {"aborts", st.aborts.load()},
        {"pages_flushed", st.pages_flushed.load()},
        {"spr_undos", st.spr_undos.load()},
        {"checkpoints", st.checkpoints.load()},
        {"undo_ops_during_recovery", st.undo_ops_during_recovery.load()},
    };
}

int committed_disk_exit(const credo::VirtualDisk& disk, nlohmann::json& report) {
    const auto log = disk.synced_log_bytes();
    const auto scan = credo::oracle::scan_log(log);
    if (scan.interleaved_groups || scan.commitless_group_midlog) {
        report["log_format"] = "violated";
        return kExitLogFormat;
    }
    for (auto t : scan.types_seen)
        if (t < 1 || t > 4) {
            report["log_format"] = "violated";
            return kExitLogFormat;
        }
    auto check = credo::oracle::check_committed_disk(
        log, disk.page_ids(), [&](std::uint64_t pid) {
            auto img = disk.read_page(pid);
            credo::oracle::OraclePage out{};
            if (img) std::memcpy(out.data(), img->data(), credo::kPageSize);
            return out;
        });
    report["committed_disk_violations"] = check.violations;
    return check.ok ? kExitOk : kExitCommittedDisk;
}

int cmd_workload(const CommonOpts& o, const std::string& disk_path) {
    const auto spec = make_spec(o);
    const auto cfg = make_config(o);
    credo::VirtualDisk disk;
    credo::oracle::Journal journal;
    nlohmann::json report;
    std::uint64_t committed = 0;
    {
        auto engine = credo::Engine::open(disk, cfg);
        credo::WorkloadRunner runner(*engine, spec, journal);
        const auto t0 = std::chrono::steady_clock::now();
        const auto res = runner.run();
        const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
        committed = res.committed;

        const auto scan = credo::oracle::scan_log(disk.synced_log_bytes());
        const auto expect = journal.expected_state(scan);
        const auto actual = credo::scan_logical_state(*engine);
        report = stats_json(disk, engine->stats());
        report["committed_txns"] = res.committed;
        report["aborted_txns"] = res.aborted;
        report["seconds"] = dt.count();
        report["txns_per_second"] = dt.count() > 0 ? res.committed / dt.count() : 0.0;
        if (!expect.ack_honest || actual != expect.state) {
            report["oracle"] = "mismatch";
            std::cout << report.dump(2) << "\n";
            return kExitOracleMismatch;
        }
        report["oracle"] = "ok";
        report["records"] = actual.size();
        engine->shutdown();
    }
    if (!disk_path.empty()) disk.save(disk_path);
    if (o.json)
        std::cout << report.dump(2) << "\n";
    else
        std::cout << "workload ok: " << committed << " committed, "
                  << report["records"] << " records, " << report["disk_syncs"]
                  << " syncs, oracle ok\n";
    return kExitOk;
}

int cmd_crash_test(const CommonOpts& o, std::uint64_t crash_after, std::uint64_t crash_seed,
                   const std::string& disk_path) {
    auto spec = make_spec(o);
    const auto cfg = make_config(o);
    std::uint64_t k = crash_after;
    if (k == credo::kNoCrash) {
        const std::uint64_t total = credo::dry_run_write_ops(spec, cfg);
        k = credo::detail::splitmix64(crash_seed ^ spec.seed) % std::max<std::uint64_t>(1, total);
    }
    auto verdict = credo::run_crash_test(spec, k, credo::kNoCrash, cfg);

    nlohmann::json report;
    report["crash_after_writes"] = verdict.crash_op;
    report["crashed"] = verdict.crashed;
    report["committed_before_crash"] = verdict.committed;
    report["recovered_records"] = verdict.recovered_records;
    report["undo_ops_during_recovery"] = verdict.undo_ops_during_recovery;
    int code = kExitOk;
    if (!verdict.ok) {
        report["verdict"] = verdict.failure;
        code = verdict.failure == "recovery performed undo work" ? kExitRedoOnly
                                                                 : kExitOracleMismatch;
    } else {
        report["verdict"] = "ok";
        // Re-run recovery's output disk through the committed-state scanner.
        credo::VirtualDisk disk(credo::FaultPlan{verdict.crash_op, spec.seed});
        credo::oracle::Journal journal;
        try {
            auto engine = credo::Engine::open(disk, cfg);
            credo::WorkloadRunner runner(*engine, spec, journal);
            runner.run();
        } catch (const credo::CrashInjected&) {
        }
        disk.reopen_after_crash();
        {
            auto engine = credo::Engine::open(disk, cfg);
            engine->shutdown();
        }
        code = committed_disk_exit(disk, report);
        if (!disk_path.empty()) disk.save(disk_path);
    }
    if (o.json)
        std::cout << report.dump(2) << "\n";
    else
        std::cout << "crash-test seed " << spec.seed << " crash@" << verdict.crash_op << ": "
                  << report["verdict"].get<std::string>() << "\n";
    return code;
}

int cmd_verify(const std::string& disk_path, bool json) {
    auto disk = credo::VirtualDisk::load(disk_path);
    nlohmann::json report;
    const auto analysis = credo::Recovery::analyze_disk(*disk);
    report["valid_end"] = analysis.valid_end;
    report["torn_bytes"] = disk->synced_size() - analysis.valid_end;
    report["in_doubt_pages"] = analysis.in_doubt.size();
    nlohmann::json pages = nlohmann::json::array();
    for (auto& [pid, lsn] : analysis.in_doubt) pages.push_back({{"page", pid}, {"redo_from", lsn}});
    report["in_doubt"] = pages;
    const int code = committed_disk_exit(*disk, report);
    report["verdict"] = code == kExitOk ? "ok"
                        : code == kExitCommittedDisk ? "committed-disk violation"
                                                     : "log-format violation";
    if (json)
        std::cout << report.dump(2) << "\n";
    else
        std::cout << "verify " << disk_path << ": " << report["verdict"].get<std::string>()
                  << ", " << analysis.in_doubt.size() << " in-doubt pages, "
                  << report["torn_bytes"] << " torn bytes\n";
    return code;
}

int cmd_dump_log(const std::string& disk_path) {
    auto disk = credo::VirtualDisk::load(disk_path);
    credo::dump_log(*disk, std::cout);
    return kExitOk;
}

int cmd_checkpoint(const std::string& disk_path) {
    auto disk = credo::VirtualDisk::load(disk_path);
    {
        auto engine = credo::Engine::open(*disk, credo::harness_config(true));
        engine->propagation().take_checkpoint();
        engine->shutdown();
    }
    disk->save(disk_path);
    std::cout << "checkpoint written, master " << disk->read_master() << "\n";
    return kExitOk;
}

int cmd_read(const std::string& disk_path, std::uint64_t pid, std::uint16_t slot,
             std::uint64_t as_of, bool json) {
    auto disk = credo::VirtualDisk::load(disk_path);
    auto engine = credo::Engine::open(*disk, credo::harness_config(true));
    const credo::Lsn l = as_of == credo::kNullLsn ? engine->plog().durable_lsn() : as_of;
    const credo::PageImage img = engine->fix_at(pid, l);
    nlohmann::json report;
    report["page"] = pid;
    report["slot"] = slot;
    report["as_of"] = l;
    if (slot >= credo::page::kCellsPerPage ||
        credo::page::cell_flag(img, slot) != credo::page::kCellLive) {
        report["found"] = false;
        std::cout << report.dump(2) << "\n";
        return 1;
    }
    auto data = credo::page::cell_data(img, slot);
    std::ostringstream hex;
    for (auto b : data) hex << std::hex << std::setw(2) << std::setfill('0') << int(b);
    report["found"] = true;
    report["length"] = data.size();
    report["payload_hex"] = hex.str();
    std::cout << (json ? report.dump(2) : report["payload_hex"].get<std::string>()) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"credo: a page store whose persistent state is always committed"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string disk_path;
    std::uint64_t crash_after = credo::kNoCrash;
    std::uint64_t crash_seed = 0;
    std::uint64_t page = 0, as_of = credo::kNullLsn;
    std::uint16_t slot = 0;
    bool json = false;

    auto* wl = app.add_subcommand("workload", "run a workload and check it against the oracle");
    add_common(wl, o);
    wl->add_option("--disk", disk_path, "save the resulting disk image here");

    auto* ct = app.add_subcommand("crash-test", "run, crash, recover, compare with the oracle");
    add_common(ct, o);
    ct->add_option("--crash-after-writes", crash_after, "crash at this disk write op");
    ct->add_option("--crash-seed", crash_seed, "seed for picking the crash point");
    ct->add_option("--disk", disk_path, "save the recovered disk image here");

    auto* vf = app.add_subcommand("verify", "read-only analysis and committed-state check");
    vf->add_option("--disk", disk_path, "disk image")->required();
    vf->add_flag("--json", json);

    auto* dl = app.add_subcommand("dump-log", "pretty-print the persistent log");
    dl->add_option("--disk", disk_path, "disk image")->required();

    auto* cp = app.add_subcommand("checkpoint", "take a checkpoint on a disk image");
    cp->add_option("--disk", disk_path, "disk image")->required();

    auto* rd = app.add_subcommand("read", "read one record, optionally time-traveled");
    rd->add_option("--disk", disk_path, "disk image")->required();
    rd->add_option("--page", page, "page id")->required();
    rd->add_option("--slot", slot, "slot number")->required();
    rd->add_option("--as-of", as_of, "reconstruct the page as of this LSN");
    rd->add_flag("--json", json);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (wl->parsed()) return cmd_workload(o, disk_path);
        if (ct->parsed()) return cmd_crash_test(o, crash_after, crash_seed, disk_path);
        if (vf->parsed()) return cmd_verify(disk_path, json);
        if (dl->parsed()) return cmd_dump_log(disk_path);
        if (cp->parsed()) return cmd_checkpoint(disk_path);
        if (rd->parsed()) return cmd_read(disk_path, page, slot, as_of, json);
    } catch (const credo::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}
