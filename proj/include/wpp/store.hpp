#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wpp/control_plane.hpp"
#include "wpp/error.hpp"
#include "wpp/serialize.hpp"

namespace wpp {

// Single-writer append-only store in one directory:
//   audit.jsonl    one AuditRecord per line, appended as requests land
//   jobs.jsonl     finished JobRecords (export for offline analysis)
//   snapshot.json  full control-plane state; the audit log restarts after it
class Store {
 public:
  explicit Store(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(Errc::StoreCorrupt, "cannot create " + dir_.string() + ": " + ec.message());
  }

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path audit_path() const { return dir_ / "audit.jsonl"; }
  std::filesystem::path jobs_path() const { return dir_ / "jobs.jsonl"; }
  std::filesystem::path snapshot_path() const { return dir_ / "snapshot.json"; }

  void append_audit(const AuditRecord& r) { append_line(audit_path(), json(r).dump()); }
  void append_job(const JobRecord& r) { append_line(jobs_path(), json(r).dump()); }

  // A torn final line (crash mid-append) is dropped; damage anywhere else is
  // reported.
  std::vector<AuditRecord> load_audit() const { return load_lines<AuditRecord>(audit_path()); }
  std::vector<JobRecord> load_jobs() const { return load_lines<JobRecord>(jobs_path()); }

  std::optional<json> load_snapshot() const {
    std::ifstream in(snapshot_path());
    if (!in) return std::nullopt;
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw Error(Errc::StoreCorrupt, "snapshot.json: " + std::string(e.what()));
    }
  }

  void write_snapshot(const json& snap) {
    const auto tmp = dir_ / "snapshot.json.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << snap.dump();
      out.flush();
      if (!out) throw Error(Errc::StoreCorrupt, "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, snapshot_path());
    std::ofstream(audit_path(), std::ios::trunc).flush();
  }

  std::size_t audit_lines() const { return audit_lines_; }

  // Rebuilds `cp` from disk and wires its sinks to this store.
  void attach(ControlPlane& cp) {
    cp.set_audit_sink(nullptr);
    cp.set_job_sink(nullptr);
    if (auto snap = load_snapshot()) cp.restore(*snap);
    const auto records = load_audit();
    cp.replay(records);
    audit_lines_ = records.size();
    cp.set_audit_sink([this](const AuditRecord& r) {
      append_audit(r);
      ++audit_lines_;
    });
    cp.set_job_sink([this](const JobRecord& r) { append_job(r); });
  }

  void compact(const ControlPlane& cp) {
    write_snapshot(cp.snapshot());
    audit_lines_ = 0;
  }

  bool maybe_compact(const ControlPlane& cp, std::size_t threshold = 5000) {
    if (audit_lines_ < threshold) return false;
    compact(cp);
    return true;
  }

 private:
  static void append_line(const std::filesystem::path& p, const std::string& line) {
    std::ofstream out(p, std::ios::app);
    out << line << '\n';
    out.flush();
    if (!out) throw Error(Errc::StoreCorrupt, "cannot append to " + p.string());
  }

  template <class T>
  static std::vector<T> load_lines(const std::filesystem::path& p) {
    std::vector<T> out;
    std::ifstream in(p);
    if (!in) return out;
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) lines.push_back(line);
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      try {
        out.push_back(json::parse(lines[i]).get<T>());
      } catch (const std::exception& e) {
        if (i + 1 == lines.size()) break;
        throw Error(Errc::StoreCorrupt, p.filename().string() + " line " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    return out;
  }

  std::filesystem::path dir_;
  std::size_t audit_lines_ = 0;
};

}  // namespace wpp
