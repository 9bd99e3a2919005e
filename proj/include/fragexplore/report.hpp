#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fragx {

// Run manifests: per-suite pass/fail items with measured value, target and
// tolerance, plus digests of every file the run wrote.

struct ReportItem {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    std::string note; // optional detail, e.g. the comparison rule
};

struct FileDigest {
    std::string path; // relative to the out dir
    std::string digest;
    long bytes = 0;
};

struct SuiteResult {
    std::string name;
    bool pass = true;
    std::vector<ReportItem> items;
    std::vector<FileDigest> files;
};

struct RunManifest {
    std::string tool_version;
    nlohmann::json config; // snapshot of the effective configuration
    double wall_seconds = 0.0;
    std::vector<SuiteResult> suites;

    bool all_pass() const {
        for (const auto& s : suites)
            if (!s.pass) return false;
        return true;
    }
};

// FNV-1a, enough to detect any byte change across reruns
inline std::string fnv1a_digest(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

inline FileDigest digest_file(const std::string& full_path, const std::string& rel_path) {
    std::ifstream in(full_path, std::ios::binary);
    if (!in) throw std::runtime_error("digest_file: cannot read " + full_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    return {rel_path, fnv1a_digest(bytes), (long)bytes.size()};
}

inline nlohmann::json manifest_json(const RunManifest& m) {
    nlohmann::json j;
    j["tool_version"] = m.tool_version;
    j["config"] = m.config;
    j["wall_seconds"] = m.wall_seconds;
    j["pass"] = m.all_pass();
    j["suites"] = nlohmann::json::array();
    for (const auto& s : m.suites) {
        nlohmann::json js;
        js["name"] = s.name;
        js["pass"] = s.pass;
        js["items"] = nlohmann::json::array();
        for (const auto& it : s.items)
            js["items"].push_back({{"name", it.name},
                                   {"pass", it.pass},
                                   {"measured", it.measured},
                                   {"target", it.target},
                                   {"tolerance", it.tolerance},
                                   {"note", it.note}});
        js["files"] = nlohmann::json::array();
        for (const auto& f : s.files)
            js["files"].push_back({{"path", f.path}, {"digest", f.digest}, {"bytes", f.bytes}});
        j["suites"].push_back(js);
    }
    return j;
}

enum class ReportFormat { text, json };

inline std::string emit_report(const RunManifest& m, ReportFormat fmt) {
    if (fmt == ReportFormat::json) return manifest_json(m).dump(2) + "\n";
    std::ostringstream out;
    long items = 0;
    for (const auto& s : m.suites) {
        out << "suite " << s.name << ": " << (s.pass ? "PASS" : "FAIL") << "\n";
        for (const auto& it : s.items) {
            ++items;
            out << "  " << (it.pass ? "PASS" : "FAIL") << " " << it.name << ": measured "
                << it.measured << ", target " << it.target << ", tolerance " << it.tolerance;
            if (!it.note.empty()) out << " (" << it.note << ")";
            out << "\n";
        }
    }
    if (items == 0)
        out << "no suites were run\n";
    else
        out << (m.all_pass() ? "ALL PASS" : "FAILURES PRESENT") << " (" << items << " items)\n";
    return out.str();
}

} // namespace fragx
