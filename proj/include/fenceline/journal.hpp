#pragma once

#include "fenceline/errors.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace fenceline {

struct RecoveryReport {
    std::size_t records = 0;
    bool torn_tail_discarded = false;
    std::vector<std::string> warnings;
};

/// Append-only file of one JSON object per line.
///
/// Recovery tolerates exactly one kind of damage: an incomplete or
/// unparseable final line, which is what an interrupted write leaves behind.
/// That line is dropped and the file truncated back to the last complete
/// record. Damage anywhere else is reported as StorageError.
class JsonlJournal {
public:
    using Apply = std::function<void(const nlohmann::json& record, std::size_t line)>;

    explicit JsonlJournal(std::filesystem::path path) : path_(std::move(path)) {}

    const std::filesystem::path& path() const { return path_; }

    /// Feeds every complete record to `apply`. If `apply` throws on the last
    /// line that line is treated as torn as well.
    RecoveryReport recover(const Apply& apply) {
        std::scoped_lock lock(mu_);
        file_.reset();
        RecoveryReport report;
        if (!std::filesystem::exists(path_)) return report;

        std::ifstream in(path_, std::ios::binary);
        if (!in) throw StorageError("cannot read journal " + path_.string());
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string text = buf.str();

        std::size_t pos = 0;
        std::size_t line_no = 0;
        std::size_t good_end = 0;
        while (pos < text.size()) {
            ++line_no;
            const auto nl = text.find('\n', pos);
            const bool terminated = nl != std::string::npos;
            const auto end = terminated ? nl : text.size();
            const bool is_last = !terminated || text.find_first_not_of(" \t\r\n", nl + 1) == std::string::npos;
            const std::string line = text.substr(pos, end - pos);
            const auto next = terminated ? nl + 1 : text.size();

            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                pos = next;
                if (terminated) good_end = next;
                continue;
            }
            try {
                apply(nlohmann::json::parse(line), line_no);
                ++report.records;
                good_end = next;
            } catch (const std::exception& e) {
                if (!is_last)
                    throw StorageError(path_.string() + ":" + std::to_string(line_no) +
                                       ": corrupted record mid-journal (" + e.what() + "); operator attention needed");
                report.torn_tail_discarded = true;
                report.warnings.push_back(path_.string() + ":" + std::to_string(line_no) +
                                          ": discarded torn trailing record");
                spdlog::warn("{}", report.warnings.back());
                break;
            }
            pos = next;
        }

        if (report.torn_tail_discarded) {
            std::filesystem::resize_file(path_, good_end);
        } else if (!text.empty() && text.back() != '\n' && good_end == text.size()) {
            // complete final record without its newline
            std::ofstream(path_, std::ios::app | std::ios::binary) << '\n';
        }
        return report;
    }

    /// Writes one record and flushes it to stable storage before returning.
    void append(const nlohmann::json& record) {
        const std::string line = record.dump() + "\n";
        std::scoped_lock lock(mu_);
        if (!file_) {
            if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
            file_.reset(std::fopen(path_.c_str(), "ab"));
            if (!file_) throw StorageError("cannot open journal " + path_.string() + " for append");
        }
        if (std::fwrite(line.data(), 1, line.size(), file_.get()) != line.size() || std::fflush(file_.get()) != 0)
            throw StorageError("write to " + path_.string() + " failed");
        ::fsync(::fileno(file_.get()));
    }

    /// Atomically replaces the journal with `records` (write-then-rename).
    void rewrite(const std::vector<nlohmann::json>& records) {
        std::scoped_lock lock(mu_);
        file_.reset();
        auto tmp = path_;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw StorageError("cannot write " + tmp.string());
            for (const auto& r : records) out << r.dump() << '\n';
            if (!out.flush()) throw StorageError("write to " + tmp.string() + " failed");
        }
        std::filesystem::rename(tmp, path_);
    }

private:
    struct FileCloser {
        void operator()(std::FILE* f) const { std::fclose(f); }
    };

    std::filesystem::path path_;
    std::mutex mu_;
    std::unique_ptr<std::FILE, FileCloser> file_;
};

} // namespace fenceline
