#pragma once

#include <atomic>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "rbf/bytes.hpp"
#include "rbf/clock.hpp"
#include "rbf/time.hpp"

namespace rbf {

/// Name of one append-only log. Non-empty, at most 255 bytes, no NUL or
/// backslash. '/' is allowed as a logical delimiter; names are never used as
/// filesystem paths directly.
class TopicName {
public:
    explicit TopicName(std::string name);

    [[nodiscard]] const std::string& str() const noexcept { return name_; }

    friend auto operator<=>(const TopicName&, const TopicName&) = default;

    static constexpr std::size_t kMaxLength = 255;

private:
    std::string name_;
};

struct LogEntry {
    TopicName topic;
    std::uint64_t seqno = 0;
    Bytes payload;
    Timestamp append_time;
};

struct LogOptions {
    std::size_t max_block_size = 64 * 1024;
    /// fdatasync data and index before acknowledging an append.
    bool sync = true;
};

/// Durable, topic-partitioned, append-only log.
///
/// On-disk layout, one directory per topic under `root`, named by the
/// percent-encoded topic name:
///
///   index: [magic "RBFI"][u32 format version]
///          then one 32-byte record per entry:
///          [u64 seqno][u64 data offset][u32 length][u32 crc32][i64 append ms]
///   data:  [magic "RBFD"][u32 format version][payload bytes ...]
///
/// All integers little-endian. Appends write the payload, flush, write the
/// index record, flush, then publish the new count. On open, a torn trailing
/// record (partial index record, data past the last index record, or a last
/// record whose payload is short or fails its CRC) is truncated away.
///
/// Single writer per topic, any number of concurrent readers; readers see a
/// consistent prefix. One process owns a root directory at a time.
class EventLog {
public:
    EventLog(std::filesystem::path root, std::shared_ptr<Clock> clock, LogOptions options = {});
    ~EventLog();

    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    std::uint64_t append(const TopicName& topic, ByteView payload);

    [[nodiscard]] LogEntry read(const TopicName& topic, std::uint64_t seqno) const;
    [[nodiscard]] std::uint64_t latest_seqno(const TopicName& topic) const;
    [[nodiscard]] std::vector<LogEntry> read_range(const TopicName& topic, std::uint64_t from,
                                                   std::uint64_t to) const;
    /// Entries with seqno > after at the moment of the call. Never blocks.
    [[nodiscard]] std::vector<LogEntry> poll_since(const TopicName& topic,
                                                   std::uint64_t after) const;

    [[nodiscard]] std::vector<TopicName> topics() const;
    [[nodiscard]] const LogOptions& options() const noexcept { return options_; }
    [[nodiscard]] const std::filesystem::path& root() const noexcept { return root_; }

    static constexpr std::uint32_t kFormatVersion = 1;
    static constexpr std::size_t kIndexRecordSize = 32;
    static constexpr std::size_t kHeaderSize = 8;

private:
    class Topic;

    Topic* find(const TopicName& topic) const;
    Topic& find_or_create(const TopicName& topic);
    LogEntry read_entry(const Topic& t, const TopicName& name, std::uint64_t seqno) const;

    std::filesystem::path root_;
    std::shared_ptr<Clock> clock_;
    LogOptions options_;
    mutable std::mutex topics_mu_;
    std::map<std::string, std::unique_ptr<Topic>> topics_;
};

/// Directory name used for a topic: bytes outside [A-Za-z0-9._-] become %XX.
std::string encode_topic_dirname(std::string_view topic);
std::string decode_topic_dirname(std::string_view dirname);

std::uint32_t crc32_of(ByteView data);

} // namespace rbf
