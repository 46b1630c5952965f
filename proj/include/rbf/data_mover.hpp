#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "rbf/bytes.hpp"
#include "rbf/clock.hpp"
#include "rbf/event_log.hpp"
#include "rbf/time.hpp"

namespace rbf {

using Digest = std::array<std::uint8_t, 32>;

/// SHA-256 of the content.
Digest content_digest(ByteView content);
std::string to_hex(const Digest& d);

/// Index record mapping one version of a named file to the range of blocks
/// holding its bytes in the file's data topic.
struct FileVersion {
    std::string file_name;
    std::uint32_t version = 0;
    std::uint64_t start_seq = 0;
    std::uint64_t end_seq = 0;
    std::uint64_t byte_length = 0;
    Digest checksum{};
    Timestamp push_time;

    friend bool operator==(const FileVersion&, const FileVersion&) = default;
};

/// A place files are pushed to and pulled from.
class Repository {
public:
    virtual ~Repository() = default;

    virtual FileVersion push_file(std::string_view name, ByteView content) = 0;
    /// Latest version when `version` is empty. Verifies the checksum.
    virtual Bytes pull_file(std::string_view name, std::optional<std::uint32_t> version = std::nullopt) = 0;
    virtual FileVersion latest_version(std::string_view name) = 0;
};

/// Repository backed by an EventLog. File `n` uses topics `file/n/data`
/// (content blocks) and `file/n/idx` (one FileVersion record per version;
/// the index seqno equals the version). The index record is appended only
/// after every data block is durable, so a version exists iff its index
/// record does. Empty files are stored as one zero-length sentinel block.
class LocalRepository final : public Repository {
public:
    explicit LocalRepository(std::filesystem::path root, std::shared_ptr<Clock> clock = nullptr,
                             LogOptions options = {});

    FileVersion push_file(std::string_view name, ByteView content) override;
    Bytes pull_file(std::string_view name, std::optional<std::uint32_t> version = std::nullopt) override;
    FileVersion latest_version(std::string_view name) override;

    /// Every version record of `name`, in order.
    std::vector<FileVersion> versions(std::string_view name);

    [[nodiscard]] EventLog& log() noexcept { return log_; }

private:
    FileVersion version_record(std::string_view name, std::uint32_t version);
    std::mutex& push_lock(const std::string& name);

    std::shared_ptr<Clock> clock_;
    EventLog log_;
    std::mutex locks_mu_;
    std::map<std::string, std::unique_ptr<std::mutex>> push_locks_;
};

TopicName data_topic(std::string_view file_name);
TopicName index_topic(std::string_view file_name);

/// Poll `latest_version` every `poll_interval` until a version newer than
/// `after` appears. Returns std::nullopt once `deadline` has passed. A file
/// that does not exist yet counts as "no new version". Never holds a lock
/// while sleeping.
std::optional<FileVersion> wait_for_new_version(Repository& repo, std::string_view name, std::uint32_t after,
                                                Millis poll_interval, std::optional<Timestamp> deadline,
                                                Clock& clock);

inline constexpr std::string_view kSoftwarePrefix = "sw/";

/// Push a software package under the reserved `sw/` prefix.
FileVersion distribute_software(Repository& repo, std::string_view package_name, ByteView content);

/// Edge-side installer: polls the package's latest version and installs it
/// when it is newer than what is installed. Intermediate versions that were
/// superseded between polls are skipped.
class SoftwareUpdater {
public:
    using Installer = std::function<void(std::uint32_t version, const Bytes& content)>;

    SoftwareUpdater(Repository& repo, std::string package_name, Installer installer);

    /// Returns the version installed by this call, if any.
    std::optional<std::uint32_t> poll_once();

    [[nodiscard]] std::uint32_t installed_version() const noexcept { return installed_; }

private:
    Repository& repo_;
    std::string package_;
    Installer installer_;
    std::uint32_t installed_ = 0;
};

/// Opens "tcp://host:port" as a RemoteRepository, anything else as a
/// LocalRepository directory.
std::unique_ptr<Repository> open_repository(std::string_view address);

} // namespace rbf
