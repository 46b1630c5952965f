#include "rbf/data_mover.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>

#include "rbf/error.hpp"
#include "rbf/remote_repository.hpp"

namespace rbf {

Digest content_digest(ByteView content) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(content.data(), content.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size()) {
        throw Error(ErrorCode::StorageFailure, "sha256 failed");
    }
    return out;
}

std::string to_hex(const Digest& d) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : d) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 0xF]);
    }
    return s;
}

namespace {

void check_file_name(std::string_view name) {
    if (name.empty()) throw Error(ErrorCode::InvalidArgument, "file name is empty");
}

} // namespace

TopicName data_topic(std::string_view file_name) {
    check_file_name(file_name);
    return TopicName("file/" + std::string(file_name) + "/data");
}

TopicName index_topic(std::string_view file_name) {
    check_file_name(file_name);
    return TopicName("file/" + std::string(file_name) + "/idx");
}

LocalRepository::LocalRepository(std::filesystem::path root, std::shared_ptr<Clock> clock, LogOptions options)
    : clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()), log_(std::move(root), clock_, options) {}

std::mutex& LocalRepository::push_lock(const std::string& name) {
    std::lock_guard lock(locks_mu_);
    auto& slot = push_locks_[name];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

FileVersion LocalRepository::push_file(std::string_view name, ByteView content) {
    const TopicName data = data_topic(name);
    const TopicName idx = index_topic(name);
    std::lock_guard lock(push_lock(std::string(name)));

    const std::size_t block = log_.options().max_block_size;
    FileVersion v;
    v.file_name = std::string(name);
    if (content.empty()) {
        v.start_seq = v.end_seq = log_.append(data, ByteView{});
    } else {
        for (std::size_t off = 0; off < content.size(); off += block) {
            const std::uint64_t seq = log_.append(data, content.subspan(off, std::min(block, content.size() - off)));
            if (off == 0) v.start_seq = seq;
            v.end_seq = seq;
        }
    }
    v.byte_length = content.size();
    v.checksum = content_digest(content);
    v.version = static_cast<std::uint32_t>(log_.latest_seqno(idx) + 1);
    v.push_time = clock_->now();

    // Commit point.
    log_.append(idx, wire::encode_file_version(v));
    return v;
}

FileVersion LocalRepository::version_record(std::string_view name, std::uint32_t version) {
    const TopicName idx = index_topic(name);
    const std::uint64_t latest = log_.latest_seqno(idx);
    if (latest == 0) throw Error(ErrorCode::UnknownFile, std::string(name));
    if (version == 0 || version > latest) {
        throw Error(ErrorCode::UnknownVersion, std::string(name) + " v" + std::to_string(version));
    }
    const LogEntry e = log_.read(idx, version);
    FileVersion v = wire::decode_file_version(e.payload, std::string(name));
    if (v.version != version || v.start_seq > v.end_seq || v.end_seq > log_.latest_seqno(data_topic(name))) {
        throw Error(ErrorCode::ChecksumMismatch, "index record for " + std::string(name) + " is inconsistent");
    }
    return v;
}

FileVersion LocalRepository::latest_version(std::string_view name) {
    const std::uint64_t latest = log_.latest_seqno(index_topic(name));
    if (latest == 0) throw Error(ErrorCode::UnknownFile, std::string(name));
    return version_record(name, static_cast<std::uint32_t>(latest));
}

std::vector<FileVersion> LocalRepository::versions(std::string_view name) {
    const std::uint64_t latest = log_.latest_seqno(index_topic(name));
    std::vector<FileVersion> out;
    for (std::uint64_t v = 1; v <= latest; ++v) out.push_back(version_record(name, static_cast<std::uint32_t>(v)));
    return out;
}

Bytes LocalRepository::pull_file(std::string_view name, std::optional<std::uint32_t> version) {
    const FileVersion v = version ? version_record(name, *version) : latest_version(name);
    Bytes out;
    out.reserve(v.byte_length);
    for (const LogEntry& e : log_.read_range(data_topic(name), v.start_seq, v.end_seq)) {
        out.insert(out.end(), e.payload.begin(), e.payload.end());
    }
    if (out.size() != v.byte_length || content_digest(out) != v.checksum) {
        throw Error(ErrorCode::ChecksumMismatch, std::string(name) + " v" + std::to_string(v.version));
    }
    return out;
}

std::optional<FileVersion> wait_for_new_version(Repository& repo, std::string_view name, std::uint32_t after,
                                                Millis poll_interval, std::optional<Timestamp> deadline,
                                                Clock& clock) {
    if (poll_interval <= Millis::zero()) throw Error(ErrorCode::InvalidArgument, "poll interval must be > 0");
    Timestamp next = clock.now();
    for (;;) {
        if (deadline && clock.now() > *deadline) return std::nullopt;
        try {
            FileVersion v = repo.latest_version(name);
            if (v.version > after) return v;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::UnknownFile) throw;
        }
        next += poll_interval;
        if (deadline && next > *deadline) {
            clock.sleep_until(*deadline);
            // One last look exactly at the deadline.
            try {
                FileVersion v = repo.latest_version(name);
                if (v.version > after) return v;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::UnknownFile) throw;
            }
            return std::nullopt;
        }
        clock.sleep_until(next);
    }
}

FileVersion distribute_software(Repository& repo, std::string_view package_name, ByteView content) {
    check_file_name(package_name);
    return repo.push_file(std::string(kSoftwarePrefix) + std::string(package_name), content);
}

SoftwareUpdater::SoftwareUpdater(Repository& repo, std::string package_name, Installer installer)
    : repo_(repo), package_(std::string(kSoftwarePrefix) + std::move(package_name)), installer_(std::move(installer)) {}

std::optional<std::uint32_t> SoftwareUpdater::poll_once() {
    FileVersion latest;
    try {
        latest = repo_.latest_version(package_);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::UnknownFile) return std::nullopt;
        throw;
    }
    if (latest.version <= installed_) return std::nullopt;
    const Bytes content = repo_.pull_file(package_, latest.version);
    installer_(latest.version, content);
    installed_ = latest.version;
    return installed_;
}

std::unique_ptr<Repository> open_repository(std::string_view address) {
    constexpr std::string_view kTcp = "tcp://";
    if (address.substr(0, kTcp.size()) == kTcp) {
        const std::string_view rest = address.substr(kTcp.size());
        const auto colon = rest.rfind(':');
        if (colon == std::string_view::npos || colon == 0) {
            throw Error(ErrorCode::InvalidArgument, "expected tcp://host:port, got " + std::string(address));
        }
        unsigned port = 0;
        const std::string_view digits = rest.substr(colon + 1);
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
        if (ec != std::errc{} || ptr != digits.data() + digits.size() || port == 0 || port > 65535) {
            throw Error(ErrorCode::InvalidArgument, "bad port in " + std::string(address));
        }
        return std::make_unique<RemoteRepository>(std::string(rest.substr(0, colon)),
                                                  static_cast<std::uint16_t>(port));
    }
    if (address.empty()) throw Error(ErrorCode::InvalidArgument, "repository address is empty");
    return std::make_unique<LocalRepository>(std::filesystem::path(address));
}

} // namespace rbf
