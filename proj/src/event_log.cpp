#include "rbf/event_log.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <utility>

#include "rbf/error.hpp"

namespace rbf {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kIndexMagic{'R', 'B', 'F', 'I'};
constexpr std::array<char, 4> kDataMagic{'R', 'B', 'F', 'D'};
constexpr std::size_t kNameMax = 255;

void put_u32(std::uint8_t* p, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
void put_u64(std::uint8_t* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}
std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}
std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

[[noreturn]] void storage_failure(const std::string& what) {
    throw Error(ErrorCode::StorageFailure, what + ": " + std::strerror(errno));
}

struct IndexRecord {
    std::uint64_t seqno = 0;
    std::uint64_t offset = 0;
    std::uint32_t length = 0;
    std::uint32_t crc = 0;
    std::int64_t time_ms = 0;

    void encode(std::uint8_t* out) const {
        put_u64(out, seqno);
        put_u64(out + 8, offset);
        put_u32(out + 16, length);
        put_u32(out + 20, crc);
        put_u64(out + 24, static_cast<std::uint64_t>(time_ms));
    }
    static IndexRecord decode(const std::uint8_t* in) {
        return {get_u64(in), get_u64(in + 8), get_u32(in + 16), get_u32(in + 20),
                static_cast<std::int64_t>(get_u64(in + 24))};
    }
};

bool pread_all(int fd, void* buf, std::size_t n, off_t off) {
    auto* p = static_cast<std::uint8_t*>(buf);
    while (n > 0) {
        ssize_t r = ::pread(fd, p, n, off);
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) return false;
        p += r;
        n -= static_cast<std::size_t>(r);
        off += r;
    }
    return true;
}

bool pwrite_all(int fd, const void* buf, std::size_t n, off_t off) {
    const auto* p = static_cast<const std::uint8_t*>(buf);
    while (n > 0) {
        ssize_t r = ::pwrite(fd, p, n, off);
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) return false;
        p += r;
        n -= static_cast<std::size_t>(r);
        off += r;
    }
    return true;
}

off_t file_size(int fd) {
    struct stat st {};
    if (::fstat(fd, &st) != 0) storage_failure("fstat");
    return st.st_size;
}

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }
    [[nodiscard]] int get() const { return fd_; }

private:
    int fd_ = -1;
};

Fd open_with_header(const fs::path& path, const std::array<char, 4>& magic) {
    int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) storage_failure("open " + path.string());
    Fd owned(fd);
    std::array<std::uint8_t, EventLog::kHeaderSize> header{};
    std::memcpy(header.data(), magic.data(), 4);
    put_u32(header.data() + 4, EventLog::kFormatVersion);
    const off_t size = file_size(fd);
    if (size < static_cast<off_t>(header.size())) {
        // Fresh file, or creation torn before the header landed.
        if (::ftruncate(fd, 0) != 0 || !pwrite_all(fd, header.data(), header.size(), 0) ||
            ::fsync(fd) != 0) {
            storage_failure("write header " + path.string());
        }
        return owned;
    }
    std::array<std::uint8_t, EventLog::kHeaderSize> found{};
    if (!pread_all(fd, found.data(), found.size(), 0)) storage_failure("read header");
    if (std::memcmp(found.data(), magic.data(), 4) != 0) {
        throw Error(ErrorCode::StorageFailure, "bad magic in " + path.string());
    }
    if (get_u32(found.data() + 4) != EventLog::kFormatVersion) {
        throw Error(ErrorCode::StorageFailure, "unsupported format version in " + path.string());
    }
    return owned;
}

} // namespace

std::uint32_t crc32_of(ByteView data) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; payloads are bounded by max block size anyway.
    std::size_t done = 0;
    while (done < data.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - done, 1u << 30));
        crc = ::crc32(crc, data.data() + done, chunk);
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::string encode_topic_dirname(std::string_view topic) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    out.reserve(topic.size());
    for (unsigned char c : topic) {
        const bool plain = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                           (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        if (plain) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xF]);
        }
    }
    // "." and ".." are plain characters but not usable as directory names.
    if (out == "." || out == "..") out = out == "." ? "%2E" : "%2E%2E";
    return out;
}

std::string decode_topic_dirname(std::string_view dirname) {
    auto hex = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    std::string out;
    for (std::size_t i = 0; i < dirname.size(); ++i) {
        if (dirname[i] == '%') {
            const int hi = i + 1 < dirname.size() ? hex(dirname[i + 1]) : -1;
            const int lo = i + 2 < dirname.size() ? hex(dirname[i + 2]) : -1;
            if (hi < 0 || lo < 0) throw Error(ErrorCode::InvalidTopic, "bad escape in directory name");
            out.push_back(static_cast<char>(hi * 16 + lo));
            i += 2;
        } else {
            out.push_back(dirname[i]);
        }
    }
    return out;
}

TopicName::TopicName(std::string name) : name_(std::move(name)) {
    if (name_.empty()) throw Error(ErrorCode::InvalidTopic, "topic name is empty");
    if (name_.size() > kMaxLength) throw Error(ErrorCode::InvalidTopic, "topic name exceeds 255 bytes");
    if (name_.find('\0') != std::string::npos || name_.find('\\') != std::string::npos) {
        throw Error(ErrorCode::InvalidTopic, "topic name contains NUL or backslash");
    }
    if (encode_topic_dirname(name_).size() > kNameMax) {
        throw Error(ErrorCode::InvalidTopic, "encoded topic name exceeds NAME_MAX");
    }
}

class EventLog::Topic {
public:
    Topic(const fs::path& dir, const LogOptions& options) : options_(options) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw Error(ErrorCode::StorageFailure, "create " + dir.string() + ": " + ec.message());
        index_ = open_with_header(dir / "index", kIndexMagic);
        data_ = open_with_header(dir / "data", kDataMagic);
        recover();
    }

    [[nodiscard]] std::uint64_t count() const { return count_.load(std::memory_order_acquire); }

    std::uint64_t append(ByteView payload, Timestamp now) {
        std::lock_guard lock(write_mu_);
        const std::uint64_t seqno = count() + 1;
        const std::uint64_t offset = data_end_;
        const off_t index_off = static_cast<off_t>(kHeaderSize + (seqno - 1) * kIndexRecordSize);

        IndexRecord rec{seqno, offset, static_cast<std::uint32_t>(payload.size()), crc32_of(payload),
                        ms_of(now)};
        std::array<std::uint8_t, kIndexRecordSize> raw{};
        rec.encode(raw.data());

        const bool ok = pwrite_all(data_.get(), payload.data(), payload.size(), static_cast<off_t>(offset)) &&
                        (!options_.sync || ::fdatasync(data_.get()) == 0) &&
                        pwrite_all(index_.get(), raw.data(), raw.size(), index_off) &&
                        (!options_.sync || ::fdatasync(index_.get()) == 0);
        if (!ok) {
            const int saved = errno;
            // Roll back to the last acknowledged state.
            [[maybe_unused]] int r1 = ::ftruncate(data_.get(), static_cast<off_t>(offset));
            [[maybe_unused]] int r2 = ::ftruncate(index_.get(), index_off);
            errno = saved;
            storage_failure("append");
        }
        data_end_ = offset + payload.size();
        count_.store(seqno, std::memory_order_release);
        return seqno;
    }

    [[nodiscard]] IndexRecord record(std::uint64_t seqno) const {
        std::array<std::uint8_t, kIndexRecordSize> raw{};
        const off_t off = static_cast<off_t>(kHeaderSize + (seqno - 1) * kIndexRecordSize);
        if (!pread_all(index_.get(), raw.data(), raw.size(), off)) storage_failure("read index");
        return IndexRecord::decode(raw.data());
    }

    [[nodiscard]] Bytes payload(const IndexRecord& rec) const {
        Bytes out(rec.length);
        if (rec.length > 0 && !pread_all(data_.get(), out.data(), out.size(), static_cast<off_t>(rec.offset))) {
            storage_failure("read data");
        }
        return out;
    }

private:
    void recover() {
        const off_t index_size = file_size(index_.get());
        const off_t data_size = file_size(data_.get());
        std::uint64_t n = static_cast<std::uint64_t>(index_size - static_cast<off_t>(kHeaderSize)) / kIndexRecordSize;

        // Structural pass: seqnos dense and data ranges contiguous.
        std::uint64_t expected_offset = kHeaderSize;
        std::uint64_t valid = 0;
        for (std::uint64_t s = 1; s <= n; ++s) {
            const IndexRecord rec = record(s);
            if (rec.seqno != s || rec.offset != expected_offset ||
                rec.offset + rec.length > static_cast<std::uint64_t>(data_size)) {
                break;
            }
            expected_offset = rec.offset + rec.length;
            valid = s;
        }
        // The last surviving record may still be torn inside its payload.
        while (valid > 0) {
            const IndexRecord rec = record(valid);
            if (crc32_of(payload(rec)) == rec.crc) break;
            --valid;
        }
        data_end_ = valid == 0 ? kHeaderSize : [&] {
            const IndexRecord rec = record(valid);
            return rec.offset + rec.length;
        }();
        const off_t want_index = static_cast<off_t>(kHeaderSize + valid * kIndexRecordSize);
        if (index_size != want_index && ::ftruncate(index_.get(), want_index) != 0) storage_failure("truncate index");
        if (data_size != static_cast<off_t>(data_end_) &&
            ::ftruncate(data_.get(), static_cast<off_t>(data_end_)) != 0) {
            storage_failure("truncate data");
        }
        count_.store(valid, std::memory_order_release);
    }

    LogOptions options_;
    Fd index_;
    Fd data_;
    std::mutex write_mu_;
    std::uint64_t data_end_ = kHeaderSize;
    std::atomic<std::uint64_t> count_{0};
};

EventLog::EventLog(fs::path root, std::shared_ptr<Clock> clock, LogOptions options)
    : root_(std::move(root)), clock_(std::move(clock)), options_(options) {
    if (!clock_) clock_ = std::make_shared<SystemClock>();
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_)) {
        throw Error(ErrorCode::StorageFailure, "cannot use log root " + root_.string());
    }
    for (const auto& entry : fs::directory_iterator(root_)) {
        if (!entry.is_directory()) continue;
        const std::string name = decode_topic_dirname(entry.path().filename().string());
        topics_.emplace(name, std::make_unique<Topic>(entry.path(), options_));
    }
}

EventLog::~EventLog() = default;

EventLog::Topic* EventLog::find(const TopicName& topic) const {
    std::lock_guard lock(topics_mu_);
    auto it = topics_.find(topic.str());
    return it == topics_.end() ? nullptr : it->second.get();
}

EventLog::Topic& EventLog::find_or_create(const TopicName& topic) {
    std::lock_guard lock(topics_mu_);
    auto it = topics_.find(topic.str());
    if (it != topics_.end()) return *it->second;
    auto created = std::make_unique<Topic>(root_ / encode_topic_dirname(topic.str()), options_);
    return *topics_.emplace(topic.str(), std::move(created)).first->second;
}

std::uint64_t EventLog::append(const TopicName& topic, ByteView payload) {
    if (payload.size() > options_.max_block_size) {
        throw Error(ErrorCode::PayloadTooLarge, std::to_string(payload.size()) + " bytes exceeds block size " +
                                                    std::to_string(options_.max_block_size));
    }
    return find_or_create(topic).append(payload, clock_->now());
}

LogEntry EventLog::read_entry(const Topic& t, const TopicName& name, std::uint64_t seqno) const {
    const IndexRecord rec = t.record(seqno);
    Bytes payload = t.payload(rec);
    if (crc32_of(payload) != rec.crc) {
        throw Error(ErrorCode::ChecksumMismatch,
                    "crc mismatch at " + name.str() + "#" + std::to_string(seqno));
    }
    return LogEntry{name, seqno, std::move(payload), at_ms(rec.time_ms)};
}

LogEntry EventLog::read(const TopicName& topic, std::uint64_t seqno) const {
    const Topic* t = find(topic);
    if (t == nullptr) throw Error(ErrorCode::UnknownTopic, topic.str());
    if (seqno == 0 || seqno > t->count()) {
        throw Error(ErrorCode::NotFound, topic.str() + "#" + std::to_string(seqno));
    }
    return read_entry(*t, topic, seqno);
}

std::uint64_t EventLog::latest_seqno(const TopicName& topic) const {
    const Topic* t = find(topic);
    return t == nullptr ? 0 : t->count();
}

std::vector<LogEntry> EventLog::read_range(const TopicName& topic, std::uint64_t from, std::uint64_t to) const {
    const Topic* t = find(topic);
    if (t == nullptr) throw Error(ErrorCode::UnknownTopic, topic.str());
    const std::uint64_t latest = t->count();
    if (from == 0 || from > to || to > latest) {
        throw Error(ErrorCode::InvalidRange, "[" + std::to_string(from) + ", " + std::to_string(to) +
                                                 "] with latest " + std::to_string(latest));
    }
    std::vector<LogEntry> out;
    out.reserve(to - from + 1);
    for (std::uint64_t s = from; s <= to; ++s) out.push_back(read_entry(*t, topic, s));
    return out;
}

std::vector<LogEntry> EventLog::poll_since(const TopicName& topic, std::uint64_t after) const {
    const Topic* t = find(topic);
    if (t == nullptr) throw Error(ErrorCode::UnknownTopic, topic.str());
    const std::uint64_t latest = t->count();
    std::vector<LogEntry> out;
    for (std::uint64_t s = after + 1; s <= latest; ++s) out.push_back(read_entry(*t, topic, s));
    return out;
}

std::vector<TopicName> EventLog::topics() const {
    std::lock_guard lock(topics_mu_);
    std::vector<TopicName> out;
    for (const auto& [name, _] : topics_) out.emplace_back(name);
    return out;
}

} // namespace rbf
