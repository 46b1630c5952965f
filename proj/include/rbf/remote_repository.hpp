#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "rbf/data_mover.hpp"
#include "rbf/error.hpp"

namespace rbf {

/// Wire format of the remote repository protocol. All integers big-endian.
///
///   request  = [u8 opcode][u16 name length][name][body]
///     push   body = [u32 reserved = 0][u64 content length][content]
///     pull   body = [u32 version, 0 = latest]
///     latest body = (empty)
///   response = [u8 status][body]
///     push/latest ok body = FileVersion (68 bytes)
///     pull ok body        = [u64 content length][content]
///     errors carry no body
///
///   FileVersion = [u32 version][u64 start_seq][u64 end_seq][u64 byte_length]
///                 [32-byte checksum][i64 push_time ms]
namespace wire {

enum class Opcode : std::uint8_t { Push = 1, Pull = 2, Latest = 3 };

enum class Status : std::uint8_t {
    Ok = 0,
    UnknownFile = 1,
    UnknownVersion = 2,
    Corrupt = 3,
    Malformed = 4,
};

inline constexpr std::size_t kFileVersionSize = 4 + 8 + 8 + 8 + 32 + 8;
inline constexpr std::uint64_t kMaxContentLength = 1ull << 32;

struct Request {
    Opcode opcode = Opcode::Latest;
    std::string name;
    std::uint32_t version = 0; // pull only
    Bytes content;             // push only
};

Bytes encode_file_version(const FileVersion& v);
FileVersion decode_file_version(ByteView b, std::string file_name);

Bytes encode_request(const Request& r);

Status status_for(ErrorCode code) noexcept;
ErrorCode error_for(Status status) noexcept;

} // namespace wire

/// Client side of the protocol. One TCP connection per call.
class RemoteRepository final : public Repository {
public:
    RemoteRepository(std::string host, std::uint16_t port);

    FileVersion push_file(std::string_view name, ByteView content) override;
    Bytes pull_file(std::string_view name, std::optional<std::uint32_t> version = std::nullopt) override;
    FileVersion latest_version(std::string_view name) override;

private:
    Bytes round_trip(const wire::Request& r, std::string_view name);
    int connect_socket() const;

    std::string host_;
    std::uint16_t port_;
};

/// Serves a backend repository over TCP. Each connection may carry any
/// number of requests and is handled on its own thread.
class RepositoryServer {
public:
    /// `port` 0 picks an ephemeral port; see port().
    RepositoryServer(Repository& backend, std::uint16_t port = 0, std::string bind_address = "127.0.0.1");
    ~RepositoryServer();

    RepositoryServer(const RepositoryServer&) = delete;
    RepositoryServer& operator=(const RepositoryServer&) = delete;

    [[nodiscard]] std::uint16_t port() const noexcept { return port_; }
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();

private:
    void accept_loop();
    void serve_connection(int fd);

    Repository& backend_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread acceptor_;
    std::mutex conns_mu_;
    std::list<std::thread> connections_;
};

} // namespace rbf
