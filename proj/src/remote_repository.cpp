#include "rbf/remote_repository.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "rbf/error.hpp"

namespace rbf {

namespace wire {

namespace {

void put_be(Bytes& out, std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_be(ByteView b, std::size_t off, int width) {
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | b[off + static_cast<std::size_t>(i)];
    return v;
}

} // namespace

Bytes encode_file_version(const FileVersion& v) {
    Bytes out;
    out.reserve(kFileVersionSize);
    put_be(out, v.version, 4);
    put_be(out, v.start_seq, 8);
    put_be(out, v.end_seq, 8);
    put_be(out, v.byte_length, 8);
    out.insert(out.end(), v.checksum.begin(), v.checksum.end());
    put_be(out, static_cast<std::uint64_t>(ms_of(v.push_time)), 8);
    return out;
}

FileVersion decode_file_version(ByteView b, std::string file_name) {
    if (b.size() != kFileVersionSize) {
        throw Error(ErrorCode::Malformed, "FileVersion record of " + std::to_string(b.size()) + " bytes");
    }
    FileVersion v;
    v.file_name = std::move(file_name);
    v.version = static_cast<std::uint32_t>(get_be(b, 0, 4));
    v.start_seq = get_be(b, 4, 8);
    v.end_seq = get_be(b, 12, 8);
    v.byte_length = get_be(b, 20, 8);
    std::copy(b.begin() + 28, b.begin() + 60, v.checksum.begin());
    v.push_time = at_ms(static_cast<std::int64_t>(get_be(b, 60, 8)));
    return v;
}

Bytes encode_request(const Request& r) {
    if (r.name.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "name longer than 65535 bytes");
    Bytes out;
    out.push_back(static_cast<std::uint8_t>(r.opcode));
    put_be(out, r.name.size(), 2);
    out.insert(out.end(), r.name.begin(), r.name.end());
    switch (r.opcode) {
    case Opcode::Push:
        put_be(out, 0, 4);
        put_be(out, r.content.size(), 8);
        out.insert(out.end(), r.content.begin(), r.content.end());
        break;
    case Opcode::Pull:
        put_be(out, r.version, 4);
        break;
    case Opcode::Latest:
        break;
    }
    return out;
}

Status status_for(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::UnknownFile: return Status::UnknownFile;
    case ErrorCode::UnknownVersion: return Status::UnknownVersion;
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::StorageFailure: return Status::Corrupt;
    default: return Status::Malformed;
    }
}

ErrorCode error_for(Status status) noexcept {
    switch (status) {
    case Status::UnknownFile: return ErrorCode::UnknownFile;
    case Status::UnknownVersion: return ErrorCode::UnknownVersion;
    case Status::Corrupt: return ErrorCode::ChecksumMismatch;
    case Status::Malformed:
    case Status::Ok: break;
    }
    return ErrorCode::Malformed;
}

} // namespace wire

namespace {

/// Reads exactly n bytes; false on clean EOF before the first byte.
bool read_exact(int fd, std::uint8_t* p, std::size_t n, bool eof_ok = false) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::recv(fd, p + got, n - got, 0);
        if (r < 0 && errno == EINTR) continue;
        if (r == 0 && got == 0 && eof_ok) return false;
        if (r <= 0) throw Error(ErrorCode::Malformed, "connection closed mid-message");
        got += static_cast<std::size_t>(r);
    }
    return true;
}

void write_all(int fd, const Bytes& b) {
    std::size_t sent = 0;
    while (sent < b.size()) {
        const ssize_t r = ::send(fd, b.data() + sent, b.size() - sent, MSG_NOSIGNAL);
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) throw Error(ErrorCode::StorageFailure, std::string("send: ") + std::strerror(errno));
        sent += static_cast<std::size_t>(r);
    }
}

std::uint64_t read_be(int fd, int width) {
    std::uint8_t buf[8];
    read_exact(fd, buf, static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | buf[i];
    return v;
}

Bytes read_bytes(int fd, std::uint64_t n) {
    Bytes out(n);
    if (n > 0) read_exact(fd, out.data(), out.size());
    return out;
}

struct SocketGuard {
    int fd;
    ~SocketGuard() {
        if (fd >= 0) ::close(fd);
    }
};

} // namespace

RemoteRepository::RemoteRepository(std::string host, std::uint16_t port) : host_(std::move(host)), port_(port) {}

int RemoteRepository::connect_socket() const {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(port_);
    if (::getaddrinfo(host_.c_str(), port.c_str(), &hints, &res) != 0) {
        throw Error(ErrorCode::StorageFailure, "cannot resolve " + host_);
    }
    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw Error(ErrorCode::StorageFailure, "cannot connect to " + host_ + ":" + port);
    return fd;
}

Bytes RemoteRepository::round_trip(const wire::Request& r, std::string_view name) {
    SocketGuard sock{connect_socket()};
    write_all(sock.fd, wire::encode_request(r));
    std::uint8_t status = 0;
    read_exact(sock.fd, &status, 1);
    const auto st = static_cast<wire::Status>(status);
    if (st != wire::Status::Ok) throw Error(wire::error_for(st), std::string(name) + " (remote)");
    if (r.opcode == wire::Opcode::Pull) {
        const std::uint64_t n = read_be(sock.fd, 8);
        if (n > wire::kMaxContentLength) throw Error(ErrorCode::Malformed, "oversized pull response");
        return read_bytes(sock.fd, n);
    }
    return read_bytes(sock.fd, wire::kFileVersionSize);
}

FileVersion RemoteRepository::push_file(std::string_view name, ByteView content) {
    wire::Request r{wire::Opcode::Push, std::string(name), 0, Bytes(content.begin(), content.end())};
    return wire::decode_file_version(round_trip(r, name), std::string(name));
}

Bytes RemoteRepository::pull_file(std::string_view name, std::optional<std::uint32_t> version) {
    if (version && *version == 0) throw Error(ErrorCode::UnknownVersion, std::string(name) + " v0");
    wire::Request r{wire::Opcode::Pull, std::string(name), version.value_or(0), {}};
    return round_trip(r, name);
}

FileVersion RemoteRepository::latest_version(std::string_view name) {
    wire::Request r{wire::Opcode::Latest, std::string(name), 0, {}};
    return wire::decode_file_version(round_trip(r, name), std::string(name));
}

RepositoryServer::RepositoryServer(Repository& backend, std::uint16_t port, std::string bind_address)
    : backend_(backend) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (listen_fd_ < 0) throw Error(ErrorCode::StorageFailure, "socket");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw Error(ErrorCode::InvalidArgument, "bad bind address " + bind_address);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw Error(ErrorCode::StorageFailure, "bind/listen: " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
}

RepositoryServer::~RepositoryServer() { stop(); }

void RepositoryServer::stop() {
    if (stopping_.exchange(true)) return;
    if (acceptor_.joinable()) acceptor_.join();
    ::close(listen_fd_);
    std::list<std::thread> conns;
    {
        std::lock_guard lock(conns_mu_);
        conns.swap(connections_);
    }
    for (auto& t : conns) t.join();
}

void RepositoryServer::wait() {
    while (!stopping_.load()) {
        ::poll(nullptr, 0, 200);
    }
}

void RepositoryServer::accept_loop() {
    while (!stopping_.load()) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 100) <= 0) continue;
        const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) continue;
        std::lock_guard lock(conns_mu_);
        connections_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void RepositoryServer::serve_connection(int fd) {
    SocketGuard sock{fd};
    const timeval tv{5, 0};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    try {
        for (;;) {
            std::uint8_t opcode = 0;
            if (!read_exact(fd, &opcode, 1, true)) return;
            const auto name_len = read_be(fd, 2);
            const Bytes raw_name = read_bytes(fd, name_len);
            const std::string name(raw_name.begin(), raw_name.end());

            Bytes response;
            auto reply_error = [&](wire::Status st) { response.assign(1, static_cast<std::uint8_t>(st)); };
            try {
                switch (static_cast<wire::Opcode>(opcode)) {
                case wire::Opcode::Push: {
                    if (read_be(fd, 4) != 0) {
                        reply_error(wire::Status::Malformed);
                        write_all(fd, response);
                        return;
                    }
                    const std::uint64_t n = read_be(fd, 8);
                    if (n > wire::kMaxContentLength) {
                        reply_error(wire::Status::Malformed);
                        write_all(fd, response);
                        return;
                    }
                    const Bytes content = read_bytes(fd, n);
                    response.push_back(0);
                    const Bytes body = wire::encode_file_version(backend_.push_file(name, content));
                    response.insert(response.end(), body.begin(), body.end());
                    break;
                }
                case wire::Opcode::Pull: {
                    const auto version = static_cast<std::uint32_t>(read_be(fd, 4));
                    const Bytes content =
                        backend_.pull_file(name, version == 0 ? std::nullopt : std::optional(version));
                    response.push_back(0);
                    for (int i = 7; i >= 0; --i) {
                        response.push_back(static_cast<std::uint8_t>(content.size() >> (8 * i)));
                    }
                    response.insert(response.end(), content.begin(), content.end());
                    break;
                }
                case wire::Opcode::Latest: {
                    response.push_back(0);
                    const Bytes body = wire::encode_file_version(backend_.latest_version(name));
                    response.insert(response.end(), body.begin(), body.end());
                    break;
                }
                default:
                    reply_error(wire::Status::Malformed);
                    write_all(fd, response);
                    return; // framing is unknown past a bad opcode
                }
            } catch (const Error& e) {
                reply_error(wire::status_for(e.code()));
            }
            write_all(fd, response);
        }
    } catch (const Error&) {
        // Peer vanished or sent a truncated frame; drop the connection.
    }
}

} // namespace rbf
