#include "oei/protocol.hpp"

#include <fmt/format.h>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <cstring>

namespace oei::protocol {

namespace {

void put_be32(Bytes& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

bool known_type(std::uint8_t t) { return t >= 1 && t <= 3; }

std::string errno_text() { return std::strerror(errno); }

void read_exact(int fd, std::uint8_t* buf, std::size_t n) {
  while (n > 0) {
    const auto r = ::recv(fd, buf, n, 0);
    if (r == 0)
      throw TransportError("connection closed by peer");
    if (r < 0) {
      if (errno == EINTR)
        continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK)
        throw TransportError("timed out waiting for data");
      throw TransportError("receive failed: " + errno_text());
    }
    buf += r;
    n -= static_cast<std::size_t>(r);
  }
}

void write_all(int fd, const std::uint8_t* buf, std::size_t n) {
  while (n > 0) {
    const auto r = ::send(fd, buf, n, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR)
        continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK)
        throw TransportError("timed out sending data");
      throw TransportError("send failed: " + errno_text());
    }
    buf += r;
    n -= static_cast<std::size_t>(r);
  }
}

void set_timeouts(int fd, std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

Frame error_frame(std::string_view msg) { return {MsgType::Error, Bytes(msg.begin(), msg.end())}; }

} // namespace

Bytes encode_frame(const Frame& f) {
  Bytes out;
  out.reserve(f.payload.size() + 5);
  put_be32(out, static_cast<std::uint32_t>(f.payload.size()));
  out.push_back(static_cast<std::uint8_t>(f.type));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t max_frame) {
  if (bytes.size() < 5)
    throw TransportError("truncated frame header");
  const auto len = get_be32(bytes.data());
  if (len > max_frame)
    throw TransportError(fmt::format("frame of {} bytes exceeds the {} byte limit", len, max_frame));
  if (!known_type(bytes[4]))
    throw TransportError(fmt::format("unknown frame type {}", bytes[4]));
  if (bytes.size() - 5 != len)
    throw TransportError("frame length does not match its payload");
  return {static_cast<MsgType>(bytes[4]), Bytes(bytes.begin() + 5, bytes.end())};
}

Bytes encode_challenge(const Challenge& c) {
  Bytes out(c.nonce.begin(), c.nonce.end());
  put_be32(out, c.op_id);
  const auto js = io::inputs_to_json(c.inputs).dump();
  out.insert(out.end(), js.begin(), js.end());
  return out;
}

Challenge decode_challenge(std::span<const std::uint8_t> p) {
  if (p.size() < 20)
    throw io::FormatError("truncated challenge");
  Challenge c;
  std::copy_n(p.begin(), 16, c.nonce.begin());
  c.op_id = get_be32(p.data() + 16);
  try {
    c.inputs = io::parse_inputs(nlohmann::json::parse(p.begin() + 20, p.end()));
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(fmt::format("challenge inputs: {}", e.what()));
  }
  return c;
}

Frame read_frame(int fd, std::size_t max_frame) {
  std::uint8_t hdr[5];
  read_exact(fd, hdr, sizeof hdr);
  const auto len = get_be32(hdr);
  if (len > max_frame)
    throw TransportError(fmt::format("frame of {} bytes exceeds the {} byte limit", len, max_frame));
  if (!known_type(hdr[4]))
    throw TransportError(fmt::format("unknown frame type {}", hdr[4]));
  Frame f{static_cast<MsgType>(hdr[4]), Bytes(len)};
  read_exact(fd, f.payload.data(), len);
  return f;
}

void write_frame(int fd, const Frame& f) {
  const auto bytes = encode_frame(f);
  write_all(fd, bytes.data(), bytes.size());
}

std::size_t max_frame_from_env() {
  const char* v = std::getenv("OEI_MAX_FRAME");
  if (!v || !*v)
    return kDefaultMaxFrame;
  std::size_t n = 0;
  const auto* end = v + std::strlen(v);
  if (std::from_chars(v, end, n).ptr != end || n == 0)
    throw std::invalid_argument(fmt::format("OEI_MAX_FRAME='{}' is not a positive integer", v));
  return n;
}

bool ReplaySet::insert(const Nonce& n) {
  std::lock_guard lock(mu_);
  return seen_.insert(n).second;
}

bool ReplaySet::contains(const Nonce& n) const {
  std::lock_guard lock(mu_);
  return seen_.count(n) != 0;
}

std::size_t ReplaySet::size() const {
  std::lock_guard lock(mu_);
  return seen_.size();
}

Endpoint parse_endpoint(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0)
    throw std::invalid_argument(fmt::format("endpoint '{}' is not host:port", text));
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  const auto port = text.substr(colon + 1);
  unsigned v = 0;
  if (std::from_chars(port.data(), port.data() + port.size(), v).ptr != port.data() + port.size() || port.empty() ||
      v > 65535)
    throw std::invalid_argument(fmt::format("endpoint '{}' has an invalid port", text));
  ep.port = static_cast<std::uint16_t>(v);
  return ep;
}

// ---------------------------------------------------------------- service

Service::Service(instrument::InstrumentedProgram program, SigningKey key, ServiceOptions options)
    : program_(std::move(program)), key_(key), opt_(std::move(options)) {}

Service::~Service() { stop(); }

std::uint16_t Service::listen(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const auto port = std::to_string(ep.port);
  if (const int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError(fmt::format("cannot resolve '{}': {}", ep.host, ::gai_strerror(rc)));
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw TransportError("socket failed: " + errno_text());
  }
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
    const auto msg = errno_text();
    ::freeaddrinfo(res);
    ::close(fd);
    throw TransportError(fmt::format("cannot listen on {}:{}: {}", ep.host, ep.port, msg));
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t blen = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &blen);
  listen_fd_ = fd;
  return ntohs(bound.sin_port);
}

void Service::serve() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR)
        continue;
      break;
    }
    std::lock_guard lock(workers_mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    open_fds_.insert(fd);
    workers_.emplace_back([this, fd] { connection(fd); });
  }
}

void Service::start() {
  accept_thread_ = std::thread([this] { serve(); });
}

void Service::stop() {
  if (stopping_.exchange(true))
    return;
  if (listen_fd_ >= 0)
    ::shutdown(listen_fd_, SHUT_RDWR);
  if (accept_thread_.joinable())
    accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mu_);
    for (int fd : open_fds_)
      ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers)
    t.join();
  if (listen_fd_ >= 0)
    ::close(listen_fd_);
  listen_fd_ = -1;
}

Frame Service::handle(const Frame& request) const {
  if (request.type != MsgType::Challenge)
    return error_frame("expected a CHALLENGE frame");
  Challenge c;
  try {
    c = decode_challenge(request.payload);
  } catch (const std::exception& e) {
    return error_frame(e.what());
  }
  prover::RunOptions ro;
  ro.inputs = c.inputs;
  ro.nonce = c.nonce;
  ro.key = &key_;
  ro.faults = opt_.faults;
  ro.interrupts = opt_.interrupts;
  ro.session = opt_.session;
  try {
    const auto r = prover::run(program_, ro);
    return {MsgType::Blob, io::pack_segments(r.segments)};
  } catch (const std::exception& e) {
    return error_frame(fmt::format("prover failed: {}", e.what()));
  }
}

void Service::connection(int fd) {
  set_timeouts(fd, opt_.io_timeout);
  try {
    for (;;) {
      const auto req = read_frame(fd, opt_.max_frame);
      const auto reply = handle(req);
      ++answered_;
      write_frame(fd, reply);
    }
  } catch (const TransportError& e) {
    const std::string_view msg = e.what();
    if (msg != "connection closed by peer" && !stopping_) {
      fmt::print(stderr, "oei serve: closing connection: {}\n", msg);
      try {
        write_frame(fd, error_frame(msg));
      } catch (const TransportError&) {
      }
    }
  }
  std::lock_guard lock(workers_mu_);
  open_fds_.erase(fd);
  ::close(fd);
}

// ---------------------------------------------------------------- client

namespace {

int connect_to(const Endpoint& ep, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto port = std::to_string(ep.port);
  if (const int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError(fmt::format("cannot resolve '{}': {}", ep.host, ::gai_strerror(rc)));
  int fd = -1;
  std::string err = "no addresses";
  for (auto* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0)
      continue;
    set_timeouts(fd, timeout);
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
      break;
    err = errno_text();
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0)
    throw TransportError(fmt::format("cannot connect to {}:{}: {}", ep.host, ep.port, err));
  return fd;
}

struct FdGuard {
  int fd;
  ~FdGuard() { ::close(fd); }
};

} // namespace

std::vector<Bytes> exchange(const Endpoint& ep, const Challenge& c, const ClientOptions& opt) {
  FdGuard g{connect_to(ep, opt.timeout)};
  write_frame(g.fd, {MsgType::Challenge, encode_challenge(c)});
  const auto reply = read_frame(g.fd, opt.max_frame);
  if (reply.type == MsgType::Error)
    throw std::runtime_error("prover error: " + std::string(reply.payload.begin(), reply.payload.end()));
  if (reply.type != MsgType::Blob)
    throw TransportError("unexpected reply frame type");
  return io::unpack_segments(reply.payload);
}

verifier::Report verify_reply(const std::vector<Bytes>& segments, const Challenge& c, const bundle::CfgBundle& cfg,
                              const PublicKey& device_key, const ClientOptions& opt) {
  return verifier::verify(segments, cfg, c.op_id, c.nonce, device_key, opt.limits);
}

verifier::Report request_attestation(const Endpoint& ep, std::uint32_t op_id, const std::vector<std::int64_t>& inputs,
                                     const bundle::CfgBundle& cfg, const PublicKey& device_key, ReplaySet& replay,
                                     const ClientOptions& opt) {
  Challenge c;
  c.op_id = op_id;
  c.inputs = inputs;
  do
    c.nonce = random_nonce();
  while (!replay.insert(c.nonce));
  return verify_reply(exchange(ep, c, opt), c, cfg, device_key, opt);
}

} // namespace oei::protocol
