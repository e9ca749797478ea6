#pragma once

// Challenge-response transport. Frames are a 4-byte big-endian payload
// length, a 1-byte message type and the payload.
//
//   CHALLENGE  nonce[16] | op_id u32 BE | inputs JSON (`{"inputs": [...]}`)
//   BLOB       blob container (see io.hpp)
//   ERROR      UTF-8 message

#include "oei/bundle.hpp"
#include "oei/io.hpp"
#include "oei/verifier.hpp"

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace oei::protocol {

enum class MsgType : std::uint8_t { Challenge = 1, Blob = 2, Error = 3 };

inline constexpr std::size_t kDefaultMaxFrame = 1u << 20;

struct Frame {
  MsgType type = MsgType::Error;
  Bytes payload;
  bool operator==(const Frame&) const = default;
};

/// Framing violations, timeouts and connection failures.
class TransportError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

Bytes encode_frame(const Frame& f);
/// Decodes exactly one frame occupying all of `bytes`.
Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t max_frame = kDefaultMaxFrame);

struct Challenge {
  Nonce nonce{};
  std::uint32_t op_id = 0;
  std::vector<std::int64_t> inputs;
  bool operator==(const Challenge&) const = default;
};

Bytes encode_challenge(const Challenge& c);
Challenge decode_challenge(std::span<const std::uint8_t> payload);

/// Reads a frame from a socket; throws TransportError on EOF, timeout or a
/// framing violation (oversized length, unknown type).
Frame read_frame(int fd, std::size_t max_frame = kDefaultMaxFrame);
void write_frame(int fd, const Frame& f);

/// Frame limit from OEI_MAX_FRAME, else the default.
std::size_t max_frame_from_env();

/// Nonces issued by a verifier; insert-if-absent is safe across threads.
class ReplaySet {
public:
  bool insert(const Nonce& n);
  bool contains(const Nonce& n) const;
  std::size_t size() const;

private:
  mutable std::mutex mu_;
  std::set<Nonce> seen_;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "host:port".
Endpoint parse_endpoint(std::string_view text);

struct ServiceOptions {
  std::size_t max_frame = kDefaultMaxFrame;
  std::vector<prover::FaultSpec> faults;
  std::vector<prover::InterruptEvent> interrupts;
  measure::SessionConfig session;
  std::chrono::milliseconds io_timeout{10'000};
};

/// Prover service: one thread per connection, one prover run per challenge.
class Service {
public:
  Service(instrument::InstrumentedProgram program, SigningKey key, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and listens; port 0 picks a free port. Returns the bound port.
  std::uint16_t listen(const Endpoint& ep);
  /// Accept loop; returns after stop().
  void serve();
  /// Starts serve() on a background thread.
  void start();
  void stop();

  std::size_t answered() const { return answered_.load(); }

  /// Handles a single challenge frame; exposed for in-process tests.
  Frame handle(const Frame& request) const;

private:
  void connection(int fd);

  instrument::InstrumentedProgram program_;
  SigningKey key_;
  ServiceOptions opt_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> answered_{0};
  std::thread accept_thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
  std::set<int> open_fds_;
};

struct ClientOptions {
  std::size_t max_frame = kDefaultMaxFrame;
  std::chrono::milliseconds timeout{10'000};
  verifier::WalkLimits limits;
};

/// Sends one challenge and returns the encoded segments of the reply.
/// Throws TransportError, io::FormatError, or std::runtime_error for an ERROR reply.
std::vector<Bytes> exchange(const Endpoint& ep, const Challenge& c, const ClientOptions& opt = {});

/// Fresh nonce, CHALLENGE, BLOB, verify. The nonce is recorded in `replay`.
verifier::Report request_attestation(const Endpoint& ep, std::uint32_t op_id, const std::vector<std::int64_t>& inputs,
                                     const bundle::CfgBundle& cfg, const PublicKey& device_key, ReplaySet& replay,
                                     const ClientOptions& opt = {});

/// Same as above but verifies the given segments instead of the reply; used
/// to model a replayed answer.
verifier::Report verify_reply(const std::vector<Bytes>& segments, const Challenge& c, const bundle::CfgBundle& cfg,
                              const PublicKey& device_key, const ClientOptions& opt = {});

} // namespace oei::protocol
