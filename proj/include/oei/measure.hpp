#pragma once

// The measurement engine: per-operation traces and return hash, the global
// CVI state, and signed attestation blobs.

#include "oei/crypto.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

namespace oei::measure {

/// Branch outcomes packed LSB-first; the final byte is zero-padded.
class BitTrace {
public:
  void push(bool bit);
  bool get(std::size_t i) const { return (bytes_[i / 8] >> (i % 8)) & 1; }
  std::size_t size() const { return bits_; }
  bool empty() const { return bits_ == 0; }
  const Bytes& bytes() const { return bytes_; }
  void clear();
  void append(const BitTrace& other);

  static BitTrace from_bits(const std::vector<bool>& bits);
  /// Throws DecodeError when `bytes` is not the canonical packing of `bits`.
  static BitTrace from_packed(Bytes bytes, std::size_t bits);

  bool operator==(const BitTrace&) const = default;

private:
  Bytes bytes_;
  std::size_t bits_ = 0;
};

struct Trace {
  BitTrace bin;
  std::vector<std::uint64_t> addr;

  std::size_t byte_size() const { return bin.bytes().size() + 8 * addr.size(); }
  bool empty() const { return bin.empty() && addr.empty(); }
  bool operator==(const Trace&) const = default;
};

struct ContextRecord {
  std::uint64_t var_id = 0;
  std::uint64_t ret_addr = 0;
  bool operator==(const ContextRecord&) const = default;
};

/// Word range [begin, end).
struct Range {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
  std::uint64_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return size() == 0; }
  bool operator==(const Range&) const = default;
};

class UnregisteredPointer : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// VariableIDs are word addresses; bounds are word ranges.
class CviState {
public:
  void define(std::uint64_t var_id, std::int64_t value);
  /// True when the value matches (or is adopted on first sight).
  bool use(std::uint64_t var_id, std::int64_t observed, std::uint64_t current_ret);

  void register_pointer(std::uint64_t pointer_id, Range pointee);
  void unregister_pointer(std::uint64_t pointer_id);
  std::optional<Range> pointee(std::uint64_t pointer_id) const;

  /// Overlap of [base, base+len) with the pointer's registered pointee.
  Range bounds_adjust(std::uint64_t pointer_id, std::uint64_t access_base, std::uint64_t access_len) const;

  /// Multi-word accesses through a critical pointer: only overlapping words
  /// are defined or checked. `values[k]` belongs to word access_base + k.
  void define_via(std::uint64_t pointer_id, std::uint64_t access_base, const std::vector<std::int64_t>& values);
  bool use_via(std::uint64_t pointer_id, std::uint64_t access_base, const std::vector<std::int64_t>& values,
               std::uint64_t current_ret);

  bool flag() const { return f_; }
  const std::vector<ContextRecord>& context() const { return c_; }
  const std::map<std::uint64_t, std::int64_t>& values() const { return values_; }
  std::optional<std::int64_t> value(std::uint64_t var_id) const;

  /// Clears F and C once a blob carrying them has been emitted.
  void acknowledge();

private:
  std::map<std::uint64_t, std::int64_t> values_;
  std::map<std::uint64_t, Range> bounds_;
  bool f_ = false;
  std::vector<ContextRecord> c_;
};

// ---------------------------------------------------------------- blobs

inline constexpr std::uint8_t kBlobVersion = 1;
inline constexpr std::size_t kMaxContextRecords = 255;

enum class SegmentKind : std::uint8_t { Intermediate = 0, Final = 1, Aborted = 2 };

struct InterruptEvidence {
  std::uint32_t irq = 0;
  std::uint64_t handler = 0;
  Trace trace;
  Digest h = kZeroDigest;
  bool operator==(const InterruptEvidence&) const = default;
};

struct Blob {
  std::uint8_t version = kBlobVersion;
  SegmentKind kind = SegmentKind::Final;
  std::uint32_t op_id = 0;
  std::uint32_t segment_index = 0;
  Digest prev_hash = kZeroDigest;
  Nonce nonce{};
  Trace trace;
  Digest h = kZeroDigest;
  bool f = false;
  std::vector<ContextRecord> c;
  std::vector<InterruptEvidence> interrupts;
  Signature signature{};

  bool operator==(const Blob&) const = default;
};

class DecodeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Everything except the trailing signature.
Bytes encode_unsigned(const Blob& blob);
Bytes encode(const Blob& blob);
/// Strict: rejects trailing bytes, non-canonical padding and unknown kinds.
Blob decode(std::span<const std::uint8_t> bytes);

void sign_blob(Blob& blob, const SigningKey& key);
/// Checks the signature over the exact encoded bytes.
bool check_signature(std::span<const std::uint8_t> encoded, const PublicKey& pub);

/// Chaining hash of a sealed segment: BLAKE2s-256 of its full encoding.
Digest segment_hash(std::span<const std::uint8_t> encoded);

// ---------------------------------------------------------------- session

struct SessionConfig {
  std::size_t capacity = 4096; // bytes of S_bin + S_addr before a flush
  bool hash_returns = true;    // false: returns are appended to S_addr instead
};

/// Per-operation measurement state. Interrupt handlers record into a child.
class MeasurementSession {
public:
  MeasurementSession(std::uint32_t op_id, Nonce nonce, const SigningKey* key, SessionConfig cfg = {});

  std::uint32_t op_id() const { return op_id_; }

  void record_branch(bool taken);
  void record_indirect(std::uint64_t dest);
  void record_return(std::uint64_t ret_addr);

  void begin_interrupt(std::uint32_t irq, std::uint64_t handler_entry);
  void end_interrupt();
  bool in_interrupt() const { return child_.has_value(); }

  const Trace& trace() const { return trace_; }
  const Digest& hash() const { return h_; }
  const std::vector<InterruptEvidence>& interrupts() const { return interrupts_; }
  const std::vector<Bytes>& sealed() const { return sealed_; }

  /// Seals the current buffer as an intermediate segment.
  void flush();
  /// Seals the final segment carrying F and C and returns every segment.
  std::vector<Bytes> finalize(const CviState& cvi, SegmentKind kind = SegmentKind::Final);

private:
  void make_room(std::size_t bytes);
  Blob seal(SegmentKind kind);

  std::uint32_t op_id_;
  Nonce nonce_;
  const SigningKey* key_;
  SessionConfig cfg_;
  Trace trace_;
  Digest h_ = kZeroDigest;
  std::optional<InterruptEvidence> child_;
  std::vector<InterruptEvidence> interrupts_;
  std::vector<Bytes> sealed_;
  Digest prev_ = kZeroDigest;
};

} // namespace oei::measure
