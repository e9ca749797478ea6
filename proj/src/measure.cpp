#include "oei/measure.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace oei::measure {

// ---------------------------------------------------------------- BitTrace

void BitTrace::push(bool bit) {
  if (bits_ % 8 == 0)
    bytes_.push_back(0);
  if (bit)
    bytes_.back() |= static_cast<std::uint8_t>(1u << (bits_ % 8));
  ++bits_;
}

void BitTrace::clear() {
  bytes_.clear();
  bits_ = 0;
}

void BitTrace::append(const BitTrace& other) {
  for (std::size_t i = 0; i < other.size(); ++i)
    push(other.get(i));
}

BitTrace BitTrace::from_bits(const std::vector<bool>& bits) {
  BitTrace t;
  for (bool b : bits)
    t.push(b);
  return t;
}

BitTrace BitTrace::from_packed(Bytes bytes, std::size_t bits) {
  if (bytes.size() != (bits + 7) / 8)
    throw DecodeError("S_bin byte count does not match its bit length");
  if (bits % 8 && (bytes.back() >> (bits % 8)) != 0)
    throw DecodeError("S_bin padding bits are not zero");
  BitTrace t;
  t.bytes_ = std::move(bytes);
  t.bits_ = bits;
  return t;
}

// ---------------------------------------------------------------- CviState

void CviState::define(std::uint64_t var_id, std::int64_t value) { values_[var_id] = value; }

bool CviState::use(std::uint64_t var_id, std::int64_t observed, std::uint64_t current_ret) {
  const auto [it, fresh] = values_.emplace(var_id, observed);
  if (fresh || it->second == observed)
    return true;
  f_ = true;
  c_.push_back({var_id, current_ret});
  return false;
}

void CviState::register_pointer(std::uint64_t pointer_id, Range pointee) { bounds_[pointer_id] = pointee; }

void CviState::unregister_pointer(std::uint64_t pointer_id) { bounds_.erase(pointer_id); }

std::optional<Range> CviState::pointee(std::uint64_t pointer_id) const {
  const auto it = bounds_.find(pointer_id);
  if (it == bounds_.end())
    return std::nullopt;
  return it->second;
}

Range CviState::bounds_adjust(std::uint64_t pointer_id, std::uint64_t access_base, std::uint64_t access_len) const {
  const auto b = pointee(pointer_id);
  if (!b)
    throw UnregisteredPointer(fmt::format("pointer {:#x} has no registered pointee", pointer_id));
  const Range r{std::max(access_base, b->begin), std::min(access_base + access_len, b->end)};
  return r.empty() ? Range{} : r;
}

void CviState::define_via(std::uint64_t pointer_id, std::uint64_t access_base, const std::vector<std::int64_t>& values) {
  const auto r = bounds_adjust(pointer_id, access_base, values.size());
  for (auto id = r.begin; id < r.end; ++id)
    define(id, values[id - access_base]);
}

bool CviState::use_via(std::uint64_t pointer_id, std::uint64_t access_base, const std::vector<std::int64_t>& values,
                       std::uint64_t current_ret) {
  const auto r = bounds_adjust(pointer_id, access_base, values.size());
  bool ok = true;
  for (auto id = r.begin; id < r.end; ++id)
    ok &= use(id, values[id - access_base], current_ret);
  return ok;
}

std::optional<std::int64_t> CviState::value(std::uint64_t var_id) const {
  const auto it = values_.find(var_id);
  if (it == values_.end())
    return std::nullopt;
  return it->second;
}

void CviState::acknowledge() {
  f_ = false;
  c_.clear();
}

// ---------------------------------------------------------------- codec

namespace {

class Writer {
public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void raw(std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }

  void trace(const Trace& t) {
    u32(static_cast<std::uint32_t>(t.addr.size()));
    for (auto a : t.addr)
      u64(a);
    u32(static_cast<std::uint32_t>(t.bin.size()));
    raw(t.bin.bytes());
  }

  Bytes out;

private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i)
      out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }

  template <std::size_t N>
  std::array<std::uint8_t, N> fixed() {
    need(N);
    std::array<std::uint8_t, N> a{};
    std::copy_n(in_.begin() + pos_, N, a.begin());
    pos_ += N;
    return a;
  }

  Bytes bytes(std::size_t n) {
    need(n);
    Bytes b(in_.begin() + pos_, in_.begin() + pos_ + n);
    pos_ += n;
    return b;
  }

  Trace trace() {
    Trace t;
    const std::size_t n = u32();
    need(n * 8);
    t.addr.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      t.addr.push_back(u64());
    const std::size_t bits = u32();
    t.bin = BitTrace::from_packed(bytes((bits + 7) / 8), bits);
    return t;
  }

  std::size_t remaining() const { return in_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (n > remaining())
      throw DecodeError(fmt::format("truncated blob: need {} bytes at offset {}, have {}", n, pos_, remaining()));
  }

  std::uint64_t le(int n) {
    need(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

} // namespace

Bytes encode_unsigned(const Blob& b) {
  if (b.c.size() > kMaxContextRecords)
    throw std::invalid_argument("too many context records");
  if (b.interrupts.size() > 0xffff)
    throw std::invalid_argument("too many interrupt records");
  Writer w;
  w.u8(b.version);
  w.u8(static_cast<std::uint8_t>(b.kind));
  w.u32(b.op_id);
  w.u32(b.segment_index);
  w.raw(b.prev_hash);
  w.raw(b.nonce);
  w.trace(b.trace);
  w.raw(b.h);
  w.u8(b.f ? 1 : 0);
  if (b.f) {
    w.u8(static_cast<std::uint8_t>(b.c.size()));
    for (const auto& r : b.c) {
      w.u64(r.var_id);
      w.u64(r.ret_addr);
    }
  }
  w.u16(static_cast<std::uint16_t>(b.interrupts.size()));
  for (const auto& i : b.interrupts) {
    w.u32(i.irq);
    w.u64(i.handler);
    w.trace(i.trace);
    w.raw(i.h);
  }
  return std::move(w.out);
}

Bytes encode(const Blob& b) {
  auto out = encode_unsigned(b);
  out.insert(out.end(), b.signature.begin(), b.signature.end());
  return out;
}

Blob decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Blob b;
  b.version = r.u8();
  if (b.version != kBlobVersion)
    throw DecodeError(fmt::format("unsupported blob version {}", b.version));
  const auto kind = r.u8();
  if (kind > static_cast<std::uint8_t>(SegmentKind::Aborted))
    throw DecodeError(fmt::format("unknown segment kind {}", kind));
  b.kind = static_cast<SegmentKind>(kind);
  b.op_id = r.u32();
  b.segment_index = r.u32();
  b.prev_hash = r.fixed<32>();
  b.nonce = r.fixed<16>();
  b.trace = r.trace();
  b.h = r.fixed<32>();
  const auto f = r.u8();
  if (f > 1)
    throw DecodeError("F must be 0 or 1");
  b.f = f == 1;
  if (b.f) {
    const auto n = r.u8();
    for (int i = 0; i < n; ++i) {
      ContextRecord c;
      c.var_id = r.u64();
      c.ret_addr = r.u64();
      b.c.push_back(c);
    }
  }
  const auto ni = r.u16();
  for (int i = 0; i < ni; ++i) {
    InterruptEvidence e;
    e.irq = r.u32();
    e.handler = r.u64();
    e.trace = r.trace();
    e.h = r.fixed<32>();
    b.interrupts.push_back(std::move(e));
  }
  b.signature = r.fixed<64>();
  if (r.remaining())
    throw DecodeError(fmt::format("{} trailing bytes after the signature", r.remaining()));
  return b;
}

void sign_blob(Blob& blob, const SigningKey& key) { blob.signature = sign(key, encode_unsigned(blob)); }

bool check_signature(std::span<const std::uint8_t> encoded, const PublicKey& pub) {
  if (encoded.size() < 64)
    return false;
  Signature sig{};
  std::copy(encoded.end() - 64, encoded.end(), sig.begin());
  return verify_signature(pub, encoded.first(encoded.size() - 64), sig);
}

Digest segment_hash(std::span<const std::uint8_t> encoded) { return blake2s256(encoded); }

// ---------------------------------------------------------------- session

MeasurementSession::MeasurementSession(std::uint32_t op_id, Nonce nonce, const SigningKey* key, SessionConfig cfg)
    : op_id_(op_id), nonce_(nonce), key_(key), cfg_(cfg) {}

void MeasurementSession::make_room(std::size_t bytes) {
  if (trace_.byte_size() + bytes > cfg_.capacity && !trace_.empty())
    flush();
}

void MeasurementSession::record_branch(bool taken) {
  if (child_) {
    child_->trace.bin.push(taken);
    return;
  }
  make_room(trace_.bin.size() % 8 == 0 ? 1 : 0);
  trace_.bin.push(taken);
}

void MeasurementSession::record_indirect(std::uint64_t dest) {
  if (child_) {
    child_->trace.addr.push_back(dest);
    return;
  }
  make_room(8);
  trace_.addr.push_back(dest);
}

void MeasurementSession::record_return(std::uint64_t ret_addr) {
  if (!cfg_.hash_returns) {
    record_indirect(ret_addr);
    return;
  }
  auto& h = child_ ? child_->h : h_;
  h = hash_update(h, ret_addr);
}

void MeasurementSession::begin_interrupt(std::uint32_t irq, std::uint64_t handler_entry) {
  if (child_)
    throw std::logic_error("nested interrupt sub-session");
  child_ = InterruptEvidence{irq, handler_entry, {}, kZeroDigest};
}

void MeasurementSession::end_interrupt() {
  if (!child_)
    throw std::logic_error("end_interrupt without begin_interrupt");
  interrupts_.push_back(std::move(*child_));
  child_.reset();
}

Blob MeasurementSession::seal(SegmentKind kind) {
  Blob b;
  b.kind = kind;
  b.op_id = op_id_;
  b.segment_index = static_cast<std::uint32_t>(sealed_.size());
  b.prev_hash = prev_;
  b.nonce = nonce_;
  b.trace = std::move(trace_);
  b.h = h_;
  b.interrupts = std::move(interrupts_);
  trace_ = {};
  interrupts_.clear();
  return b;
}

void MeasurementSession::flush() {
  auto b = seal(SegmentKind::Intermediate);
  if (key_)
    sign_blob(b, *key_);
  auto bytes = encode(b);
  prev_ = segment_hash(bytes);
  sealed_.push_back(std::move(bytes));
}

std::vector<Bytes> MeasurementSession::finalize(const CviState& cvi, SegmentKind kind) {
  if (child_)
    end_interrupt();
  auto b = seal(kind);
  b.f = cvi.flag();
  if (b.f) {
    const auto& c = cvi.context();
    b.c.assign(c.begin(), c.begin() + std::min(c.size(), kMaxContextRecords));
  }
  if (key_)
    sign_blob(b, *key_);
  sealed_.push_back(encode(b));
  return sealed_;
}

} // namespace oei::measure
