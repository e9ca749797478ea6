#include "oei/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <fstream>
#include <memory>
#include <stdexcept>

namespace oei {
namespace {

struct MdCtxFree {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
struct PkeyFree {
  void operator()(EVP_PKEY* k) const { EVP_PKEY_free(k); }
};
using MdCtx = std::unique_ptr<EVP_MD_CTX, MdCtxFree>;
using Pkey = std::unique_ptr<EVP_PKEY, PkeyFree>;

[[noreturn]] void fail(const char* what) { throw std::runtime_error(std::string("crypto: ") + what); }

void put_le64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

} // namespace

Digest blake2s256(std::span<const std::uint8_t> data) {
  MdCtx ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_blake2s256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1)
    fail("blake2s init/update");
  Digest out{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size())
    fail("blake2s final");
  return out;
}

Digest hash_update(const Digest& h, std::uint64_t ret_addr) {
  std::array<std::uint8_t, 40> msg{};
  std::copy(h.begin(), h.end(), msg.begin());
  put_le64(msg.data() + 32, ret_addr);
  return blake2s256(msg);
}

Digest hash_returns(std::span<const std::uint64_t> rets) {
  Digest h = kZeroDigest;
  for (auto r : rets)
    h = hash_update(h, r);
  return h;
}

SigningKey key_from_seed(std::span<const std::uint8_t> seed) {
  if (seed.size() != 32)
    throw std::invalid_argument("Ed25519 seed must be 32 bytes");
  Pkey k(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
  if (!k)
    fail("load private key");
  SigningKey out;
  std::copy(seed.begin(), seed.end(), out.seed.begin());
  std::size_t len = out.pub.bytes.size();
  if (EVP_PKEY_get_raw_public_key(k.get(), out.pub.bytes.data(), &len) != 1 || len != 32)
    fail("derive public key");
  return out;
}

SigningKey generate_key() {
  std::array<std::uint8_t, 32> seed{};
  random_bytes(seed);
  return key_from_seed(seed);
}

Signature sign(const SigningKey& key, std::span<const std::uint8_t> msg) {
  Pkey k(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, key.seed.data(), key.seed.size()));
  MdCtx ctx(EVP_MD_CTX_new());
  if (!k || !ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, k.get()) != 1)
    fail("sign init");
  Signature sig{};
  std::size_t len = sig.size();
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, msg.data(), msg.size()) != 1 || len != sig.size())
    fail("sign");
  return sig;
}

bool verify_signature(const PublicKey& pub, std::span<const std::uint8_t> msg, const Signature& sig) {
  Pkey k(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, pub.bytes.data(), pub.bytes.size()));
  MdCtx ctx(EVP_MD_CTX_new());
  if (!k || !ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, k.get()) != 1)
    return false;
  return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), msg.data(), msg.size()) == 1;
}

void random_bytes(std::span<std::uint8_t> out) {
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1)
    fail("RAND_bytes");
}

Nonce random_nonce() {
  Nonce n{};
  random_bytes(n);
  return n;
}

std::string to_hex(std::span<const std::uint8_t> data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(data.size() * 2);
  for (auto b : data) {
    s += kDigits[b >> 4];
    s += kDigits[b & 15];
  }
  return s;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9')
      return c - '0';
    if (c >= 'a' && c <= 'f')
      return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
      return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2)
    throw std::invalid_argument("hex string has odd length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0)
      throw std::invalid_argument("invalid hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

namespace {

std::string read_hex_line(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open key file " + path);
  std::string line;
  std::getline(in, line);
  while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
    line.pop_back();
  return line;
}

void write_line(const std::string& path, const std::string& line) {
  std::ofstream out(path, std::ios::trunc);
  if (!out || !(out << line << '\n'))
    throw std::runtime_error("cannot write key file " + path);
}

} // namespace

void save_signing_key(const std::string& path, const SigningKey& key) { write_line(path, to_hex(key.seed)); }

SigningKey load_signing_key(const std::string& path) { return key_from_seed(from_hex(read_hex_line(path))); }

void save_public_key(const std::string& path, const PublicKey& key) { write_line(path, to_hex(key.bytes)); }

PublicKey load_public_key(const std::string& path) {
  const auto b = from_hex(read_hex_line(path));
  if (b.size() != 32)
    throw std::runtime_error("public key file " + path + " must hold 32 bytes");
  PublicKey k;
  std::copy(b.begin(), b.end(), k.bytes.begin());
  return k;
}

} // namespace oei
