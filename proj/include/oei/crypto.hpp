#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace oei {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;
using Nonce = std::array<std::uint8_t, 16>;
using Signature = std::array<std::uint8_t, 64>;

inline constexpr Digest kZeroDigest{};

/// Unkeyed BLAKE2s with a 32-byte digest.
Digest blake2s256(std::span<const std::uint8_t> data);

/// H' = BLAKE2s-256(H || LE64(ret_addr)).
Digest hash_update(const Digest& h, std::uint64_t ret_addr);

/// Folds a whole return sequence starting from the zero seed.
Digest hash_returns(std::span<const std::uint64_t> rets);

struct PublicKey {
  std::array<std::uint8_t, 32> bytes{};
  bool operator==(const PublicKey&) const = default;
};

struct SigningKey {
  std::array<std::uint8_t, 32> seed{};
  PublicKey pub;
};

/// Ed25519 keys.
SigningKey generate_key();
SigningKey key_from_seed(std::span<const std::uint8_t> seed);
Signature sign(const SigningKey& key, std::span<const std::uint8_t> msg);
bool verify_signature(const PublicKey& pub, std::span<const std::uint8_t> msg, const Signature& sig);

void random_bytes(std::span<std::uint8_t> out);
Nonce random_nonce();

std::string to_hex(std::span<const std::uint8_t> data);
/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

/// Key files hold one lowercase hex line: the 32-byte seed (private) or public key.
void save_signing_key(const std::string& path, const SigningKey& key);
SigningKey load_signing_key(const std::string& path);
void save_public_key(const std::string& path, const PublicKey& key);
PublicKey load_public_key(const std::string& path);

} // namespace oei
