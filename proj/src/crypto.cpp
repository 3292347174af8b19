#include "bftstack/crypto.hpp"

#include <cstring>

namespace bftstack {

namespace {

inline std::uint64_t rotl64(std::uint64_t x, int b) { return (x << b) | (x >> (64 - b)); }

inline std::uint64_t read_le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

#define SIPROUND         \
  do {                   \
    v0 += v1;            \
    v1 = rotl64(v1, 13); \
    v1 ^= v0;            \
    v0 = rotl64(v0, 32); \
    v2 += v3;            \
    v3 = rotl64(v3, 16); \
    v3 ^= v2;            \
    v0 += v3;            \
    v3 = rotl64(v3, 21); \
    v3 ^= v0;            \
    v2 += v1;            \
    v1 = rotl64(v1, 17); \
    v1 ^= v2;            \
    v2 = rotl64(v2, 32); \
  } while (0)

}  // namespace

std::uint64_t siphash24(std::span<const std::uint8_t> key16, std::span<const std::uint8_t> data) {
  std::uint64_t k0 = key16.size() >= 8 ? read_le64(key16.data()) : 0;
  std::uint64_t k1 = key16.size() >= 16 ? read_le64(key16.data() + 8) : 0;

  std::uint64_t v0 = 0x736f6d6570736575ull ^ k0;
  std::uint64_t v1 = 0x646f72616e646f6dull ^ k1;
  std::uint64_t v2 = 0x6c7967656e657261ull ^ k0;
  std::uint64_t v3 = 0x7465646279746573ull ^ k1;

  const std::size_t len = data.size();
  const std::uint8_t* in = data.data();
  const std::size_t end = len - (len % 8);

  for (std::size_t i = 0; i < end; i += 8) {
    std::uint64_t m = read_le64(in + i);
    v3 ^= m;
    SIPROUND;
    SIPROUND;
    v0 ^= m;
  }

  std::uint64_t b = static_cast<std::uint64_t>(len) << 56;
  for (std::size_t i = end; i < len; ++i) b |= static_cast<std::uint64_t>(in[i]) << (8 * (i - end));
  v3 ^= b;
  SIPROUND;
  SIPROUND;
  v0 ^= b;
  v2 ^= 0xff;
  SIPROUND;
  SIPROUND;
  SIPROUND;
  SIPROUND;
  return v0 ^ v1 ^ v2 ^ v3;
}

Signature SimAuthenticator::sign(const KeyPair& key, std::span<const std::uint8_t> payload) const {
  std::uint64_t mac = siphash24(key.private_key, payload);
  Signature sig(8);
  for (int i = 0; i < 8; ++i) sig[i] = static_cast<std::uint8_t>(mac >> (8 * i));
  return sig;
}

bool SimAuthenticator::verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> payload,
                              std::span<const std::uint8_t> signature) const {
  if (signature.size() != 8) return false;
  std::uint64_t mac = siphash24(public_key, payload);
  std::uint64_t got = 0;
  for (int i = 7; i >= 0; --i) got = (got << 8) | signature[i];
  return mac == got;
}

KeyDirectory::KeyDirectory(std::uint64_t seed, int node_count, std::shared_ptr<Signer> signer)
    : signer_(std::move(signer)) {
  keys_.reserve(node_count);
  for (int i = 0; i < node_count; ++i) {
    Rng rng(derive_seed(seed, "keygen", i));
    Bytes secret(16);
    for (int w = 0; w < 2; ++w) {
      std::uint64_t word = rng.next();
      for (int b = 0; b < 8; ++b) secret[w * 8 + b] = static_cast<std::uint8_t>(word >> (8 * b));
    }
    // The sim authenticator is symmetric: the "public" key doubles as the
    // verification key. A real scheme would publish a distinct half.
    keys_.push_back(KeyPair{static_cast<NodeId>(i), secret, secret});
  }
}

bool KeyDirectory::verify(NodeId claimed_sender, std::span<const std::uint8_t> payload,
                          std::span<const std::uint8_t> signature) const {
  if (claimed_sender >= keys_.size()) return false;
  std::uint64_t h = fnv1a(payload, 0x9ddfea08eb382d69ull ^ claimed_sender);
  h = fnv1a(signature, h);
  auto it = verify_cache_.find(h);
  if (it != verify_cache_.end()) return it->second;
  bool ok = signer_->verify(keys_[claimed_sender].public_key, payload, signature);
  verify_cache_.emplace(h, ok);
  return ok;
}

}  // namespace bftstack
