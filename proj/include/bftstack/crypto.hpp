#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "bftstack/bytes.hpp"
#include "bftstack/core.hpp"
#include "bftstack/rng.hpp"

namespace bftstack {

using Signature = Bytes;

struct KeyPair {
  NodeId node = 0;
  Bytes public_key;
  Bytes private_key;
};

/// SipHash-2-4 with a 128-bit key. Used as the simulation-grade authenticator.
std::uint64_t siphash24(std::span<const std::uint8_t> key16, std::span<const std::uint8_t> data);

/// Signature scheme interface. The simulator installs one per run; a real
/// asymmetric scheme can be plugged in behind the same calls.
class Signer {
 public:
  virtual ~Signer() = default;
  virtual Signature sign(const KeyPair& key, std::span<const std::uint8_t> payload) const = 0;
  virtual bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> payload,
                      std::span<const std::uint8_t> signature) const = 0;
};

/// Deterministic keyed authenticator. Signing and verification both derive
/// the MAC from the key material, which is shared between the public and
/// private halves; unforgeability holds against the simulated adversary
/// because Byzantine nodes never read other nodes' key material.
class SimAuthenticator final : public Signer {
 public:
  Signature sign(const KeyPair& key, std::span<const std::uint8_t> payload) const override;
  bool verify(std::span<const std::uint8_t> public_key, std::span<const std::uint8_t> payload,
              std::span<const std::uint8_t> signature) const override;
};

/// Global directory of every node's keys, standing in for the certificate
/// infrastructure the protocols assume. Key generation is seeded so that a
/// run is reproducible end to end.
class KeyDirectory {
 public:
  KeyDirectory(std::uint64_t seed, int node_count, std::shared_ptr<Signer> signer);

  const KeyPair& key_of(NodeId id) const { return keys_.at(id); }
  std::span<const std::uint8_t> public_key(NodeId id) const { return keys_.at(id).public_key; }
  bool knows(NodeId id) const { return id < keys_.size(); }
  int size() const { return static_cast<int>(keys_.size()); }

  Signature sign(NodeId node, std::span<const std::uint8_t> payload) const {
    return signer_->sign(keys_.at(node), payload);
  }

  /// Verifies `signature` as `claimed_sender`'s signature over `payload`.
  /// Results are memoised per (sender, payload, signature); validity of a
  /// fixed triple never changes, so the cache is sound and it removes the
  /// cost of re-checking justification sets embedded in many messages.
  bool verify(NodeId claimed_sender, std::span<const std::uint8_t> payload,
              std::span<const std::uint8_t> signature) const;

 private:
  std::shared_ptr<Signer> signer_;
  std::vector<KeyPair> keys_;
  mutable std::unordered_map<std::uint64_t, bool> verify_cache_;
};

}  // namespace bftstack
