#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dyattack/codec.hpp"

namespace dyattack {

class CryptoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Concrete primitives over frames. Keys are frames too: a public key `kb` is NAME "kb",
/// its inverse NAME "inv(kb)"; symmetric keys may be any frame.
class CryptoSuite {
 public:
  virtual ~CryptoSuite() = default;
  virtual std::string name() const = 0;
  /// Public-key encryption, or a signature when the key is a private key `inv(x)`.
  virtual Bytes crypt(const Bytes& key, const Bytes& msg) = 0;
  virtual Bytes scrypt(const Bytes& key, const Bytes& msg) = 0;
  /// Opens ACRYPT with inv(k), SIG with k, SCRYPT with its key. Throws CryptoError.
  virtual Bytes decrypt(const Bytes& key, const Bytes& cipher) = 0;
  virtual Bytes hash(const Bytes& msg) = 0;
  virtual Bytes apply(std::string_view fn, const std::vector<Bytes>& args) = 0;
  /// A fresh BYTES frame of 16 bytes.
  virtual Bytes nonce() = 0;
  /// Whether frames built by this suite can be decoded structurally.
  virtual bool transparent() const = 0;
};

/// Structural suite for tests: ciphertexts carry the key id and the plaintext in the
/// clear, so every value decodes back to its term shape. Nonces come from a
/// std::mt19937_64 seeded with `seed` (and `stream`, when given, so that parties sharing
/// a seed still draw different nonces).
class TransparentSuite : public CryptoSuite {
 public:
  explicit TransparentSuite(std::uint64_t seed, std::string_view stream = {});
  std::string name() const override { return "transparent"; }
  Bytes crypt(const Bytes& key, const Bytes& msg) override;
  Bytes scrypt(const Bytes& key, const Bytes& msg) override;
  Bytes decrypt(const Bytes& key, const Bytes& cipher) override;
  Bytes hash(const Bytes& msg) override;
  Bytes apply(std::string_view fn, const std::vector<Bytes>& args) override;
  Bytes nonce() override;
  bool transparent() const override { return true; }

 private:
  std::mt19937_64 rng_;
};

/// libsodium: X25519 box, Ed25519, XSalsa20-Poly1305 secretbox, BLAKE2b. Key pairs are
/// derived from `seed` and the key name so separate parties agree on them. Encryption is
/// deterministic (ephemeral keys and nonces derived from key and plaintext) so equal
/// terms give equal bytes; nonces come from the system RNG.
class RealSuite : public CryptoSuite {
 public:
  explicit RealSuite(std::uint64_t seed);
  std::string name() const override { return "real"; }
  Bytes crypt(const Bytes& key, const Bytes& msg) override;
  Bytes scrypt(const Bytes& key, const Bytes& msg) override;
  Bytes decrypt(const Bytes& key, const Bytes& cipher) override;
  Bytes hash(const Bytes& msg) override;
  Bytes apply(std::string_view fn, const std::vector<Bytes>& args) override;
  Bytes nonce() override;
  bool transparent() const override { return false; }

 private:
  Bytes seed_for(std::string_view purpose, std::string_view key) const;
  std::uint64_t seed_;
};

std::unique_ptr<CryptoSuite> make_suite(std::string_view name, std::uint64_t seed, std::string_view stream = {});

/// Whether `key` names a private key (NAME frame "inv(...)"); sets `pub` to the public name.
bool is_private_key(const Bytes& key, std::string* pub = nullptr);

}  // namespace dyattack
