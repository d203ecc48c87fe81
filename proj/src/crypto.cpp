#include "dyattack/crypto.hpp"

#include <sodium.h>

#include <array>

namespace dyattack {

bool is_private_key(const Bytes& key, std::string* pub) {
  auto f = whole_frame(key);
  if (f.tag != Tag::Name) return false;
  std::string n = to_string(payload_of(key));
  if (n.size() < 6 || n.compare(0, 4, "inv(") != 0 || n.back() != ')') return false;
  if (pub) *pub = n.substr(4, n.size() - 5);
  return true;
}

namespace {

std::string name_of(const Bytes& key, const char* what) {
  auto f = whole_frame(key);
  if (f.tag != Tag::Name) throw CryptoError(std::string(what) + " key must be a NAME frame");
  return to_string(payload_of(key));
}

// Splits a transparent container payload into key id and body frame.
std::pair<std::string, Bytes> open_transparent(const Bytes& cipher) {
  auto parts = split_frames(payload_of(cipher));
  if (parts.size() != 2 || whole_frame(parts[0]).tag != Tag::Name) throw CryptoError("malformed ciphertext");
  return {to_string(payload_of(parts[0])), parts[1]};
}

}  // namespace

// ---------------------------------------------------------------------------

TransparentSuite::TransparentSuite(std::uint64_t seed, std::string_view stream) {
  if (stream.empty()) {
    rng_.seed(seed);
  } else {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(std::hash<std::string_view>{}(stream))};
    rng_.seed(seq);
  }
}

Bytes TransparentSuite::crypt(const Bytes& key, const Bytes& msg) {
  std::string id = name_of(key, "asymmetric");
  return make_frame(is_private_key(key) ? Tag::Sig : Tag::ACrypt, concat(name_frame(id), msg));
}

Bytes TransparentSuite::scrypt(const Bytes& key, const Bytes& msg) {
  return make_frame(Tag::SCrypt, concat(name_frame(key_id(key)), msg));
}

Bytes TransparentSuite::decrypt(const Bytes& key, const Bytes& cipher) {
  auto tag = whole_frame(cipher).tag;
  auto [id, body] = open_transparent(cipher);
  switch (tag) {
    case Tag::ACrypt:
      if (key_id(key) != "inv(" + id + ")") throw CryptoError("wrong private key for " + id);
      return body;
    case Tag::Sig: {
      std::string pub;
      if (!is_private_key(name_frame(id), &pub) || key_id(key) != pub) throw CryptoError("signature does not verify");
      return body;
    }
    case Tag::SCrypt:
      if (key_id(key) != id) throw CryptoError("wrong symmetric key");
      return body;
    default: throw CryptoError(std::string("cannot decrypt a ") + std::string(tag_name(tag)) + " frame");
  }
}

Bytes TransparentSuite::hash(const Bytes& msg) { return make_frame(Tag::Hash, msg); }

Bytes TransparentSuite::apply(std::string_view fn, const std::vector<Bytes>& args) {
  Bytes payload = name_frame(fn);
  for (const auto& a : args) payload.insert(payload.end(), a.begin(), a.end());
  return make_frame(Tag::Apply, payload);
}

Bytes TransparentSuite::nonce() {
  Bytes b;
  for (int draw = 0; draw < 2; ++draw) {
    std::uint64_t v = rng_();
    for (int shift = 56; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  return make_frame(Tag::Bytes, b);
}

// ---------------------------------------------------------------------------

namespace {

Bytes blake(const Bytes& in, std::size_t outlen) {
  Bytes out(outlen);
  crypto_generichash(out.data(), outlen, in.data(), in.size(), nullptr, 0);
  return out;
}

struct BoxKeys {
  std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> pk;
  std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> sk;
};

struct SignKeys {
  std::array<std::uint8_t, crypto_sign_PUBLICKEYBYTES> pk;
  std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk;
};

BoxKeys box_keys(const Bytes& seed) {
  BoxKeys k;
  crypto_box_seed_keypair(k.pk.data(), k.sk.data(), seed.data());
  return k;
}

SignKeys sign_keys(const Bytes& seed) {
  SignKeys k;
  crypto_sign_seed_keypair(k.pk.data(), k.sk.data(), seed.data());
  return k;
}

}  // namespace

RealSuite::RealSuite(std::uint64_t seed) : seed_(seed) {
  if (sodium_init() < 0) throw CryptoError("libsodium initialisation failed");
}

Bytes RealSuite::seed_for(std::string_view purpose, std::string_view key) const {
  Bytes in;
  for (int shift = 56; shift >= 0; shift -= 8) in.push_back(static_cast<std::uint8_t>(seed_ >> shift));
  in.insert(in.end(), purpose.begin(), purpose.end());
  in.insert(in.end(), key.begin(), key.end());
  return blake(in, 32);
}

Bytes RealSuite::crypt(const Bytes& key, const Bytes& msg) {
  std::string pub;
  if (is_private_key(key, &pub)) {
    auto k = sign_keys(seed_for("sign:", pub));
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, msg.data(), msg.size(), k.sk.data());
    return make_frame(Tag::Sig, concat(sig, msg));
  }
  auto k = box_keys(seed_for("box:", name_of(key, "asymmetric")));
  Bytes pk(k.pk.begin(), k.pk.end());
  auto eph = box_keys(blake(concat(pk, msg), 32));
  Bytes epk(eph.pk.begin(), eph.pk.end());
  Bytes nonce = blake(concat(epk, pk), crypto_box_NONCEBYTES);
  Bytes c(msg.size() + crypto_box_MACBYTES);
  if (crypto_box_easy(c.data(), msg.data(), msg.size(), nonce.data(), k.pk.data(), eph.sk.data()) != 0)
    throw CryptoError("box failed");
  return make_frame(Tag::ACrypt, concat(epk, c));
}

Bytes RealSuite::scrypt(const Bytes& key, const Bytes& msg) {
  Bytes k = blake(key, crypto_secretbox_KEYBYTES);
  Bytes nonce = blake(concat(k, msg), crypto_secretbox_NONCEBYTES);
  Bytes c(msg.size() + crypto_secretbox_MACBYTES);
  crypto_secretbox_easy(c.data(), msg.data(), msg.size(), nonce.data(), k.data());
  return make_frame(Tag::SCrypt, concat(nonce, c));
}

Bytes RealSuite::decrypt(const Bytes& key, const Bytes& cipher) {
  auto tag = whole_frame(cipher).tag;
  Bytes p = payload_of(cipher);
  Bytes out;
  switch (tag) {
    case Tag::ACrypt: {
      std::string pub;
      if (!is_private_key(key, &pub)) throw CryptoError("ACRYPT needs a private key");
      if (p.size() < crypto_box_PUBLICKEYBYTES + crypto_box_MACBYTES) throw CryptoError("short ciphertext");
      auto k = box_keys(seed_for("box:", pub));
      Bytes epk(p.begin(), p.begin() + crypto_box_PUBLICKEYBYTES);
      Bytes pk(k.pk.begin(), k.pk.end());
      Bytes nonce = blake(concat(epk, pk), crypto_box_NONCEBYTES);
      std::size_t clen = p.size() - crypto_box_PUBLICKEYBYTES;
      out.resize(clen - crypto_box_MACBYTES);
      if (crypto_box_open_easy(out.data(), p.data() + crypto_box_PUBLICKEYBYTES, clen, nonce.data(), epk.data(),
                               k.sk.data()) != 0)
        throw CryptoError("wrong private key");
      break;
    }
    case Tag::Sig: {
      if (p.size() < crypto_sign_BYTES) throw CryptoError("short signature");
      auto k = sign_keys(seed_for("sign:", name_of(key, "verification")));
      out.assign(p.begin() + crypto_sign_BYTES, p.end());
      if (crypto_sign_verify_detached(p.data(), out.data(), out.size(), k.pk.data()) != 0)
        throw CryptoError("signature does not verify");
      break;
    }
    case Tag::SCrypt: {
      if (p.size() < crypto_secretbox_NONCEBYTES + crypto_secretbox_MACBYTES) throw CryptoError("short ciphertext");
      Bytes k = blake(key, crypto_secretbox_KEYBYTES);
      std::size_t clen = p.size() - crypto_secretbox_NONCEBYTES;
      out.resize(clen - crypto_secretbox_MACBYTES);
      if (crypto_secretbox_open_easy(out.data(), p.data() + crypto_secretbox_NONCEBYTES, clen, p.data(), k.data()) != 0)
        throw CryptoError("wrong symmetric key");
      break;
    }
    default: throw CryptoError(std::string("cannot decrypt a ") + std::string(tag_name(tag)) + " frame");
  }
  try {
    whole_frame(out);
  } catch (const CodecError&) {
    throw CryptoError("plaintext is not a frame");
  }
  return out;
}

Bytes RealSuite::hash(const Bytes& msg) { return make_frame(Tag::Hash, blake(msg, 32)); }

Bytes RealSuite::apply(std::string_view fn, const std::vector<Bytes>& args) {
  Bytes in = name_frame(fn);
  for (const auto& a : args) in.insert(in.end(), a.begin(), a.end());
  return make_frame(Tag::Apply, blake(in, 32));
}

Bytes RealSuite::nonce() {
  Bytes b(16);
  randombytes_buf(b.data(), b.size());
  return make_frame(Tag::Bytes, b);
}

std::unique_ptr<CryptoSuite> make_suite(std::string_view name, std::uint64_t seed, std::string_view stream) {
  if (name == "transparent") return std::make_unique<TransparentSuite>(seed, stream);
  if (name == "real") return std::make_unique<RealSuite>(seed);
  throw std::invalid_argument("unknown crypto suite '" + std::string(name) + "'");
}

}  // namespace dyattack
