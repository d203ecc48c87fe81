#include "dyattack/codec.hpp"

namespace dyattack {

std::string_view tag_name(Tag t) {
  switch (t) {
    case Tag::Name: return "NAME";
    case Tag::Bytes: return "BYTES";
    case Tag::Pair: return "PAIR";
    case Tag::SCrypt: return "SCRYPT";
    case Tag::ACrypt: return "ACRYPT";
    case Tag::Hash: return "HASH";
    case Tag::Sig: return "SIG";
    case Tag::Apply: return "APPLY";
    case Tag::Alert: return "ALERT";
  }
  return "?";
}

bool is_known_tag(std::uint8_t b) {
  switch (b) {
    case 0x01: case 0x02: case 0x10: case 0x11: case 0x12: case 0x13: case 0x14: case 0x15: case 0x7F:
      return true;
    default: return false;
  }
}

Bytes make_frame(Tag tag, const Bytes& payload) {
  if (payload.size() > kMaxPayload) throw CodecError("frame too large: " + std::to_string(payload.size()) + " bytes");
  Bytes out;
  out.reserve(kHeaderSize + payload.size());
  out.push_back(static_cast<std::uint8_t>(tag));
  auto n = static_cast<std::uint32_t>(payload.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(n >> shift));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Bytes name_frame(std::string_view name) { return make_frame(Tag::Name, Bytes(name.begin(), name.end())); }

Bytes alert_frame(std::uint8_t code) { return make_frame(Tag::Alert, Bytes{code}); }

Bytes concat(const Bytes& a, const Bytes& b) {
  Bytes out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

FrameRef read_frame(const Bytes& buf, std::size_t offset) {
  if (offset + kHeaderSize > buf.size()) throw CodecError("truncated frame header");
  std::uint8_t t = buf[offset];
  if (!is_known_tag(t)) throw CodecError("unknown tag 0x" + to_hex(Bytes{t}));
  std::size_t len = 0;
  for (int i = 1; i <= 4; ++i) len = (len << 8) | buf[offset + i];
  if (len > kMaxPayload) throw CodecError("frame too large: " + std::to_string(len) + " bytes");
  if (offset + kHeaderSize + len > buf.size()) throw CodecError("truncated frame payload");
  return FrameRef{static_cast<Tag>(t), offset, len};
}

FrameRef whole_frame(const Bytes& buf) {
  auto f = read_frame(buf, 0);
  if (f.end() != buf.size()) throw CodecError("trailing bytes after frame");
  return f;
}

Bytes payload_of(const Bytes& buf) {
  auto f = whole_frame(buf);
  return Bytes(buf.begin() + static_cast<long>(f.offset + kHeaderSize), buf.begin() + static_cast<long>(f.end()));
}

std::vector<Bytes> split_frames(const Bytes& payload) {
  std::vector<Bytes> out;
  std::size_t at = 0;
  while (at < payload.size()) {
    auto f = read_frame(payload, at);
    out.emplace_back(payload.begin() + static_cast<long>(at), payload.begin() + static_cast<long>(f.end()));
    at = f.end();
  }
  return out;
}

std::string key_id(const Bytes& key_frame) {
  auto f = whole_frame(key_frame);
  if (f.tag == Tag::Name) return to_string(payload_of(key_frame));
  return "#" + to_hex(key_frame);
}

Bytes key_frame_of(std::string_view id) {
  if (!id.empty() && id[0] == '#') return from_hex(id.substr(1));
  return name_frame(id);
}

std::string to_hex(const Bytes& b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto c : b) {
    s += digits[c >> 4];
    s += digits[c & 15];
  }
  return s;
}

Bytes from_hex(std::string_view hex) {
  auto val = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2) throw CodecError("odd-length hex string");
  Bytes out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = val(hex[i]), lo = val(hex[i + 1]);
    if (hi < 0 || lo < 0) throw CodecError("bad hex digit");
    out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
  }
  return out;
}

std::string to_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

Node decode(const Bytes& frame, bool transparent) {
  auto f = whole_frame(frame);
  Node n;
  n.tag = f.tag;
  Bytes payload = payload_of(frame);
  auto parts = [&]() {
    auto ps = split_frames(payload);
    for (const auto& p : ps) n.kids.push_back(decode(p, transparent));
  };
  switch (f.tag) {
    case Tag::Pair:
      parts();
      if (n.kids.size() != 2) throw CodecError("PAIR must hold two frames");
      break;
    case Tag::SCrypt:
    case Tag::ACrypt:
    case Tag::Sig:
      if (!transparent) {
        n.payload = std::move(payload);
        break;
      }
      parts();
      if (n.kids.size() != 2 || n.kids[0].tag != Tag::Name)
        throw CodecError(std::string(tag_name(f.tag)) + " must hold a key id and a plaintext frame");
      n.kids[0] = decode(key_frame_of(to_string(n.kids[0].payload)), transparent);
      break;
    case Tag::Hash:
      if (!transparent) {
        n.payload = std::move(payload);
        break;
      }
      parts();
      if (n.kids.size() != 1) throw CodecError("HASH must hold one frame");
      break;
    case Tag::Apply:
      if (!transparent) {
        n.payload = std::move(payload);
        break;
      }
      parts();
      if (n.kids.empty() || n.kids[0].tag != Tag::Name) throw CodecError("APPLY must start with a NAME frame");
      break;
    case Tag::Alert:
      if (payload.size() != 1) throw CodecError("ALERT carries exactly one byte");
      n.payload = std::move(payload);
      break;
    default: n.payload = std::move(payload); break;
  }
  return n;
}

Bytes encode(const Node& n) {
  if (n.kids.empty()) return make_frame(n.tag, n.payload);
  Bytes payload;
  for (std::size_t i = 0; i < n.kids.size(); ++i) {
    Bytes k = encode(n.kids[i]);
    bool keyed = i == 0 && (n.tag == Tag::SCrypt || n.tag == Tag::ACrypt || n.tag == Tag::Sig);
    if (keyed) k = name_frame(key_id(k));
    payload.insert(payload.end(), k.begin(), k.end());
  }
  return make_frame(n.tag, payload);
}

}  // namespace dyattack
