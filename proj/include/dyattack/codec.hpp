#pragma once

// Wire format: every value is a frame, tag (1 byte) | length (4 bytes, big-endian) | payload.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dyattack {

using Bytes = std::vector<std::uint8_t>;

enum class Tag : std::uint8_t {
  Name = 0x01,
  Bytes = 0x02,
  Pair = 0x10,
  SCrypt = 0x11,
  ACrypt = 0x12,
  Hash = 0x13,
  Sig = 0x14,
  Apply = 0x15,
  Alert = 0x7F,
};

constexpr std::size_t kHeaderSize = 5;
constexpr std::size_t kMaxPayload = std::size_t{1} << 20;

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string_view tag_name(Tag t);
bool is_known_tag(std::uint8_t b);

Bytes make_frame(Tag tag, const Bytes& payload);
Bytes name_frame(std::string_view name);
Bytes alert_frame(std::uint8_t code);
Bytes concat(const Bytes& a, const Bytes& b);

/// A frame located inside a buffer.
struct FrameRef {
  Tag tag;
  std::size_t offset;  // of the header
  std::size_t length;  // of the payload
  std::size_t end() const { return offset + kHeaderSize + length; }
};

/// Reads one frame header at `offset`; throws CodecError when it does not fit.
FrameRef read_frame(const Bytes& buf, std::size_t offset = 0);
/// The buffer must hold exactly one frame.
FrameRef whole_frame(const Bytes& buf);
Bytes payload_of(const Bytes& buf);
/// Splits a payload made of back-to-back frames.
std::vector<Bytes> split_frames(const Bytes& payload);

/// NAME payload for NAME frames, otherwise `#` + hex of the whole frame.
std::string key_id(const Bytes& key_frame);
/// Inverse of key_id.
Bytes key_frame_of(std::string_view id);

std::string to_hex(const Bytes& b);
Bytes from_hex(std::string_view hex);
std::string to_string(const Bytes& b);

/// Structural view of a frame. Leaves keep their payload; containers keep children.
struct Node {
  Tag tag = Tag::Bytes;
  Bytes payload;
  std::vector<Node> kids;
};

/// Decodes a frame tree. PAIR always has two children. With `transparent`, SCRYPT/ACRYPT/SIG
/// expose [key, plaintext] (the key decoded back from its id), HASH exposes [plaintext] and
/// APPLY exposes [fn NAME, args...]; otherwise those stay opaque leaves.
Node decode(const Bytes& frame, bool transparent);
Bytes encode(const Node& n);

}  // namespace dyattack
