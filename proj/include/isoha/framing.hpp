#pragma once

// Length-prefixed framing: [len: N-byte big-endian unsigned][payload].

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace isoha::framing {

enum class FramingErrorKind {
  bad_config,
  empty_payload,
  oversize_payload,
  declared_oversize,
  zero_length,
  poisoned,
};

class FramingError : public std::runtime_error {
 public:
  FramingError(FramingErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  FramingErrorKind kind() const { return kind_; }

 private:
  FramingErrorKind kind_;
};

struct FramerConfig {
  std::size_t header_bytes = 2;
  std::size_t max_frame = 4096;

  // max_frame >= 20 and representable in the header; header is 2 or 4.
  void validate() const;
};

std::string encode_frame(std::string_view payload, const FramerConfig& config = {});

// Incremental decoder for one connection. Holds at most one partial frame.
class FrameBuffer {
 public:
  explicit FrameBuffer(FramerConfig config = {});

  // Complete payloads in arrival order. A header announcing zero bytes or
  // more than max_frame throws and poisons the buffer; every later call
  // throws FramingErrorKind::poisoned.
  std::vector<std::string> push(std::string_view chunk);

  std::size_t pending_bytes() const { return pending_.size(); }
  bool poisoned() const { return poisoned_; }
  const FramerConfig& config() const { return config_; }

 private:
  FramerConfig config_;
  std::string pending_;
  std::size_t expected_ = 0;  // payload length once the header is complete
  bool poisoned_ = false;
};

}  // namespace isoha::framing
