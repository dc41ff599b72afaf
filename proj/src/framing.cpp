#include "isoha/framing.hpp"

#include <algorithm>
#include <cstdint>

namespace isoha::framing {

void FramerConfig::validate() const {
  if (header_bytes != 2 && header_bytes != 4) {
    throw FramingError(FramingErrorKind::bad_config, "header_bytes must be 2 or 4");
  }
  if (max_frame < 20) {
    throw FramingError(FramingErrorKind::bad_config, "max_frame must be at least 20");
  }
  if (header_bytes == 2 && max_frame > 0xFFFF) {
    throw FramingError(FramingErrorKind::bad_config, "max_frame does not fit a 2-byte header");
  }
  if (max_frame > 0xFFFFFFFFull) {
    throw FramingError(FramingErrorKind::bad_config, "max_frame does not fit a 4-byte header");
  }
}

std::string encode_frame(std::string_view payload, const FramerConfig& config) {
  config.validate();
  if (payload.empty()) throw FramingError(FramingErrorKind::empty_payload, "empty payload");
  if (payload.size() > config.max_frame) {
    throw FramingError(FramingErrorKind::oversize_payload,
                       "payload of " + std::to_string(payload.size()) + " bytes exceeds max_frame");
  }
  std::string out;
  out.reserve(config.header_bytes + payload.size());
  const auto len = static_cast<std::uint64_t>(payload.size());
  for (std::size_t i = config.header_bytes; i-- > 0;) {
    out.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
  }
  out.append(payload);
  return out;
}

FrameBuffer::FrameBuffer(FramerConfig config) : config_(config) { config_.validate(); }

std::vector<std::string> FrameBuffer::push(std::string_view chunk) {
  if (poisoned_) throw FramingError(FramingErrorKind::poisoned, "frame buffer is poisoned");

  std::vector<std::string> out;
  const std::size_t header = config_.header_bytes;
  while (!chunk.empty()) {
    if (pending_.size() < header) {
      const std::size_t need = std::min(header - pending_.size(), chunk.size());
      pending_.append(chunk.substr(0, need));
      chunk.remove_prefix(need);
      if (pending_.size() < header) break;

      std::uint64_t len = 0;
      for (std::size_t i = 0; i < header; ++i) {
        len = (len << 8) | static_cast<unsigned char>(pending_[i]);
      }
      if (len == 0) {
        poisoned_ = true;
        throw FramingError(FramingErrorKind::zero_length, "zero-length frame announced");
      }
      if (len > config_.max_frame) {
        poisoned_ = true;
        throw FramingError(FramingErrorKind::declared_oversize,
                           "frame of " + std::to_string(len) + " bytes exceeds max_frame");
      }
      expected_ = static_cast<std::size_t>(len);
    }

    const std::size_t have = pending_.size() - header;
    const std::size_t need = std::min(expected_ - have, chunk.size());
    pending_.append(chunk.substr(0, need));
    chunk.remove_prefix(need);
    if (pending_.size() - header == expected_) {
      out.emplace_back(pending_.substr(header));
      pending_.clear();
      expected_ = 0;
    }
  }
  return out;
}

}  // namespace isoha::framing
