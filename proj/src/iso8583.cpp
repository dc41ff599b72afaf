#include "isoha/iso8583.hpp"

#include <algorithm>

namespace isoha::iso8583 {

namespace {

constexpr char kHexDigits[] = "0123456789ABCDEF";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

bool is_upper_hex(char c) {
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'F');
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

bool is_digits(std::string_view s) {
  return std::all_of(s.begin(), s.end(), is_digit);
}

// ---------------------------------------------------------------------------
// Mti

std::optional<Mti> Mti::parse(std::string_view digits) {
  if (digits.size() != 4 || !is_digits(digits)) return std::nullopt;
  Mti m;
  std::copy(digits.begin(), digits.end(), m.digits_.begin());
  return m;
}

Mti::Mti(std::string_view digits) {
  auto parsed = parse(digits);
  if (!parsed) throw CodecError("MTI must be 4 decimal digits: '" + std::string(digits) + "'");
  digits_ = parsed->digits_;
}

Mti response_mti(const Mti& request) {
  int function = request.digit(2);
  if (function % 2 != 0) {
    throw CodecError("MTI " + std::string(request.str()) + " is already a response");
  }
  std::string s(request.str());
  s[2] = static_cast<char>('0' + function + 1);
  return Mti(s);
}

// ---------------------------------------------------------------------------
// Bitmap

Bitmap Bitmap::from_fields(const FieldSet& fields) {
  Bitmap b;
  for (int f : fields) {
    if (f < kMinField || f > kMaxField) {
      throw CodecError("field number out of range: " + std::to_string(f));
    }
    b.set(f);
  }
  if (b.any_secondary_field()) b.set(1);
  return b;
}

bool Bitmap::contains(int field) const {
  if (field < 1 || field > kMaxField) return false;
  return bits_.test(static_cast<std::size_t>(field - 1));
}

bool Bitmap::any_secondary_field() const {
  for (int f = 65; f <= kMaxField; ++f) {
    if (contains(f)) return true;
  }
  return false;
}

void Bitmap::set(int field) {
  if (field < 1 || field > kMaxField) {
    throw CodecError("field number out of range: " + std::to_string(field));
  }
  bits_.set(static_cast<std::size_t>(field - 1));
}

std::vector<int> Bitmap::fields() const {
  std::vector<int> out;
  for (int f = 1; f <= kMaxField; ++f) {
    if (contains(f)) out.push_back(f);
  }
  return out;
}

std::vector<int> Bitmap::data_fields() const {
  std::vector<int> out;
  for (int f = kMinField; f <= kMaxField; ++f) {
    if (contains(f)) out.push_back(f);
  }
  return out;
}

Bitmap decode_bitmap(std::string_view hex) {
  if (hex.size() != 16 && hex.size() != 32) {
    throw BitmapError(BitmapErrorKind::bad_length,
                      "bitmap must be 16 or 32 hex chars, got " + std::to_string(hex.size()));
  }
  Bitmap b;
  for (std::size_t i = 0; i < hex.size(); ++i) {
    int v = hex_value(hex[i]);
    if (v < 0) throw BitmapError(BitmapErrorKind::non_hex, "non-hex bitmap character");
    for (int bit = 0; bit < 4; ++bit) {
      if (v & (0x8 >> bit)) b.set(static_cast<int>(i) * 4 + bit + 1);
    }
  }
  if (hex.size() == 32 && !b.has_secondary()) {
    throw BitmapError(BitmapErrorKind::secondary_unflagged,
                      "32-char bitmap without the secondary indicator bit");
  }
  return b;
}

std::string encode_bitmap(const Bitmap& bitmap) {
  const int nibbles = bitmap.has_secondary() ? 32 : 16;
  std::string out(static_cast<std::size_t>(nibbles), '0');
  for (int n = 0; n < nibbles; ++n) {
    int v = 0;
    for (int bit = 0; bit < 4; ++bit) {
      if (bitmap.contains(n * 4 + bit + 1)) v |= 0x8 >> bit;
    }
    out[static_cast<std::size_t>(n)] = kHexDigits[v];
  }
  return out;
}

std::string encode_bitmap(const FieldSet& fields) {
  return encode_bitmap(Bitmap::from_fields(fields));
}

// ---------------------------------------------------------------------------
// Messages

const std::string* IsoMessage::field(int n) const {
  auto it = fields.find(n);
  return it == fields.end() ? nullptr : &it->second;
}

FieldSet IsoMessage::field_set() const {
  FieldSet s;
  for (const auto& [n, _] : fields) s.insert(n);
  return s;
}

std::string to_string(DefectReason reason) {
  switch (reason) {
    case DefectReason::truncated: return "TRUNCATED";
    case DefectReason::trailing_bytes: return "TRAILING_BYTES";
    case DefectReason::combined: return "COMBINED";
    case DefectReason::bad_mti: return "BAD_MTI";
    case DefectReason::bad_length_indicator: return "BAD_LENGTH_INDICATOR";
    case DefectReason::bad_content: return "BAD_CONTENT";
    case DefectReason::unknown_field: return "UNKNOWN_FIELD";
  }
  return "UNKNOWN";
}

std::string to_string(const Verdict& verdict) {
  if (verdict.is_standard()) return "STANDARD";
  return "NON_STANDARD(" + to_string(*verdict.reason()) + ")";
}

void check_value(const FieldSpec& spec, std::string_view value) {
  const auto len = static_cast<int>(value.size());
  const std::string where = "field " + std::to_string(spec.number);
  if (spec.format.kind == LengthKind::fixed) {
    if (len != spec.format.length) {
      throw CodecError(where + ": expected length " + std::to_string(spec.format.length) +
                       ", got " + std::to_string(len));
    }
  } else if (len > spec.format.length) {
    throw CodecError(where + ": length " + std::to_string(len) + " exceeds max " +
                     std::to_string(spec.format.length));
  }
  for (char c : value) {
    if (!spec.accepts_char(c)) {
      throw CodecError(where + ": character not allowed for " + to_string(spec.content));
    }
  }
}

std::string encode_message(const IsoMessage& msg, const FieldDictionary& dict) {
  for (const auto& [n, value] : msg.fields) {
    if (n < kMinField || n > kMaxField) {
      throw CodecError("field number out of range: " + std::to_string(n));
    }
    const FieldSpec* spec = dict.find(n);
    if (!spec) throw CodecError("no dictionary entry for field " + std::to_string(n));
    check_value(*spec, value);
  }

  std::string out(msg.mti.str());
  out += encode_bitmap(msg.field_set());
  for (const auto& [n, value] : msg.fields) {
    const FieldSpec& spec = *dict.find(n);
    if (int digits = spec.format.prefix_digits(); digits > 0) {
      std::string prefix = std::to_string(value.size());
      out.append(static_cast<std::size_t>(digits) - prefix.size(), '0');
      out += prefix;
    }
    out += value;
  }
  return out;
}

namespace {

// Left-to-right scanner. Each step either consumes bytes or reports the
// first defect it meets.
class Scanner {
 public:
  explicit Scanner(std::string_view in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }
  std::string_view rest() const { return in_.substr(pos_); }

  // Takes `n` bytes that all satisfy `ok`. A bad byte before the end of
  // the input reports `bad`; running out of input first reports TRUNCATED.
  template <typename Pred>
  std::optional<DefectReason> take(std::size_t n, Pred ok, DefectReason bad, std::string_view& out) {
    const std::size_t avail = std::min(n, remaining());
    for (std::size_t i = 0; i < avail; ++i) {
      if (!ok(in_[pos_ + i])) return bad;
    }
    if (avail < n) return DefectReason::truncated;
    out = in_.substr(pos_, n);
    pos_ += n;
    return std::nullopt;
  }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

Decoded decode_message(std::string_view bytes, const FieldDictionary& dict) {
  Decoded result;
  auto fail = [&](DefectReason r) {
    result.verdict = Verdict::non_standard(r);
    return result;
  };

  Scanner scan(bytes);
  std::string_view mti;
  if (auto d = scan.take(4, is_digit, DefectReason::bad_mti, mti)) return fail(*d);
  result.message.mti = Mti(mti);

  // Lowercase hex would not re-encode byte-exactly, so only uppercase counts.
  std::string_view primary;
  if (auto d = scan.take(16, is_upper_hex, DefectReason::bad_content, primary)) return fail(*d);
  Bitmap bitmap = decode_bitmap(primary);
  if (bitmap.has_secondary()) {
    std::string_view secondary;
    if (auto d = scan.take(16, is_upper_hex, DefectReason::bad_content, secondary)) return fail(*d);
    bitmap = decode_bitmap(std::string(primary) + std::string(secondary));
    // An all-zero secondary map cannot come from encode_message.
    if (!bitmap.any_secondary_field()) return fail(DefectReason::bad_content);
  }

  for (int n : bitmap.data_fields()) {
    const FieldSpec* spec = dict.find(n);
    if (!spec) return fail(DefectReason::unknown_field);

    std::size_t len = static_cast<std::size_t>(spec->format.length);
    if (int digits = spec->format.prefix_digits(); digits > 0) {
      std::string_view prefix;
      if (auto d = scan.take(static_cast<std::size_t>(digits), is_digit,
                             DefectReason::bad_length_indicator, prefix)) {
        return fail(*d);
      }
      len = std::stoul(std::string(prefix));
      if (len > static_cast<std::size_t>(spec->format.length)) {
        return fail(DefectReason::bad_length_indicator);
      }
    }
    std::string_view value;
    auto ok = [spec](char c) { return spec->accepts_char(c); };
    if (auto d = scan.take(len, ok, DefectReason::bad_content, value)) return fail(*d);
    result.message.fields.emplace(n, std::string(value));
  }

  if (scan.remaining() > 0) {
    std::string_view rest = scan.rest();
    bool next_mti = rest.size() >= 4 && is_digits(rest.substr(0, 4));
    return fail(next_mti ? DefectReason::combined : DefectReason::trailing_bytes);
  }
  return result;
}

Verdict classify(std::string_view bytes, const FieldDictionary& dict) {
  return decode_message(bytes, dict).verdict;
}

IsoMessage build_echo_request(std::string_view stan) {
  if (stan.size() != 6 || !is_digits(stan)) {
    throw CodecError("STAN must be 6 digits: '" + std::string(stan) + "'");
  }
  return IsoMessage(Mti("0800"), {{11, std::string(stan)}, {70, "301"}});
}

}  // namespace isoha::iso8583
