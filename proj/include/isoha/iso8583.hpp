#pragma once

// ISO 8583 codec: ASCII MTI, hex-rendered primary/secondary bitmaps and
// FIXED / LLVAR / LLLVAR data elements.

#include <array>
#include <bitset>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace isoha::iso8583 {

inline constexpr int kMinField = 2;
inline constexpr int kMaxField = 128;

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Four ASCII decimal digits: version, class, function, origin.
class Mti {
 public:
  static std::optional<Mti> parse(std::string_view digits);

  // Throws CodecError unless `digits` is exactly four decimal digits.
  explicit Mti(std::string_view digits);

  std::string_view str() const { return {digits_.data(), digits_.size()}; }
  int digit(std::size_t pos) const { return digits_.at(pos) - '0'; }

  friend bool operator==(const Mti&, const Mti&) = default;

 private:
  Mti() = default;
  std::array<char, 4> digits_{};
};

using FieldSet = std::set<int>;

// Presence map of fields 1..128. Bit 1 is the secondary-bitmap indicator.
class Bitmap {
 public:
  Bitmap() = default;

  // Data fields 2..128; bit 1 is set automatically when any field > 64.
  static Bitmap from_fields(const FieldSet& fields);

  bool contains(int field) const;
  bool has_secondary() const { return contains(1); }
  bool any_secondary_field() const;

  // All set bits ascending, including 1 when set.
  std::vector<int> fields() const;
  // Set bits ascending, excluding the indicator bit.
  std::vector<int> data_fields() const;

  void set(int field);

  friend bool operator==(const Bitmap&, const Bitmap&) = default;

 private:
  std::bitset<kMaxField> bits_;  // bit index = field - 1
};

enum class BitmapErrorKind { non_hex, bad_length, secondary_unflagged };

class BitmapError : public CodecError {
 public:
  BitmapError(BitmapErrorKind kind, const std::string& what)
      : CodecError(what), kind_(kind) {}
  BitmapErrorKind kind() const { return kind_; }

 private:
  BitmapErrorKind kind_;
};

// Accepts 16 hex chars (primary map only) or 32 (primary + secondary).
// A 16-char map with bit 1 set decodes as-is; callers that need the
// secondary map check has_secondary(). A 32-char map must have bit 1 set.
Bitmap decode_bitmap(std::string_view hex);

// 16 uppercase hex chars, or 32 with bit 1 set when any field > 64.
std::string encode_bitmap(const FieldSet& fields);
std::string encode_bitmap(const Bitmap& bitmap);

// ---------------------------------------------------------------------------
// Field dictionary

enum class LengthKind { fixed, llvar, lllvar };
enum class ContentClass { numeric, alphanum, alphanum_special };

struct FieldFormat {
  LengthKind kind = LengthKind::fixed;
  int length = 1;  // exact length for FIXED, maximum otherwise

  static FieldFormat fixed(int n) { return {LengthKind::fixed, n}; }
  static FieldFormat llvar(int max) { return {LengthKind::llvar, max}; }
  static FieldFormat lllvar(int max) { return {LengthKind::lllvar, max}; }

  int prefix_digits() const;

  friend bool operator==(const FieldFormat&, const FieldFormat&) = default;
};

struct FieldSpec {
  int number = 0;
  FieldFormat format;
  ContentClass content = ContentClass::alphanum_special;

  // Throws CodecError when the field definition is out of range.
  void validate() const;
  bool accepts_char(char c) const;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

class DictionaryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FieldDictionary {
 public:
  FieldDictionary() = default;

  // 2 PAN, 3 processing code, 4 amount, 7 transmission date-time,
  // 11 STAN, 39 response code, 41 terminal id, 70 network management code.
  static const FieldDictionary& default_dictionary();

  // Line format: `field=<n> format=<FIXED:n|LLVAR:n|LLLVAR:n> content=<N|AN|ANS>`.
  static FieldDictionary parse(std::string_view text);
  static FieldDictionary load(const std::string& path);

  void add(const FieldSpec& spec);
  const FieldSpec* find(int field) const;
  std::size_t size() const { return specs_.size(); }
  const std::map<int, FieldSpec>& specs() const { return specs_; }

 private:
  std::map<int, FieldSpec> specs_;
};

std::string to_string(LengthKind kind);
std::string to_string(ContentClass content);

// ---------------------------------------------------------------------------
// Messages

struct IsoMessage {
  Mti mti{"0000"};
  std::map<int, std::string> fields;

  IsoMessage() = default;
  IsoMessage(Mti m, std::map<int, std::string> f)
      : mti(m), fields(std::move(f)) {}

  const std::string* field(int n) const;
  FieldSet field_set() const;

  friend bool operator==(const IsoMessage&, const IsoMessage&) = default;
};

enum class DefectReason {
  truncated,
  trailing_bytes,
  combined,
  bad_mti,
  bad_length_indicator,
  bad_content,
  unknown_field,
};

class Verdict {
 public:
  static Verdict standard() { return Verdict{}; }
  static Verdict non_standard(DefectReason reason) { return Verdict{reason}; }

  bool is_standard() const { return !reason_.has_value(); }
  std::optional<DefectReason> reason() const { return reason_; }

  friend bool operator==(const Verdict&, const Verdict&) = default;

 private:
  Verdict() = default;
  explicit Verdict(DefectReason r) : reason_(r) {}
  std::optional<DefectReason> reason_;
};

std::string to_string(DefectReason reason);
std::string to_string(const Verdict& verdict);

struct Decoded {
  IsoMessage message;
  Verdict verdict = Verdict::standard();
};

// Never throws. The first defect scanning left to right decides the reason.
Decoded decode_message(std::string_view bytes, const FieldDictionary& dict);

// Same verdict decode_message returns.
Verdict classify(std::string_view bytes, const FieldDictionary& dict);

// MTI(4) + bitmap hex + fields ascending, each as [LL/LLL digits] value.
// Throws CodecError for unknown fields or values violating their spec.
std::string encode_message(const IsoMessage& msg, const FieldDictionary& dict);

// Throws CodecError when `value` does not fit the field definition.
void check_value(const FieldSpec& spec, std::string_view value);

// Request MTI -> response MTI (third digit + 1). Throws for responses.
Mti response_mti(const Mti& request);

// 0800 with {11: stan, 70: "301"}. Throws unless stan is six digits.
IsoMessage build_echo_request(std::string_view stan);

bool is_digits(std::string_view s);

}  // namespace isoha::iso8583
