#include <fstream>
#include <sstream>

#include "isoha/iso8583.hpp"

namespace isoha::iso8583 {

int FieldFormat::prefix_digits() const {
  switch (kind) {
    case LengthKind::fixed: return 0;
    case LengthKind::llvar: return 2;
    case LengthKind::lllvar: return 3;
  }
  return 0;
}

void FieldSpec::validate() const {
  const std::string where = "field " + std::to_string(number);
  if (number < kMinField || number > kMaxField) {
    throw CodecError("field number must be in 2..128, got " + std::to_string(number));
  }
  switch (format.kind) {
    case LengthKind::fixed:
      if (format.length < 1) throw CodecError(where + ": FIXED length must be >= 1");
      break;
    case LengthKind::llvar:
      if (format.length < 1 || format.length > 99) throw CodecError(where + ": LLVAR max must be 1..99");
      break;
    case LengthKind::lllvar:
      if (format.length < 1 || format.length > 999) throw CodecError(where + ": LLLVAR max must be 1..999");
      break;
  }
}

bool FieldSpec::accepts_char(char c) const {
  switch (content) {
    case ContentClass::numeric: return c >= '0' && c <= '9';
    case ContentClass::alphanum:
      return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
    case ContentClass::alphanum_special: return c >= 0x20 && c <= 0x7E;
  }
  return false;
}

std::string to_string(LengthKind kind) {
  switch (kind) {
    case LengthKind::fixed: return "FIXED";
    case LengthKind::llvar: return "LLVAR";
    case LengthKind::lllvar: return "LLLVAR";
  }
  return "?";
}

std::string to_string(ContentClass content) {
  switch (content) {
    case ContentClass::numeric: return "N";
    case ContentClass::alphanum: return "AN";
    case ContentClass::alphanum_special: return "ANS";
  }
  return "?";
}

const FieldDictionary& FieldDictionary::default_dictionary() {
  static const FieldDictionary dict = [] {
    FieldDictionary d;
    d.add({2, FieldFormat::llvar(19), ContentClass::numeric});
    d.add({3, FieldFormat::fixed(6), ContentClass::numeric});
    d.add({4, FieldFormat::fixed(12), ContentClass::numeric});
    d.add({7, FieldFormat::fixed(10), ContentClass::numeric});
    d.add({11, FieldFormat::fixed(6), ContentClass::numeric});
    d.add({39, FieldFormat::fixed(2), ContentClass::alphanum});
    d.add({41, FieldFormat::fixed(8), ContentClass::alphanum_special});
    d.add({70, FieldFormat::fixed(3), ContentClass::numeric});
    return d;
  }();
  return dict;
}

void FieldDictionary::add(const FieldSpec& spec) {
  try {
    spec.validate();
  } catch (const CodecError& e) {
    throw DictionaryError(e.what());
  }
  if (!specs_.emplace(spec.number, spec).second) {
    throw DictionaryError("duplicate field " + std::to_string(spec.number));
  }
}

const FieldSpec* FieldDictionary::find(int field) const {
  auto it = specs_.find(field);
  return it == specs_.end() ? nullptr : &it->second;
}

namespace {

int parse_int(const std::string& s, const std::string& ctx) {
  if (s.empty() || !is_digits(s) || s.size() > 4) throw DictionaryError(ctx + ": bad integer '" + s + "'");
  return std::stoi(s);
}

FieldFormat parse_format(const std::string& v, const std::string& ctx) {
  auto colon = v.find(':');
  if (colon == std::string::npos) throw DictionaryError(ctx + ": format needs KIND:n");
  const std::string kind = v.substr(0, colon);
  const int n = parse_int(v.substr(colon + 1), ctx);
  if (kind == "FIXED") return FieldFormat::fixed(n);
  if (kind == "LLVAR") return FieldFormat::llvar(n);
  if (kind == "LLLVAR") return FieldFormat::lllvar(n);
  throw DictionaryError(ctx + ": unknown format kind '" + kind + "'");
}

ContentClass parse_content(const std::string& v, const std::string& ctx) {
  if (v == "N") return ContentClass::numeric;
  if (v == "AN") return ContentClass::alphanum;
  if (v == "ANS") return ContentClass::alphanum_special;
  throw DictionaryError(ctx + ": unknown content class '" + v + "'");
}

}  // namespace

FieldDictionary FieldDictionary::parse(std::string_view text) {
  FieldDictionary dict;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string token;
    std::optional<int> number;
    std::optional<FieldFormat> format;
    std::optional<ContentClass> content;
    const std::string ctx = "line " + std::to_string(line_no);
    bool any = false;
    while (tokens >> token) {
      any = true;
      auto eq = token.find('=');
      if (eq == std::string::npos) throw DictionaryError(ctx + ": expected key=value, got '" + token + "'");
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "field" && !number) {
        number = parse_int(value, ctx);
      } else if (key == "format" && !format) {
        format = parse_format(value, ctx);
      } else if (key == "content" && !content) {
        content = parse_content(value, ctx);
      } else {
        throw DictionaryError(ctx + ": unexpected or repeated key '" + key + "'");
      }
    }
    if (!any) continue;
    if (!number || !format || !content) {
      throw DictionaryError(ctx + ": field, format and content are all required");
    }
    try {
      dict.add({*number, *format, *content});
    } catch (const DictionaryError& e) {
      throw DictionaryError(ctx + ": " + e.what());
    }
  }
  return dict;
}

FieldDictionary FieldDictionary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DictionaryError("cannot open dictionary file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace isoha::iso8583
