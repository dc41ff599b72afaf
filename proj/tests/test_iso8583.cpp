#include <gtest/gtest.h>

#include "isoha/iso8583.hpp"
#include "support.hpp"

using namespace isoha::iso8583;
using testsupport::oracle_bitmap_fields;
using testsupport::oracle_bitmap_hex;

namespace {

const FieldDictionary& dict() { return FieldDictionary::default_dictionary(); }

std::set<int> as_set(const std::vector<int>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(Mti, ParsesFourDigits) {
  EXPECT_TRUE(Mti::parse("0200"));
  EXPECT_FALSE(Mti::parse("020"));
  EXPECT_FALSE(Mti::parse("02X0"));
  EXPECT_FALSE(Mti::parse("02000"));
  EXPECT_THROW(Mti("abcd"), CodecError);
  EXPECT_EQ(Mti("0810").digit(2), 1);
}

TEST(Mti, ResponseIncrementsThirdDigit) {
  EXPECT_EQ(response_mti(Mti("0200")).str(), "0210");
  EXPECT_EQ(response_mti(Mti("0800")).str(), "0810");
  EXPECT_THROW(response_mti(Mti("0210")), CodecError);
}

TEST(Bitmap, DecodeExamples) {
  EXPECT_EQ(as_set(decode_bitmap("8000000000000000").fields()), (std::set<int>{1}));
  EXPECT_EQ(as_set(decode_bitmap("0000000002000000").fields()), (std::set<int>{39}));
  EXPECT_EQ(as_set(decode_bitmap("80200000000000000400000000000000").fields()),
            oracle_bitmap_fields("80200000000000000400000000000000"));
  EXPECT_EQ(as_set(decode_bitmap("80200000000000000400000000000000").fields()), (std::set<int>{1, 11, 70}));
}

TEST(Bitmap, DecodeErrors) {
  try {
    decode_bitmap("00000000000000G0");
    FAIL();
  } catch (const BitmapError& e) {
    EXPECT_EQ(e.kind(), BitmapErrorKind::non_hex);
  }
  try {
    decode_bitmap("000000000000000");
    FAIL();
  } catch (const BitmapError& e) {
    EXPECT_EQ(e.kind(), BitmapErrorKind::bad_length);
  }
  try {
    decode_bitmap("00200000000000000400000000000000");
    FAIL();
  } catch (const BitmapError& e) {
    EXPECT_EQ(e.kind(), BitmapErrorKind::secondary_unflagged);
  }
}

TEST(Bitmap, EncodeExamplesMatchOracle) {
  EXPECT_EQ(encode_bitmap(FieldSet{39}), "0000000002000000");
  EXPECT_EQ(encode_bitmap(FieldSet{2, 3, 4, 7, 11, 39, 41}), oracle_bitmap_hex({2, 3, 4, 7, 11, 39, 41}));
  EXPECT_EQ(encode_bitmap(FieldSet{2, 3, 4, 7, 11, 39, 41}), "7220000002800000");
  EXPECT_EQ(encode_bitmap(FieldSet{11, 70}), oracle_bitmap_hex({11, 70}));
  EXPECT_EQ(encode_bitmap(FieldSet{11, 70}), "80200000000000000400000000000000");
  EXPECT_EQ(encode_bitmap(FieldSet{}), "0000000000000000");
  EXPECT_THROW(encode_bitmap(FieldSet{1}), CodecError);
  EXPECT_THROW(encode_bitmap(FieldSet{129}), CodecError);
}

TEST(Bitmap, SingleBitsAgreeWithOracle) {
  for (int f = 2; f <= 128; ++f) {
    const std::string hex = encode_bitmap(FieldSet{f});
    ASSERT_EQ(hex, oracle_bitmap_hex({f})) << f;
    std::set<int> expect{f};
    if (f > 64) expect.insert(1);
    ASSERT_EQ(as_set(decode_bitmap(hex).fields()), expect) << f;
  }
}

TEST(Bitmap, RandomSetsAgreeWithOracle) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 2000; ++i) {
    FieldSet s;
    const int n = static_cast<int>(rng() % 20);
    for (int k = 0; k < n; ++k) s.insert(2 + static_cast<int>(rng() % 127));
    const std::string hex = encode_bitmap(s);
    ASSERT_EQ(hex, oracle_bitmap_hex(s));
    ASSERT_EQ(as_set(decode_bitmap(hex).fields()), oracle_bitmap_fields(hex));
    ASSERT_EQ(as_set(decode_bitmap(hex).data_fields()), s);
  }
}

TEST(Dictionary, DefaultTable) {
  const auto& d = dict();
  EXPECT_EQ(d.size(), 8u);
  EXPECT_EQ(d.find(2)->format, FieldFormat::llvar(19));
  EXPECT_EQ(d.find(2)->content, ContentClass::numeric);
  EXPECT_EQ(d.find(39)->content, ContentClass::alphanum);
  EXPECT_EQ(d.find(41)->content, ContentClass::alphanum_special);
  EXPECT_EQ(d.find(70)->format, FieldFormat::fixed(3));
  EXPECT_EQ(d.find(1), nullptr);
}

TEST(Dictionary, ParsesTextFormat) {
  auto d = FieldDictionary::parse(
      "# comment\n"
      "field=2 format=LLVAR:19 content=N\n"
      "\n"
      "field=48 format=LLLVAR:999 content=ANS   # private data\n"
      "field=39 format=FIXED:2 content=AN\n");
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.find(48)->format, FieldFormat::lllvar(999));
  EXPECT_THROW(FieldDictionary::parse("field=2 format=LLVAR:19 content=N\nfield=2 format=FIXED:2 content=N\n"),
               DictionaryError);
  EXPECT_THROW(FieldDictionary::parse("field=1 format=FIXED:2 content=N\n"), DictionaryError);
  EXPECT_THROW(FieldDictionary::parse("field=5 format=LLVAR:100 content=N\n"), DictionaryError);
  EXPECT_THROW(FieldDictionary::parse("field=5 format=LLLVAR:1000 content=N\n"), DictionaryError);
  EXPECT_THROW(FieldDictionary::parse("field=5 format=FIXED:0 content=N\n"), DictionaryError);
  EXPECT_THROW(FieldDictionary::parse("field=5 format=FIXED:2 content=Q\n"), DictionaryError);
  EXPECT_THROW(FieldDictionary::parse("field=5 format=FIXED:2\n"), DictionaryError);
}

TEST(Encode, EchoReplyLayout) {
  IsoMessage m(Mti("0810"), {{11, "000001"}, {39, "00"}, {70, "301"}});
  const std::string expect = std::string("0810") + "8020000002000000" + "0400000000000000" + "000001" + "00" + "301";
  EXPECT_EQ(encode_message(m, dict()), expect);
  EXPECT_EQ(oracle_bitmap_hex({11, 39, 70}), "80200000020000000400000000000000");
}

TEST(Encode, EmptyAndLlvar) {
  EXPECT_EQ(encode_message(IsoMessage(Mti("0800"), {}), dict()), "0800" "0000000000000000");
  IsoMessage m(Mti("0200"), {{2, "4000001234567899"}});
  EXPECT_EQ(encode_message(m, dict()), "0200" + oracle_bitmap_hex({2}) + "16" + "4000001234567899");
}

TEST(Encode, RejectsInvalidValues) {
  EXPECT_THROW(encode_message(IsoMessage(Mti("0200"), {{5, "1"}}), dict()), CodecError);
  EXPECT_THROW(encode_message(IsoMessage(Mti("0200"), {{11, "12345"}}), dict()), CodecError);
  EXPECT_THROW(encode_message(IsoMessage(Mti("0200"), {{11, "12345A"}}), dict()), CodecError);
  EXPECT_THROW(encode_message(IsoMessage(Mti("0200"), {{2, std::string(20, '1')}}), dict()), CodecError);
  EXPECT_THROW(encode_message(IsoMessage(Mti("0200"), {{39, "0 "}}), dict()), CodecError);
  EXPECT_NO_THROW(encode_message(IsoMessage(Mti("0200"), {{41, "T 1~/=!a"}}), dict()));
}

TEST(Decode, EchoRequestExample) {
  const std::string bytes = std::string("0800") + "80200000000000000400000000000000" + "000001" + "301";
  Decoded d = decode_message(bytes, dict());
  EXPECT_TRUE(d.verdict.is_standard());
  EXPECT_EQ(d.message, build_echo_request("000001"));
  EXPECT_EQ(encode_message(d.message, dict()), bytes);
}

TEST(Decode, TrailingAndCombined) {
  const std::string reply = encode_message(IsoMessage(Mti("0210"), {{11, "000001"}, {39, "00"}}), dict());
  EXPECT_EQ(classify(reply + "X", dict()), Verdict::non_standard(DefectReason::trailing_bytes));
  EXPECT_EQ(classify(reply + "|", dict()), Verdict::non_standard(DefectReason::trailing_bytes));
  EXPECT_EQ(classify(reply + reply, dict()), Verdict::non_standard(DefectReason::combined));
  EXPECT_EQ(classify(reply + "021", dict()), Verdict::non_standard(DefectReason::trailing_bytes));
}

TEST(Decode, DefectReasons) {
  EXPECT_EQ(classify("", dict()), Verdict::non_standard(DefectReason::truncated));
  EXPECT_EQ(classify("02XX" "0000000000000000", dict()), Verdict::non_standard(DefectReason::bad_mti));
  EXPECT_EQ(classify("080", dict()), Verdict::non_standard(DefectReason::truncated));
  // Primary map promises a secondary that never arrives.
  EXPECT_EQ(classify("0800" "8000000000000000", dict()), Verdict::non_standard(DefectReason::truncated));
  EXPECT_EQ(classify("0800" "0000000000G00000", dict()), Verdict::non_standard(DefectReason::bad_content));
  EXPECT_EQ(classify("0800" "000000000000000a", dict()), Verdict::non_standard(DefectReason::bad_content));
  EXPECT_EQ(classify("0800" "8000000000000000" "0000000000000000", dict()),
            Verdict::non_standard(DefectReason::bad_content));
  // Field 5 is not in the default table.
  EXPECT_EQ(classify("0200" + oracle_bitmap_hex({5}) + "1", dict()),
            Verdict::non_standard(DefectReason::unknown_field));
  EXPECT_EQ(classify("0200" + oracle_bitmap_hex({2}) + "2A4000", dict()),
            Verdict::non_standard(DefectReason::bad_length_indicator));
  EXPECT_EQ(classify("0200" + oracle_bitmap_hex({2}) + "20" + std::string(20, '1'), dict()),
            Verdict::non_standard(DefectReason::bad_length_indicator));
  EXPECT_EQ(classify("0200" + oracle_bitmap_hex({2}) + "05123", dict()),
            Verdict::non_standard(DefectReason::truncated));
  EXPECT_EQ(classify("0200" + oracle_bitmap_hex({11}) + "12A456", dict()),
            Verdict::non_standard(DefectReason::bad_content));
  EXPECT_EQ(classify("0200" + oracle_bitmap_hex({11}) + "123", dict()),
            Verdict::non_standard(DefectReason::truncated));
}

TEST(Decode, FirstDefectWins) {
  // Bad content in field 11 comes before the unknown field 70 would be seen.
  IsoMessage m(Mti("0800"), {{11, "000001"}, {70, "301"}});
  std::string bytes = encode_message(m, dict());
  bytes[4 + 32] = 'Z';
  EXPECT_EQ(classify(bytes, dict()), Verdict::non_standard(DefectReason::bad_content));
  EXPECT_EQ(classify(bytes, FieldDictionary{}), Verdict::non_standard(DefectReason::unknown_field));
}

TEST(EchoRequest, Builds) {
  IsoMessage m = build_echo_request("000001");
  EXPECT_EQ(m.mti.str(), "0800");
  EXPECT_EQ(m.field_set(), (FieldSet{11, 70}));
  EXPECT_EQ(decode_message(encode_message(m, dict()), dict()).message, m);
  EXPECT_EQ(*build_echo_request("999999").field(11), "999999");
  EXPECT_THROW(build_echo_request("12345"), CodecError);
  EXPECT_THROW(build_echo_request("12345a"), CodecError);
}

TEST(Property, RoundtripRandomMessages) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 3000; ++i) {
    IsoMessage m = testsupport::random_message(rng, dict());
    const std::string bytes = encode_message(m, dict());
    ASSERT_EQ(bytes, testsupport::oracle_encode(m, dict()));
    Decoded d = decode_message(bytes, dict());
    ASSERT_TRUE(d.verdict.is_standard()) << bytes;
    ASSERT_EQ(d.message, m);
    ASSERT_EQ(encode_message(d.message, dict()), bytes);
  }
}

TEST(Property, SuffixAlwaysNonStandard) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 2000; ++i) {
    const std::string bytes = encode_message(testsupport::random_message(rng, dict()), dict());
    std::string suffix;
    const int n = 1 + static_cast<int>(rng() % 8);
    for (int k = 0; k < n; ++k) suffix.push_back(static_cast<char>(rng() % 256));
    auto r = classify(bytes + suffix, dict()).reason();
    ASSERT_TRUE(r == DefectReason::trailing_bytes || r == DefectReason::combined);
  }
}

TEST(Property, ClassifyIsTotal) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const int n = static_cast<int>(rng() % 64);
    // Mostly digits and hex so scans get past the header.
    for (int k = 0; k < n; ++k) s.push_back(rng() % 4 ? "0123456789ABCDEF"[rng() % 16] : static_cast<char>(rng() % 256));
    Decoded d = decode_message(s, dict());
    ASSERT_EQ(d.verdict, classify(s, dict()));
    if (d.verdict.is_standard()) {
      ASSERT_EQ(encode_message(d.message, dict()), s);
    }
  }
}
