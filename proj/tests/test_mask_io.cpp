#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "segplex/mask_io.hpp"

using namespace segplex;

namespace {

RunLengthMask rle(int h, int w, std::vector<std::int64_t> counts) {
  RunLengthMask m;
  m.height = h;
  m.width = w;
  m.counts = std::move(counts);
  return m;
}

SegmentationRecord small_record() {
  SegmentationRecord r;
  r.image_id = "a";
  r.image_width = 3;
  r.image_height = 3;
  r.segments = {rle(3, 3, {2, 3, 4}), rle(3, 3, {9})};
  r.class_instances = {{"tree", std::nullopt, 0.5, nlohmann::json::object()}};
  return r;
}

}  // namespace

TEST(DecodeRle, SingleBackgroundRun) {
  const auto m = decode_rle(rle(1, 4, {4}));
  EXPECT_EQ(m.foreground(), 0u);
  EXPECT_EQ(m.height(), 1);
  EXPECT_EQ(m.width(), 4);
}

TEST(DecodeRle, LeadingZeroRunMeansAllForeground) {
  const auto m = decode_rle(rle(1, 4, {0, 4}));
  EXPECT_EQ(m.foreground(), 4u);
}

TEST(DecodeRle, ColumnMajorOrder) {
  const auto m = decode_rle(rle(3, 3, {2, 3, 4}));
  std::vector<std::pair<int, int>> fg;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r)
      if (m.at(r, c)) fg.emplace_back(r, c);
  const std::vector<std::pair<int, int>> expected{{2, 0}, {0, 1}, {1, 1}};
  EXPECT_EQ(fg, expected);
}

TEST(DecodeRle, CountMismatchNamesImageAndIndex) {
  try {
    decode_rle(rle(2, 2, {1, 2}), {"img7", 3});
    FAIL() << "expected malformed_mask_error";
  } catch (const malformed_mask_error& e) {
    EXPECT_EQ(e.image_id(), "img7");
    EXPECT_EQ(e.mask_index(), 3);
    EXPECT_NE(std::string(e.what()).find("img7"), std::string::npos);
  }
  EXPECT_THROW(decode_rle(rle(2, 2, {-1, 5})), malformed_mask_error);
  EXPECT_THROW(decode_rle(rle(2, 2, {1, 0, 3})), malformed_mask_error);
  EXPECT_THROW(decode_rle(rle(0, 2, {0})), malformed_mask_error);
}

TEST(EncodeRle, CanonicalForms) {
  EXPECT_EQ(encode_rle(BinaryMask(2, 2, false)).counts, (std::vector<std::int64_t>{4}));
  EXPECT_EQ(encode_rle(BinaryMask(2, 2, true)).counts, (std::vector<std::int64_t>{0, 4}));
  EXPECT_EQ(encode_rle(decode_rle(rle(3, 3, {2, 3, 4}))).counts, (std::vector<std::int64_t>{2, 3, 4}));
}

TEST(EncodeRle, RoundTripAndConservationOnRandomMasks) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 500; ++t) {
    const int h = 1 + static_cast<int>(rng() % 20), w = 1 + static_cast<int>(rng() % 20);
    const double density = (rng() % 100) / 100.0;
    BinaryMask m(h, w);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) m.set(r, c, (rng() % 1000) / 1000.0 < density);
    const auto enc = encode_rle(m);
    ASSERT_FALSE(check_rle(enc).has_value());
    ASSERT_EQ(decode_rle(enc), m);
    std::int64_t odd = 0;
    for (std::size_t i = 1; i < enc.counts.size(); i += 2) odd += enc.counts[i];
    ASSERT_EQ(static_cast<std::size_t>(odd), m.foreground());
  }
}

TEST(LoadRecord, MinimalEmptyRecord) {
  const auto r = load_record(
      R"({"image_id":"x","image_width":5,"image_height":4,"granularity":64,"segments":[],"class_instances":[]})");
  EXPECT_EQ(r.image_id, "x");
  EXPECT_TRUE(r.segments.empty());
  EXPECT_TRUE(r.class_instances.empty());
  EXPECT_EQ(r.granularity, 64);
}

TEST(LoadRecord, BadCountsAreMalformedMask) {
  EXPECT_THROW(load_record(R"({"image_id":"x","image_width":2,"image_height":2,"granularity":64,)"
                           R"("segments":[{"h":2,"w":2,"counts":[1,2]}],"class_instances":[]})"),
               malformed_mask_error);
}

TEST(LoadRecord, ParseErrorCarriesOffset) {
  try {
    load_record(R"({"image_id": "x", oops})");
    FAIL();
  } catch (const parse_error& e) {
    EXPECT_EQ(e.byte_offset(), 18u);  // the unquoted key
  }
}

TEST(LoadRecord, MissingRequiredFieldNamesPath) {
  try {
    load_record(R"({"image_id":"x","image_width":2,"image_height":2,"granularity":64,)"
                R"("segments":[{"h":2,"counts":[4]}],"class_instances":[]})");
    FAIL();
  } catch (const field_error& e) {
    EXPECT_EQ(e.path(), "segments[0].w");
  }
  EXPECT_THROW(load_record(R"({"image_id":"x","image_width":2,"image_height":2,"segments":[],"class_instances":[]})"),
               field_error);
  EXPECT_THROW(load_record(R"({"image_id":7,"image_width":2,"image_height":2,"granularity":1,"segments":[],)"
                           R"("class_instances":[]})"),
               field_error);
}

TEST(LoadRecord, UnknownOptionalFieldsSurviveRoundTrip) {
  const std::string text =
      R"({"image_id":"x","image_width":1,"image_height":1,"granularity":64,)"
      R"("segments":[{"h":1,"w":1,"counts":[0,1],"area":1}],)"
      R"("class_instances":[{"label":"sky","score":0.25,"iscrowd":false}],"source":{"model":"v2"}})";
  const auto r = load_record(text);
  EXPECT_EQ(r.extra.at("source").at("model"), "v2");
  EXPECT_EQ(r.segments[0].extra.at("area"), 1);
  EXPECT_EQ(r.class_instances[0].extra.at("iscrowd"), false);
  EXPECT_EQ(load_record(serialize_record(r)), r);
  EXPECT_EQ(serialize_record(r), text);
}

TEST(LoadRecord, FixtureWithThreeSegmentsAndTwoInstances) {
  std::ifstream in(SEGPLEX_FIXTURE_DIR "/three_segments.jsonl");
  ASSERT_TRUE(in);
  const auto file = read_record_file(in, "three_segments.jsonl");
  EXPECT_EQ(file.header.producer, "hand-authored");
  EXPECT_EQ(file.header.created, "2024-01-01T00:00:00Z");
  ASSERT_EQ(file.records.size(), 1u);
  const auto& r = file.records[0];
  // Values below were read off the fixture by hand.
  EXPECT_EQ(r.image_id, "fixture-001");
  EXPECT_EQ(r.image_width, 4);
  EXPECT_EQ(r.image_height, 2);
  EXPECT_EQ(r.granularity, 64);
  ASSERT_EQ(r.segments.size(), 3u);
  EXPECT_EQ(r.segments[0].counts, (std::vector<std::int64_t>{0, 2, 6}));
  EXPECT_EQ(r.segments[1].counts, (std::vector<std::int64_t>{2, 4, 2}));
  EXPECT_EQ(r.segments[2].counts, (std::vector<std::int64_t>{6, 2}));
  EXPECT_EQ(*r.segments[1].id, 1);
  ASSERT_EQ(r.class_instances.size(), 2u);
  EXPECT_EQ(r.class_instances[0].label, "wall");
  EXPECT_DOUBLE_EQ(*r.class_instances[0].score, 0.9);
  EXPECT_FALSE(r.class_instances[0].mask.has_value());
  EXPECT_EQ(r.class_instances[1].label, "window");
  EXPECT_FALSE(r.class_instances[1].score.has_value());
  EXPECT_EQ(r.class_instances[1].mask->counts, (std::vector<std::int64_t>{2, 4, 2}));

  std::ostringstream out;
  write_record_file(out, file);
  std::istringstream again(out.str());
  const auto reread = read_record_file(again);
  EXPECT_EQ(reread.header, file.header);
  EXPECT_EQ(reread.records, file.records);
}

TEST(ReadRecordFile, ReportsLineAndRejectsDuplicates) {
  const std::string header = R"({"format_version":"1","producer":"t","created":"now"})";
  const std::string rec = R"({"image_id":"a","image_width":1,"image_height":1,"granularity":64,"segments":[],)"
                          R"("class_instances":[]})";
  {
    std::istringstream in(header + "\n" + rec + "\n\n" + rec + "\n");
    try {
      read_record_file(in, "f.jsonl");
      FAIL();
    } catch (const record_file_error& e) {
      EXPECT_EQ(e.line(), 4u);
    }
  }
  {
    std::istringstream in(rec + "\n");
    EXPECT_THROW(read_record_file(in), record_file_error);
  }
  {
    std::istringstream in(R"({"format_version":"2","producer":"t","created":"now"})");
    EXPECT_THROW(read_record_file(in), record_file_error);
  }
  {
    std::istringstream in(header + "\n{bad\n");
    try {
      read_record_file(in, "f.jsonl");
      FAIL();
    } catch (const record_file_error& e) {
      EXPECT_EQ(e.line(), 2u);
      EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
    }
  }
}

TEST(ValidateRecord, ValidRecordHasNoFindings) {
  const auto report = validate_record(small_record());
  EXPECT_TRUE(report.ok());
  EXPECT_TRUE(report.findings.empty());
}

TEST(ValidateRecord, WrongMaskDimensionsIsOneFinding) {
  auto r = small_record();
  r.segments[1] = rle(1, 9, {9});
  const auto report = validate_record(r);
  ASSERT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.findings[0].path, "segments[1]");
  EXPECT_EQ(report.findings[0].mask_index, 1);
}

TEST(ValidateRecord, DuplicateMaskIndexAndNegativeScoreAreTwoFindings) {
  auto r = small_record();
  r.segments[0].id = 4;
  r.segments[1].id = 4;
  r.class_instances[0].score = -0.1;
  const auto report = validate_record(r);
  ASSERT_EQ(report.findings.size(), 2u);
  EXPECT_EQ(report.findings[0].path, "segments[1].id");
  EXPECT_EQ(report.findings[1].path, "class_instances[0].score");
}

TEST(ValidateRecord, SegmentCountNotAboveClassCountIsOnlyAWarning) {
  auto r = small_record();
  r.class_instances.push_back({"car", std::nullopt, std::nullopt, nlohmann::json::object()});
  const auto report = validate_record(r);
  EXPECT_TRUE(report.ok());
  EXPECT_EQ(report.warnings.size(), 1u);
}

TEST(ValidateRecord, NeverThrowsOnGarbage) {
  SegmentationRecord r;
  r.image_width = -1;
  r.segments = {rle(0, 0, {})};
  r.class_instances = {{"", rle(1, 1, {5}), 2.0, nlohmann::json::object()}};
  ValidationReport report;
  ASSERT_NO_THROW(report = validate_record(r));
  EXPECT_EQ(report.findings.size(), 7u);
}
