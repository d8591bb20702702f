#include <gtest/gtest.h>

#include <sstream>

#include "segplex/dataset.hpp"

using namespace segplex;

namespace {

DatasetManifest manifest(std::string name, std::vector<std::pair<std::string, double>> cat_rating) {
  DatasetManifest m;
  m.name = std::move(name);
  for (std::size_t i = 0; i < cat_rating.size(); ++i)
    m.rows.push_back({m.name + "_" + std::to_string(i), "", cat_rating[i].first, cat_rating[i].second, std::nullopt});
  return m;
}

}  // namespace

TEST(NormalizeRatings, MinMaxOntoHundred) {
  const auto out = normalize_ratings(std::vector<double>{0.2, 0.7, 1.2});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_NEAR(out[1], 50.0, 1e-12);
  EXPECT_EQ(out[2], 100.0);
  EXPECT_EQ(normalize_ratings(std::vector<double>{0, 100, 25}), (std::vector<double>{0, 100, 25}));
}

TEST(NormalizeRatings, ConstantInputIsAnError) {
  EXPECT_THROW(normalize_ratings(std::vector<double>{3, 3}), input_error);
  EXPECT_THROW(normalize_ratings(std::vector<double>{}), input_error);
}

TEST(NormalizeCategory, FoldsCaseSpacingAndAliases) {
  EXPECT_EQ(normalize_category("Interior Design"), "interior_design");
  EXPECT_EQ(normalize_category("Scene"), "scenes");
  EXPECT_EQ(normalize_category("people"), "persons");
  EXPECT_EQ(normalize_dataset_name("IC-9600"), "ic9600");
}

TEST(MergeCategories, ScenesGroupingUnionsFiveCategories) {
  const std::vector<DatasetManifest> ms{manifest(
      "ic9600", {{"scenes", 1}, {"objects", 2}, {"persons", 3}, {"transportation", 4}, {"architecture", 5},
                 {"paintings", 9}, {"abstract", 0}})};
  const auto sk = merge_categories(ms, find_grouping("IC9. Scenes"));
  ASSERT_EQ(sk.rows.size(), 5u);
  // Normalized over the merged set, not per category.
  EXPECT_EQ(sk.rows.front().rating, 0.0);
  EXPECT_EQ(sk.rows.back().rating, 100.0);
  EXPECT_EQ(sk.rows[2].rating, 50.0);
}

TEST(MergeCategories, WildcardExcludesTextHeavyCategories) {
  const std::vector<DatasetManifest> ms{
      manifest("rsivl", {{"natural", 1}, {"advertisement", 2}, {"urban", 3}, {"visualization", 7}})};
  const auto sk = merge_categories(ms, find_grouping("RSIVL"));
  ASSERT_EQ(sk.rows.size(), 2u);
  for (const auto& r : sk.rows) EXPECT_NE(r.category, "advertisement");
  EXPECT_EQ(merge_categories(ms, find_grouping("RSIVL"), {}).rows.size(), 4u);
}

TEST(MergeCategories, SingleCategoryIsIdentitySelection) {
  const std::vector<DatasetManifest> ms{manifest("savoias", {{"art", 10}, {"scenes", 3}, {"art", 30}, {"art", 20}})};
  const auto sk = merge_categories(ms, find_grouping("Sav. Art"));
  ASSERT_EQ(sk.rows.size(), 3u);
  EXPECT_EQ(sk.rows[0].image_id, "savoias_0");
  EXPECT_EQ(sk.rows[1].image_id, "savoias_2");
  EXPECT_EQ(sk.rows[2].rating, 50.0);
}

TEST(MergeCategories, Errors) {
  const std::vector<DatasetManifest> ms{manifest("savoias", {{"art", 1}, {"art", 2}})};
  EXPECT_THROW(merge_categories(ms, find_grouping("Sav. Suprematism")), config_error);
  EXPECT_THROW(merge_categories(ms, find_grouping("VISC")), config_error);
  EXPECT_THROW(find_grouping("Nope"), config_error);
  Grouping empty{"empty", {{"savoias", {}}}};
  const std::vector<DatasetManifest> only_ads{manifest("savoias", {{"advertisement", 1}})};
  EXPECT_THROW(merge_categories(only_ads, empty), config_error);
}

TEST(JoinFeatures, FullCoverageAndIgnoredExtras) {
  const std::vector<DatasetManifest> ms{manifest("visc", {{"x", 1}, {"x", 2}, {"x", 3}})};
  const auto sk = merge_categories(ms, find_grouping("VISC"));
  std::vector<FeatureVector> fv;
  for (int i = 0; i < 3; ++i) fv.push_back(make_feature_vector("visc_" + std::to_string(i), 10 + i, i));
  fv.push_back(make_feature_vector("other_a", 1, 1));
  fv.push_back(make_feature_vector("other_b", 1, 1));
  const auto j = join_features(sk, fv);
  EXPECT_EQ(j.image_set.rows.size(), 3u);
  EXPECT_EQ(j.ignored_ids, (std::vector<std::string>{"other_a", "other_b"}));
  EXPECT_EQ(j.image_set.rows[1].features.num_seg, 11u);
  EXPECT_EQ(j.image_set.rows[2].rating, 100.0);

  fv.erase(fv.begin() + 1);
  try {
    join_features(sk, fv);
    FAIL();
  } catch (const missing_feature_error& e) {
    EXPECT_EQ(e.ids(), std::vector<std::string>{"visc_1"});
  }
}

TEST(LoadManifest, ParsesAndValidates) {
  std::istringstream ok(
      "# comment\nimage_id,image_path,category,raw_rating,rater_count\n"
      "a,img/a.png,Interior Design,0.5,12\nb,\"img/b,1.png\",art,0.25,\n");
  const auto m = load_manifest(ok, "savoias", "m.csv");
  ASSERT_EQ(m.rows.size(), 2u);
  EXPECT_EQ(m.rows[0].category, "interior_design");
  EXPECT_EQ(*m.rows[0].rater_count, 12);
  EXPECT_EQ(m.rows[1].image_path, "img/b,1.png");
  EXPECT_FALSE(m.rows[1].rater_count.has_value());

  const std::string header = "image_id,image_path,category,raw_rating,rater_count\n";
  for (const std::string body : {"a,p,art,x,\n", "a,p,art,1,\na,q,art,2,\n", "a,p,cats,1,\n", ",p,art,1,\n",
                                 "a,p,art,1,-3\n"}) {
    std::istringstream in(header + body);
    EXPECT_THROW(load_manifest(in, "savoias"), input_error) << body;
  }
  std::istringstream wrong("id,path\n");
  EXPECT_THROW(load_manifest(wrong, "x"), input_error);
}
