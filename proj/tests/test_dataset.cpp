#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "fairaudit/dataset.hpp"
#include "fairaudit/errors.hpp"
#include "test_helpers.hpp"

using namespace fairaudit;

namespace {

FeatureSchema raw_schema() {
  FeatureSchema s;
  s.columns.push_back(ColumnSpec{"age", ColumnKind::kContinuous,
                                 std::make_pair(0.0, 100.0), {}, std::nullopt});
  s.columns.push_back(ColumnSpec{"color", ColumnKind::kCategorical, std::nullopt,
                                 {"RED", "BL,UE"}, std::nullopt});
  s.columns.push_back(ColumnSpec{"z", ColumnKind::kSensitive, std::nullopt,
                                 {"A", "B"}, std::nullopt});
  s.columns.push_back(ColumnSpec{"y", ColumnKind::kBinaryOutcome, std::nullopt,
                                 {}, std::nullopt});
  return s;
}

Dataset raw_dataset() {
  Dataset d;
  d.schema = raw_schema();
  d.provenance = "ingested";
  Column age, color, z, y;
  age.num = {50.0, 150.0, 0.0, 30.5};
  age.missing = {0, 0, 1, 0};
  color.cat = {"RED", "BL,UE", "RED", "GREEN"};
  color.missing = {0, 0, 0, 0};
  z.cat = {"A", "B", "A", "B"};
  z.missing = {0, 0, 0, 0};
  y.num = {1.0, 0.0, 0.0, 1.0};
  y.missing = {0, 0, 0, 0};
  d.columns = {age, color, z, y};
  return d;
}

}  // namespace

TEST_CASE("csv round-trips values, quoting and missing cells") {
  std::string dir = testing::temp_dir("csv_roundtrip");
  Dataset d = raw_dataset();
  std::string path = dir + "/data.csv";
  write_csv(d, path);

  Dataset back = load_csv(path, d.schema);
  CHECK(back.rows() == 4);
  CHECK(back.provenance == "ingested");
  const Column& age = back.column("age");
  CHECK(age.num[0] == 50.0);
  CHECK(age.num[1] == 150.0);
  CHECK(age.missing[2] == 1);
  CHECK(age.num[3] == 30.5);
  const Column& color = back.column("color");
  CHECK(color.cat[1] == "BL,UE");  // comma survives the quoting
  CHECK(color.cat[3] == "GREEN");
  CHECK(back.labels() == std::vector<int>{1, 0, 0, 1});
}

TEST_CASE("csv header matching is order-insensitive") {
  std::string dir = testing::temp_dir("csv_order");
  std::string path = dir + "/data.csv";
  {
    std::ofstream out(path);
    out << "y,z,age,color\n";
    out << "1,A,25,RED\n";
    out << "0,B,75,\"BL,UE\"\n";
  }
  Dataset d = load_csv(path, raw_schema());
  CHECK(d.rows() == 2);
  CHECK(d.column("age").num[0] == 25.0);
  CHECK(d.column("age").num[1] == 75.0);
  CHECK(d.column("color").cat[1] == "BL,UE");
  CHECK(d.column("z").cat[0] == "A");
  CHECK(d.labels() == std::vector<int>{1, 0});
}

TEST_CASE("csv schema mismatches and malformed rows are data errors") {
  std::string dir = testing::temp_dir("csv_errors");
  FeatureSchema schema = raw_schema();

  {
    std::ofstream out(dir + "/missing_col.csv");
    out << "age,color,z\n25,RED,A\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(dir + "/missing_col.csv", schema),
                       doctest::Contains("missing columns: y"), DataError);

  {
    std::ofstream out(dir + "/unknown_col.csv");
    out << "age,color,z,y,extra\n25,RED,A,1,9\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(dir + "/unknown_col.csv", schema),
                       doctest::Contains("unknown columns: extra"), DataError);

  {
    std::ofstream out(dir + "/short_row.csv");
    out << "age,color,z,y\n25,RED,A\n";
  }
  CHECK_THROWS_AS(load_csv(dir + "/short_row.csv", schema), DataError);

  {
    std::ofstream out(dir + "/bad_outcome.csv");
    out << "age,color,z,y\n25,RED,A,2\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(dir + "/bad_outcome.csv", schema),
                       doctest::Contains("non-binary"), DataError);

  {
    std::ofstream out(dir + "/header_only.csv");
    out << "age,color,z,y\n";
  }
  CHECK_THROWS_AS(load_csv(dir + "/header_only.csv", schema), DataError);

  CHECK_THROWS_AS(load_csv(dir + "/nope.csv", schema), DataError);
}

TEST_CASE("missing outcome cells are rejected at label extraction") {
  Dataset d = raw_dataset();
  d.column("y").missing[1] = 1;
  CHECK_THROWS_AS(d.labels(), DataError);
}

TEST_CASE("preprocessing nulls out-of-range, scales, imputes and remaps") {
  Dataset d = raw_dataset();
  auto [out, report] = preprocess(d);

  CHECK(out.preprocessed);
  const Column& age = out.column("age");
  // in-range values 50 and 30.5 scale to /100; mean of those imputes the rest
  double mean = (0.5 + 0.305) / 2.0;
  CHECK(age.num[0] == doctest::Approx(0.5));
  CHECK(age.num[3] == doctest::Approx(0.305));
  CHECK(age.num[1] == doctest::Approx(mean));  // 150 was out of range
  CHECK(age.num[2] == doctest::Approx(mean));  // was missing
  CHECK(age.missing[1] == 0);
  CHECK(age.missing[2] == 0);

  const ColumnReport& cr = report.columns.at("age");
  CHECK(cr.out_of_range_nulled == 1);
  CHECK(cr.imputed == 2);
  REQUIRE(cr.imputation_mean.has_value());
  CHECK(*cr.imputation_mean == doctest::Approx(mean));

  const ColumnSpec& age_spec = out.schema.column("age");
  REQUIRE(age_spec.plausible_range.has_value());
  CHECK(age_spec.plausible_range->first == 0.0);
  CHECK(age_spec.plausible_range->second == 1.0);
  REQUIRE(age_spec.source_range.has_value());
  CHECK(age_spec.source_range->first == 0.0);
  CHECK(age_spec.source_range->second == 100.0);

  // unknown categorical code folds into the reserved category
  const Column& color = out.column("color");
  CHECK(color.cat[3] == kMissingCategory);
  CHECK(report.columns.at("color").remapped == 1);
  const auto& cats = out.schema.column("color").categories;
  CHECK(std::find(cats.begin(), cats.end(), kMissingCategory) != cats.end());
}

TEST_CASE("held-out transform uses training-fold means") {
  Dataset train = raw_dataset();
  Preprocessor pp;
  CHECK_FALSE(pp.fitted());
  CHECK_THROWS_AS(pp.transform(train), DataError);
  pp.fit(train);
  CHECK(pp.fitted());

  Dataset test = raw_dataset();
  test.column("age").num = {10.0, 200.0, 90.0, 40.0};
  test.column("age").missing = {0, 0, 0, 1};
  auto [out, report] = pp.transform(test);
  double train_mean = (0.5 + 0.305) / 2.0;
  CHECK(out.column("age").num[0] == doctest::Approx(0.10));
  CHECK(out.column("age").num[1] == doctest::Approx(train_mean));  // out of range
  CHECK(out.column("age").num[2] == doctest::Approx(0.90));
  CHECK(out.column("age").num[3] == doctest::Approx(train_mean));  // missing
  CHECK(report.columns.at("age").out_of_range_nulled == 1);
  CHECK(report.columns.at("age").imputed == 2);
}

TEST_CASE("continuous column with no in-range value cannot be imputed") {
  Dataset d = raw_dataset();
  d.column("age").num = {150.0, 160.0, 170.0, 180.0};
  d.column("age").missing = {0, 0, 0, 0};
  Preprocessor pp;
  CHECK_THROWS_AS(pp.fit(d), DataError);
}

TEST_CASE("creatinine rule flags absolute and relative rises") {
  CHECK(aki_label(1.0, 1.3) == 1);   // +0.3 absolute
  CHECK(aki_label(0.4, 0.61) == 1);  // >= 1.5x relative
  CHECK(aki_label(1.0, 1.25) == 0);
  CHECK(aki_label(2.0, 2.25) == 0);  // +0.25 and only 1.125x
  CHECK(aki_label(2.0, 3.0) == 1);
  CHECK_THROWS_AS(aki_label(0.0, 1.0), DataError);
  CHECK_THROWS_AS(aki_label(1.0, -0.2), DataError);
}

TEST_CASE("split is a seeded disjoint partition") {
  const int n = 200;
  std::vector<double> x1(n), x2(n, 0.5);
  std::vector<std::string> z(n);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    x1[static_cast<size_t>(i)] = i / static_cast<double>(n);
    z[static_cast<size_t>(i)] = i % 2 ? "A" : "B";
    y[static_cast<size_t>(i)] = i % 3 == 0 ? 1 : 0;
  }
  Dataset d = testing::tiny_dataset(x1, x2, z, y);

  SplitResult s1 = split(d, 0.3, 42);
  SplitResult s2 = split(d, 0.3, 42);
  SplitResult s3 = split(d, 0.3, 43);

  CHECK(s1.test.rows() == 60);
  CHECK(s1.train.rows() == 140);
  CHECK(s1.train.column("x1").num == s2.train.column("x1").num);
  CHECK(s1.test.column("x1").num == s2.test.column("x1").num);
  CHECK(s1.test.column("x1").num != s3.test.column("x1").num);

  // every source row lands on exactly one side
  std::multiset<double> seen(s1.train.column("x1").num.begin(), s1.train.column("x1").num.end());
  seen.insert(s1.test.column("x1").num.begin(), s1.test.column("x1").num.end());
  std::multiset<double> want(x1.begin(), x1.end());
  CHECK(seen == want);

  // original row order preserved within each side
  CHECK(std::is_sorted(s1.train.column("x1").num.begin(), s1.train.column("x1").num.end()));
  CHECK(std::is_sorted(s1.test.column("x1").num.begin(), s1.test.column("x1").num.end()));

  CHECK_THROWS_AS(split(d, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split(d, 1.0, 1), ConfigError);
}

TEST_CASE("contrast restriction, indicator and swap") {
  Dataset d = testing::tiny_dataset({0.1, 0.2, 0.3, 0.4}, {0.5, 0.5, 0.5, 0.5},
                                    {"A", "B", "A", "B"}, {1, 0, 1, 0});
  SensitiveContrast contrast{"z", "A", "B"};

  Dataset r = restrict_to_contrast(d, contrast);
  CHECK(r.rows() == 4);

  std::vector<int> ind = contrast_indicator(d, contrast);
  CHECK(ind == std::vector<int>{1, 0, 1, 0});

  Dataset swapped = swap_contrast(d, contrast);
  CHECK(swapped.column("z").cat == std::vector<std::string>{"B", "A", "B", "A"});
  Dataset twice = swap_contrast(swapped, contrast);
  CHECK(twice.column("z").cat == d.column("z").cat);
  CHECK(twice.column("x1").num == d.column("x1").num);

  // rows outside the contrast are dropped by restriction, rejected by the indicator
  Dataset mixed = d;
  mixed.column("z").cat[2] = "C";
  Dataset restricted = restrict_to_contrast(mixed, contrast);
  CHECK(restricted.rows() == 3);
  CHECK_THROWS_AS(contrast_indicator(mixed, contrast), DataError);

  SensitiveContrast wrong{"x1", "A", "B"};
  CHECK_THROWS_AS(restrict_to_contrast(d, wrong), ConfigError);
}

TEST_CASE("schema json round-trip and validation") {
  FeatureSchema s = raw_schema();
  s.columns[0].source_range = std::make_pair(0.0, 100.0);
  json j = s.to_json();
  FeatureSchema back = FeatureSchema::from_json(j);
  CHECK(back.columns.size() == s.columns.size());
  CHECK(back.column("age").kind == ColumnKind::kContinuous);
  REQUIRE(back.column("age").plausible_range.has_value());
  CHECK(back.column("age").plausible_range->second == 100.0);
  REQUIRE(back.column("age").source_range.has_value());
  CHECK(back.column("age").source_range->second == 100.0);
  CHECK(back.column("color").categories == std::vector<std::string>{"RED", "BL,UE"});
  CHECK(back.to_json() == j);

  FeatureSchema two_outcomes = raw_schema();
  two_outcomes.columns.push_back(ColumnSpec{"y2", ColumnKind::kBinaryOutcome,
                                            std::nullopt, {}, std::nullopt});
  CHECK_THROWS_AS(two_outcomes.validate(), ConfigError);

  FeatureSchema no_range = raw_schema();
  no_range.columns[0].plausible_range = std::nullopt;
  CHECK_THROWS_AS(no_range.validate(), ConfigError);

  FeatureSchema dup = raw_schema();
  dup.columns.push_back(dup.columns[1]);
  CHECK_THROWS_AS(dup.validate(), ConfigError);

  FeatureSchema no_sensitive = raw_schema();
  no_sensitive.columns.erase(no_sensitive.columns.begin() + 2);
  CHECK_THROWS_AS(no_sensitive.validate(), ConfigError);
}
