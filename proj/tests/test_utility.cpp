#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fairaudit/design.hpp"
#include "fairaudit/errors.hpp"
#include "fairaudit/learners.hpp"
#include "fairaudit/utility_card.hpp"
#include "test_helpers.hpp"

using namespace fairaudit;

namespace {

size_t count_substr(const std::string& text, const std::string& needle) {
  size_t count = 0;
  for (size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size()))
    ++count;
  return count;
}

// Records whose gain is a fixed function of the cohort columns; the tree
// input y/weights fields are carried but irrelevant to the fit.
UtilityRecords step_records(int n, double cut, uint64_t seed) {
  std::vector<double> x1, x2;
  std::vector<std::string> z;
  std::vector<int> y;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    x1.push_back((i % 100) * 0.01);
    x2.push_back(rng.uniform());
    z.push_back(i % 2 ? "A" : "B");
    y.push_back(i % 2);
  }
  Dataset d = testing::tiny_dataset(x1, x2, z, y);
  UtilityRecords rec;
  rec.design = build_design(d, DesignOptions{});
  rec.y = y;
  for (int i = 0; i < n; ++i) rec.iu_diff.push_back(x1[static_cast<size_t>(i)] < cut ? -1.0 : 1.0);
  rec.iu_full.assign(static_cast<size_t>(n), 0.0);
  rec.iu_basic.assign(static_cast<size_t>(n), 0.0);
  return rec;
}

int feature_index(const DesignMatrix& dm, const std::string& name) {
  for (size_t j = 0; j < dm.features.size(); ++j)
    if (dm.features[j].name == name) return static_cast<int>(j);
  return -1;
}

}  // namespace

TEST_CASE("per-record utility values") {
  UtilityWeights w{25.0, 1.0};
  CHECK(individual_utility(1, 1.0, w) == 25.0);
  CHECK(individual_utility(0, 0.0, w) == 1.0);
  CHECK(individual_utility(1, 0.336, w) == doctest::Approx(8.4).epsilon(1e-12));
  CHECK(individual_utility(1, 0.0, w) == 0.0);
  CHECK(individual_utility(0, 1.0, w) == 0.0);
  UtilityWeights even{1.0, 1.0};
  CHECK(individual_utility(0, 0.25, even) == 0.75);

  CHECK_THROWS_AS(individual_utility(2, 0.5, w), ConfigError);
  CHECK_THROWS_AS(individual_utility(1, 1.5, w), ConfigError);
  CHECK_THROWS_AS(individual_utility(1, -0.1, w), ConfigError);
  CHECK_THROWS_AS((UtilityWeights{0.0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((UtilityWeights{25.0, -1.0}.validate()), ConfigError);
}

TEST_CASE("utility weights parse from object or pair") {
  UtilityWeights a = UtilityWeights::from_json(json{{"w1", 25.0}, {"w2", 1.0}});
  CHECK(a.w1 == 25.0);
  CHECK(a.w2 == 1.0);
  UtilityWeights b = UtilityWeights::from_json(json::array({4.0, 2.0}));
  CHECK(b.w1 == 4.0);
  CHECK(b.w2 == 2.0);
  CHECK(a.to_json() == json{{"w1", 25.0}, {"w2", 1.0}});
  CHECK_THROWS_AS(UtilityWeights::from_json(json::array({1.0})), ConfigError);
  CHECK_THROWS_AS(UtilityWeights::from_json(json{{"w1", 25.0}, {"w2", 0.0}}), ConfigError);
}

TEST_CASE("utility table compares full and basic models per record") {
  Dataset cohort = testing::random_cohort(150, 71);
  SplitResult sp = split(cohort, 0.4, 2);
  LearnerSpec spec;
  TrainedModel full = train(spec, sp.train, true);
  TrainOptions basic_opts;
  basic_opts.include_sensitive = false;
  basic_opts.restrict_columns = {"x1", "x2"};
  TrainedModel basic = train(spec, sp.train, basic_opts);

  UtilityWeights w{25.0, 1.0};
  UtilityRecords rec = utility_table(full, basic, sp.test, w, {"x1", "x2"});
  int n = sp.test.rows();
  CHECK(rec.size() == n);
  CHECK(rec.design.n == n);
  CHECK(static_cast<int>(rec.y.size()) == n);

  PredictionVector pf = predict_proba(full, sp.test);
  PredictionVector pb = predict_proba(basic, sp.test);
  for (int i = 0; i < n; ++i) {
    size_t s = static_cast<size_t>(i);
    CHECK(rec.iu_full[s] == individual_utility(rec.y[s], pf.p_hat[s], w));
    CHECK(rec.iu_basic[s] == individual_utility(rec.y[s], pb.p_hat[s], w));
    CHECK(rec.iu_diff[s] == rec.iu_full[s] - rec.iu_basic[s]);
  }

  // declared basic feature set must match what the model was trained on
  CHECK_THROWS_WITH_AS(utility_table(full, basic, sp.test, w, {"x1"}),
                       doctest::Contains("feature set mismatch"), ConfigError);

  LearnerSpec tree_spec;
  tree_spec.family = LearnerFamily::kTree;
  TrainedModel other = train(tree_spec, sp.train, basic_opts);
  CHECK_THROWS_WITH_AS(utility_table(full, other, sp.test, w),
                       doctest::Contains("share one family"), ConfigError);

  Dataset empty = testing::tiny_dataset({}, {}, {}, {});
  CHECK_THROWS_AS(utility_table(full, basic, empty, w), DataError);
}

TEST_CASE("tree recovers a step in the gain surface") {
  UtilityRecords rec = step_records(200, 0.595, 3);
  UtilityTree tree = fit_utility_tree(rec, 20, 10, 2);
  REQUIRE(tree.nodes.size() == 3);
  const UtilityNode& root = tree.nodes[0];
  CHECK(root.feature == feature_index(rec.design, "x1"));
  CHECK(root.threshold == doctest::Approx(0.595).epsilon(1e-9));
  CHECK(tree.nodes[1].feature == -1);
  CHECK(tree.nodes[2].feature == -1);
  CHECK(tree.nodes[1].value == -1.0);
  CHECK(tree.nodes[2].value == 1.0);
  CHECK(tree.nodes[1].sse == 0.0);
  CHECK(tree.alpha == 0.0);
  CHECK(tree.alpha_rank_truncated == false);
  REQUIRE(tree.alpha_path.size() == 2);
  CHECK(tree.alpha_path[0] == 0.0);
  CHECK(tree.alpha_path[1] > 0.0);
}

TEST_CASE("constant gain yields a single leaf") {
  UtilityRecords rec = step_records(80, 0.595, 4);
  std::fill(rec.iu_diff.begin(), rec.iu_diff.end(), 0.5);
  UtilityTree tree = fit_utility_tree(rec, 20, 10, 5);
  CHECK(tree.nodes.size() == 1);
  CHECK(tree.leaf_count() == 1);
  CHECK(tree.nodes[0].value == 0.5);
  CHECK(tree.alpha_path == std::vector<double>{0.0});
  CHECK(tree.alpha_rank_truncated == true);  // no inner alphas to rank

  GuideDocument doc = render_guide(tree, {});
  CHECK(doc.text.find("mean utility gain") != std::string::npos);
  CHECK(doc.text.find("n=80") != std::string::npos);
}

TEST_CASE("node bookkeeping is conserved under defaults") {
  // smooth gain with noise so the tree grows several levels
  std::vector<double> x1, x2;
  std::vector<std::string> z;
  std::vector<int> y;
  Rng rng(9);
  int n = 600;
  for (int i = 0; i < n; ++i) {
    x1.push_back(rng.uniform());
    x2.push_back(rng.uniform());
    z.push_back(rng.bernoulli(0.5) ? "A" : "B");
    y.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  Dataset d = testing::tiny_dataset(x1, x2, z, y);
  UtilityRecords rec;
  rec.design = build_design(d, DesignOptions{});
  rec.y = y;
  for (int i = 0; i < n; ++i) {
    size_t s = static_cast<size_t>(i);
    rec.iu_diff.push_back(4.0 * x1[s] * x1[s] - 2.0 * x2[s] + 0.3 * rng.normal(0.0, 1.0));
  }
  rec.iu_full.assign(static_cast<size_t>(n), 0.0);
  rec.iu_basic.assign(static_cast<size_t>(n), 0.0);

  UtilityTree tree = fit_utility_tree(rec);  // min_split 50, min_leaf 50, rank 5
  CHECK(tree.n_records == n);
  REQUIRE(tree.nodes.size() >= 3);

  int leaf_n_total = 0;
  double weighted_value = 0.0;
  for (const auto& node : tree.nodes) {
    CHECK(node.n >= 50);
    if (node.feature >= 0) {
      const UtilityNode& l = tree.nodes[static_cast<size_t>(node.left)];
      const UtilityNode& r = tree.nodes[static_cast<size_t>(node.right)];
      CHECK(l.n + r.n == node.n);
    } else {
      leaf_n_total += node.n;
      weighted_value += node.value * node.n;
    }
  }
  CHECK(leaf_n_total == n);
  CHECK(weighted_value / n == doctest::Approx(tree.nodes[0].value).epsilon(1e-9));

  CHECK(std::is_sorted(tree.alpha_path.begin(), tree.alpha_path.end()));
  CHECK(tree.alpha_path.front() == 0.0);

  // leaf counts grow as the chosen alpha walks down the path
  int prev_leaves = 0;
  for (int rank = 1; rank <= static_cast<int>(tree.alpha_path.size()); ++rank) {
    UtilityTree pruned = fit_utility_tree(rec, 50, 50, rank);
    CHECK(pruned.alpha_path == tree.alpha_path);
    CHECK(pruned.alpha == tree.alpha_path[tree.alpha_path.size() - static_cast<size_t>(rank)]);
    CHECK(pruned.leaf_count() >= prev_leaves);
    prev_leaves = pruned.leaf_count();
    if (rank == 1) {
      CHECK(pruned.leaf_count() == 1);
      CHECK(pruned.nodes.size() == 1);
    }
  }

  UtilityTree truncated = fit_utility_tree(rec, 50, 50, 999);
  CHECK(truncated.alpha_rank_truncated == true);
  CHECK(truncated.leaf_count() == 1);

  // serialized form mirrors the in-memory tree
  json j = tree.to_json();
  CHECK(j["n_records"] == n);
  CHECK(j["nodes"].size() == tree.nodes.size());
  CHECK(j["alpha_path"].size() == tree.alpha_path.size());
}

TEST_CASE("tree fitting rejects bad shapes") {
  UtilityRecords rec = step_records(30, 0.595, 5);
  CHECK_THROWS_AS(fit_utility_tree(rec), DataError);  // below default min_split
  CHECK_THROWS_AS(fit_utility_tree(rec, 1, 1, 5), ConfigError);
  CHECK_THROWS_AS(fit_utility_tree(rec, 10, 0, 5), ConfigError);
  CHECK_THROWS_AS(fit_utility_tree(rec, 10, 5, 0), ConfigError);
  rec.iu_diff.pop_back();
  CHECK_THROWS_AS(fit_utility_tree(rec, 10, 5, 2), ConfigError);  // design row mismatch
}

TEST_CASE("guide renders categorical splits through the dictionary") {
  std::vector<double> x1, x2;
  std::vector<std::string> z;
  std::vector<int> y;
  Rng rng(13);
  int n = 60;
  for (int i = 0; i < n; ++i) {
    x1.push_back(0.5);
    x2.push_back(rng.uniform());
    z.push_back(i % 2 ? "A" : "B");
    y.push_back(i % 2);
  }
  Dataset d = testing::tiny_dataset(x1, x2, z, y);
  UtilityRecords rec;
  rec.design = build_design(d, DesignOptions{});
  rec.y = y;
  for (int i = 0; i < n; ++i) rec.iu_diff.push_back(z[static_cast<size_t>(i)] == "A" ? 1.0 : -1.0);
  rec.iu_full.assign(static_cast<size_t>(n), 0.0);
  rec.iu_basic.assign(static_cast<size_t>(n), 0.0);

  UtilityTree tree = fit_utility_tree(rec, 10, 5, 2);
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].feature == feature_index(rec.design, "z=A"));

  LabelDictionary dict{{"z", {{"A", "group alpha"}, {"B", "group beta"}}}};
  GuideDocument doc = render_guide(tree, dict);
  CHECK(doc.text.find("z = group alpha") != std::string::npos);
  CHECK(doc.text.find("z != group alpha") != std::string::npos);
  CHECK(doc.text.find("utility gain") != std::string::npos);

  CHECK_THROWS_WITH_AS(render_guide(tree, {}),
                       doctest::Contains("dictionary lacks a label for"), ConfigError);

  // DOT carries one declaration per node and two labeled edges per split
  CHECK(count_substr(doc.dot, "[label=\"") == tree.nodes.size() + 2);
  CHECK(count_substr(doc.dot, "label=\"no\"") == 1);
  CHECK(count_substr(doc.dot, "label=\"yes\"") == 1);
  CHECK(doc.dot.rfind("digraph utility_guide {", 0) == 0);
}

TEST_CASE("continuous split thresholds render in source units") {
  FeatureSchema schema;
  schema.columns.push_back(ColumnSpec{"x1", ColumnKind::kContinuous,
                                      std::make_pair(0.0, 1.0), {},
                                      std::make_pair(0.0, 100.0)});
  schema.columns.push_back(ColumnSpec{"z", ColumnKind::kSensitive, std::nullopt,
                                      {"A", "B"}, std::nullopt});
  schema.columns.push_back(ColumnSpec{"y", ColumnKind::kBinaryOutcome, std::nullopt,
                                      {}, std::nullopt});
  Dataset d;
  d.schema = schema;
  d.provenance = "synthetic";
  d.preprocessed = true;
  int n = 40;
  Column cx, cz, cy;
  for (int i = 0; i < n; ++i) {
    cx.num.push_back(i < 20 ? 0.2 : 1.0);
    cx.missing.push_back(0);
    cz.cat.push_back(i % 2 ? "A" : "B");
    cz.missing.push_back(0);
    cy.num.push_back(i % 2);
    cy.missing.push_back(0);
  }
  d.columns = {cx, cz, cy};

  UtilityRecords rec;
  rec.design = build_design(d, DesignOptions{});
  rec.y.assign(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) rec.iu_diff.push_back(i < 20 ? -1.0 : 1.0);
  rec.iu_full.assign(static_cast<size_t>(n), 0.0);
  rec.iu_basic.assign(static_cast<size_t>(n), 0.0);

  UtilityTree tree = fit_utility_tree(rec, 10, 5, 2);
  REQUIRE(tree.nodes.size() == 3);
  CHECK(tree.nodes[0].threshold == doctest::Approx(0.6).epsilon(1e-12));

  GuideDocument doc = render_guide(tree, {});
  std::string expected = "x1 >= " + format_g6(tree.nodes[0].threshold * 100.0);
  CHECK(doc.text.find(expected) != std::string::npos);
  CHECK(doc.text.find("x1 < " + format_g6(tree.nodes[0].threshold * 100.0)) !=
        std::string::npos);
}
