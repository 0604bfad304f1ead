#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <set>
#include <string>
#include <vector>

#include "fairaudit/errors.hpp"
#include "fairaudit/jsonio.hpp"
#include "fairaudit/rng.hpp"
#include "test_helpers.hpp"

using namespace fairaudit;

TEST_CASE("derive_seed is pure and index-sensitive") {
  CHECK(derive_seed(42, 7) == derive_seed(42, 7));
  CHECK(derive_seed(42, 7) != derive_seed(42, 8));
  CHECK(derive_seed(42, 7) != derive_seed(43, 7));

  CHECK(derive_seed(42, "train") == derive_seed(42, "train"));
  CHECK(derive_seed(42, "train") != derive_seed(42, "train_wo"));
  CHECK(derive_seed(42, "train", 3) != derive_seed(42, "train", 4));
  CHECK(derive_seed(42, "train", 0) == derive_seed(42, "train"));

  // replicate r's seed never depends on how many replicates exist
  std::vector<uint64_t> first;
  for (int r = 0; r < 5; ++r) first.push_back(derive_seed(99, "resample", r));
  for (int r = 0; r < 5; ++r) CHECK(first[static_cast<size_t>(r)] == derive_seed(99, "resample", r));

  // no collisions over a modest index range
  std::set<uint64_t> seen;
  for (uint64_t i = 0; i < 2000; ++i) seen.insert(derive_seed(1, i));
  CHECK(seen.size() == 2000);
}

TEST_CASE("rng determinism and distribution sanity") {
  Rng a(123), b(123), c(124);
  bool all_equal = true;
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t va = a.next_u64();
    if (va != b.next_u64()) all_equal = false;
    if (va != c.next_u64()) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);

  Rng r(5);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));

  std::vector<int> counts(7, 0);
  for (int i = 0; i < 14000; ++i) {
    uint64_t v = r.uniform_int(7);
    REQUIRE(v < 7);
    counts[static_cast<size_t>(v)]++;
  }
  for (int k = 0; k < 7; ++k) CHECK(counts[static_cast<size_t>(k)] > 1600);

  double mean = 0.0, sq = 0.0;
  const int m = 40000;
  for (int i = 0; i < m; ++i) {
    double g = r.normal(10.0, 2.0);
    mean += g;
    sq += g * g;
  }
  mean /= m;
  double var = sq / m - mean * mean;
  CHECK(mean == doctest::Approx(10.0).epsilon(0.01));
  CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("permutation is a seeded permutation") {
  Rng r1(77), r2(77), r3(78);
  std::vector<int> p1 = r1.permutation(50);
  std::vector<int> p2 = r2.permutation(50);
  std::vector<int> p3 = r3.permutation(50);
  CHECK(p1 == p2);
  CHECK(p1 != p3);
  std::set<int> s(p1.begin(), p1.end());
  CHECK(s.size() == 50);
  CHECK(*s.begin() == 0);
  CHECK(*s.rbegin() == 49);
}

TEST_CASE("canon6 rounds to six significant digits") {
  CHECK(canon6(1.0 / 3.0) == std::strtod("0.333333", nullptr));
  CHECK(canon6(123456789.0) == std::strtod("1.23457e+08", nullptr));
  CHECK(canon6(0.0) == 0.0);
  CHECK(canon6(-2.718281828) == std::strtod("-2.71828", nullptr));
  // idempotent
  for (double v : {0.1234567890123, 9876.54321, 1e-12, -3.333333333}) {
    CHECK(canon6(canon6(v)) == canon6(v));
  }
}

TEST_CASE("canonicalize rounds floats only, preserving integers") {
  json j;
  j["f"] = 1.0 / 3.0;
  j["i"] = 42;
  j["seed"] = 9007199254740993ULL;  // not representable as double
  j["nested"] = json::array({1, 2.7182818284, json{{"k", 0.1111111111}}});
  j["s"] = "text";
  j["b"] = true;
  json c = canonicalize(j);
  CHECK(c["f"].get<double>() == std::strtod("0.333333", nullptr));
  CHECK(c["i"].is_number_integer());
  CHECK(c["i"].get<int>() == 42);
  CHECK(c["seed"].get<uint64_t>() == 9007199254740993ULL);
  CHECK(c["nested"][0].is_number_integer());
  CHECK(c["nested"][1].get<double>() == std::strtod("2.71828", nullptr));
  CHECK(c["nested"][2]["k"].get<double>() == std::strtod("0.111111", nullptr));
  CHECK(c["s"] == "text");
  CHECK(c["b"] == true);
  // stable under repetition
  CHECK(canonicalize(c) == c);
}

TEST_CASE("format_exact round-trips doubles bit-for-bit") {
  Rng r(2026);
  for (int i = 0; i < 500; ++i) {
    double scale = std::pow(10.0, static_cast<double>(r.uniform_int(13)) - 6.0);
    double v = (r.uniform() - 0.5) * scale;
    std::string s = format_exact(v);
    double back = std::strtod(s.c_str(), nullptr);
    CHECK(back == v);
  }
  CHECK(std::strtod(format_exact(0.1).c_str(), nullptr) == 0.1);
}

TEST_CASE("text and json file helpers") {
  std::string dir = testing::temp_dir("jsonio");
  std::string path = dir + "/doc.json";
  write_text_file(path, "{\"a\": 1}\n", "test");
  CHECK(read_text_file(path, "test") == "{\"a\": 1}\n");
  json j = load_json_file(path, "test");
  CHECK(j["a"] == 1);

  CHECK_THROWS_AS(load_json_file(dir + "/absent.json", "test"), DataError);
  write_text_file(dir + "/bad.json", "{not json", "test");
  CHECK_THROWS_AS(load_json_file(dir + "/bad.json", "test"), DataError);
}

TEST_CASE("parallel_for fills slots deterministically across thread counts") {
  auto run = [](const char* threads) {
    if (threads) setenv("FAIRAUDIT_THREADS", threads, 1);
    else unsetenv("FAIRAUDIT_THREADS");
    std::vector<double> out(200, 0.0);
    parallel_for(200, [&](int i) {
      Rng r(derive_seed(11, static_cast<uint64_t>(i)));
      out[static_cast<size_t>(i)] = r.uniform();
    });
    unsetenv("FAIRAUDIT_THREADS");
    return out;
  };
  std::vector<double> serial = run("1");
  std::vector<double> parallel = run("4");
  CHECK(serial == parallel);

  parallel_for(0, [](int) { throw DataError("test", "never runs"); });
}

TEST_CASE("parallel_for rethrows the first failing index") {
  for (const char* threads : {"1", "3"}) {
    setenv("FAIRAUDIT_THREADS", threads, 1);
    std::string msg;
    try {
      parallel_for(64, [](int i) {
        if (i == 11 || i == 37) throw DataError("test", "boom at " + std::to_string(i));
      });
    } catch (const DataError& e) {
      msg = e.what();
    }
    unsetenv("FAIRAUDIT_THREADS");
    CHECK(msg == "boom at 11");
  }
}
