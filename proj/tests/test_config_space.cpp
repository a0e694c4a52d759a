// Copyright 2026 The peftsearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "doctest.h"
#include "peftsearch/config_space.hpp"
#include "peftsearch/errors.hpp"
#include "peftsearch/io.hpp"
#include "peftsearch/rng.hpp"

using namespace peftsearch;

namespace {

Configuration table2(const SearchSpaceSpec& s) { return make_config(s, {3, 4, 8, 9, 10}, 12, 96, 1); }

}  // namespace

TEST_CASE("size grid of the 768-wide model") {
  const std::vector<std::int64_t> want{0, 1, 3, 6, 12, 24, 48, 96, 192, 384, 768};
  CHECK(default_size_grid(768) == want);
  CHECK(bert_base_space().size_grid == want);
  CHECK(default_size_grid(1024).size() == 11);
}

TEST_CASE("cardinality") {
  const auto start = std::chrono::steady_clock::now();
  CHECK(cardinality(bert_base_space()) == 5'451'776ULL);
  CHECK(cardinality(roberta_large_space()) == 22'330'474'496ULL);
  const SearchSpaceSpec tiny{1, 1, {0, 1}, 10};
  CHECK(cardinality(tiny) == 16);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::milliseconds(1));
}

TEST_CASE("spec validation") {
  CHECK_NOTHROW(bert_base_space().validate());
  CHECK_THROWS_AS((SearchSpaceSpec{0, 768, default_size_grid(768), 1}.validate()), InvalidSpaceError);
  CHECK_THROWS_AS((SearchSpaceSpec{2, 4, {1, 2, 4}, 1}.validate()), InvalidSpaceError);
  CHECK_THROWS_AS((SearchSpaceSpec{2, 4, {0, 2, 2, 4}, 1}.validate()), InvalidSpaceError);
  CHECK_THROWS_AS((SearchSpaceSpec{2, 4, {0, 3, 2, 4}, 1}.validate()), InvalidSpaceError);
  CHECK_THROWS_AS((SearchSpaceSpec{2, 4, {0, 2}, 1}.validate()), InvalidSpaceError);
  CHECK_THROWS_AS((SearchSpaceSpec{2, 4, {0, 2, 4}, 0}.validate()), InvalidSpaceError);
}

TEST_CASE("parameter count of the reported configuration") {
  const auto s = bert_base_space();
  const auto c = table2(s);
  CHECK(c.active_layers() == 5);
  CHECK(param_count(s, c) == 837'120);
  char shown[16];
  std::snprintf(shown, sizeof shown, "%.2f%%", 100.0 * param_fraction(s, c));
  CHECK(std::string(shown) == "0.76%");
  CHECK(param_fraction(s, c) == doctest::Approx(837120.0 / 109482240.0).epsilon(1e-15));
}

TEST_CASE("parameter count edge cases") {
  const auto s = bert_base_space();
  CHECK(param_count(s, empty_config(s)) == 0);
  CHECK(param_fraction(s, empty_config(s)) == 0.0);
  CHECK(param_count(s, make_config(s, {1}, 768, 0, 0)) == 1'179'648);
  CHECK(param_count(s, full_config(s)) == 42'467'328);
  CHECK(param_fraction(s, full_config(s)) == doctest::Approx(0.3879).epsilon(1e-4));
  Configuration bad = table2(s);
  bad.d_sa = 13;
  CHECK_THROWS_AS(param_count(s, bad), InvalidConfigurationError);
  bad = table2(s);
  bad.layer_mask.pop_back();
  CHECK_THROWS_AS(validate(s, bad), InvalidConfigurationError);
  CHECK_THROWS_AS(make_config(s, {0}, 0, 0, 0), InvalidConfigurationError);
  CHECK_THROWS_AS(make_config(s, {13}, 0, 0, 0), InvalidConfigurationError);
}

TEST_CASE("encoding examples") {
  const auto s = bert_base_space();
  CHECK(encode(s, empty_config(s)).coords == std::vector<double>(15, 0.0));
  CHECK(encode(s, full_config(s)).coords == std::vector<double>(15, 1.0));
  const auto e = encode(s, table2(s));
  REQUIRE(e.coords.size() == 15);
  for (int i = 0; i < 12; ++i) {
    const bool on = i == 2 || i == 3 || i == 7 || i == 8 || i == 9;
    CHECK(e.coords[static_cast<std::size_t>(i)] == (on ? 1.0 : 0.0));
  }
  CHECK(e.coords[12] == doctest::Approx(0.4));
  CHECK(e.coords[13] == doctest::Approx(0.7));
  CHECK(e.coords[14] == doctest::Approx(0.1));
}

TEST_CASE("decode rejects off-grid coordinates") {
  const auto s = bert_base_space();
  auto e = encode(s, table2(s));
  e.coords[12] += 5e-7;
  CHECK(decode(s, e) == table2(s));
  e.coords[12] += 1e-3;
  CHECK_THROWS_AS(decode(s, e), EncodingError);
  e = encode(s, table2(s));
  e.coords[0] = 0.5;
  CHECK_THROWS_AS(decode(s, e), EncodingError);
  e.coords.pop_back();
  CHECK_THROWS_AS(decode(s, e), EncodingError);
}

TEST_CASE("decode inverts encode") {
  const auto s = bert_base_space();
  for (const auto& c : random_sample(s, 11, 2000)) {
    const auto e = encode(s, c);
    for (double v : e.coords) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(decode(s, e) == c);
  }
}

TEST_CASE("neighbor counts") {
  const auto s = bert_base_space();
  const auto interior = make_config(s, {1, 5}, 12, 96, 1);
  CHECK(neighbors(s, interior).size() == 18);
  CHECK(neighbors(s, empty_config(s)).size() == 15);
  CHECK(neighbors(s, full_config(s)).size() == 15);
}

TEST_CASE("neighbors are distinct, valid, exclude self and are symmetric") {
  const auto s = bert_base_space();
  for (const auto& c : random_sample(s, 3, 200)) {
    const auto ns = neighbors(s, c);
    const std::set<Configuration> uniq(ns.begin(), ns.end());
    CHECK(uniq.size() == ns.size());
    CHECK(uniq.count(c) == 0);
    for (const auto& n : ns) {
      CHECK_NOTHROW(validate(s, n));
      const auto back = neighbors(s, n);
      CHECK(std::find(back.begin(), back.end(), c) != back.end());
    }
  }
}

TEST_CASE("parameter count is monotone and bounded") {
  const auto s = bert_base_space();
  const double max_fraction = param_fraction(s, full_config(s));
  for (const auto& c : random_sample(s, 5, 500)) {
    const auto pc = param_count(s, c);
    const double f = param_fraction(s, c);
    CHECK((f >= 0.0 && f <= max_fraction));
    for (const auto& n : neighbors(s, c)) {
      const bool grows = n.active_layers() > c.active_layers() || n.d_sa > c.d_sa ||
                         n.d_pa > c.d_pa || n.l_pt > c.l_pt;
      if (grows) CHECK(param_count(s, n) >= pc);
    }
  }
}

TEST_CASE("random_sample") {
  const auto s = bert_base_space();
  CHECK(random_sample(s, 1, 0).empty());
  CHECK(random_sample(s, 42, 50) == random_sample(s, 42, 50));
  CHECK(random_sample(s, 42, 50) != random_sample(s, 43, 50));
  const auto big = random_sample(s, 9, 10'000);
  double mean = 0.0;
  for (const auto& c : big) mean += c.active_layers();
  mean /= static_cast<double>(big.size());
  CHECK(std::abs(mean - 6.0) < 0.2);
  std::vector<int> level_hits(11, 0);
  for (const auto& c : big) ++level_hits[*grid_index(s, c.d_pa)];
  for (int h : level_hits) CHECK(std::abs(h - 10000.0 / 11.0) < 4.0 * std::sqrt(10000.0 / 11.0));
}

TEST_CASE("dense index round trip") {
  const SearchSpaceSpec tiny{2, 4, {0, 2, 4}, 100};
  std::set<Configuration> all;
  for (std::uint64_t i = 0; i < cardinality(tiny); ++i) {
    const auto c = config_at(tiny, i);
    CHECK(config_index(tiny, c) == i);
    all.insert(c);
  }
  CHECK(all.size() == 108);
  const auto s = bert_base_space();
  for (const auto& c : random_sample(s, 17, 300)) CHECK(config_at(s, config_index(s, c)) == c);
  CHECK_THROWS(config_at(s, cardinality(s)));
}

TEST_CASE("text form") {
  const auto s = bert_base_space();
  CHECK(to_text(table2(s)) == R"({"layers":[3,4,8,9,10],"d_sa":12,"d_pa":96,"l_pt":1})");
  CHECK(config_from_text(s, to_text(table2(s))) == table2(s));
  CHECK(to_text(empty_config(s)) == R"({"layers":[],"d_sa":0,"d_pa":0,"l_pt":0})");
  CHECK_THROWS_AS(config_from_text(s, R"({"layers":[4,3],"d_sa":0,"d_pa":0,"l_pt":0})"),
                  InvalidConfigurationError);
  CHECK_THROWS_AS(config_from_text(s, R"({"layers":[3,3],"d_sa":0,"d_pa":0,"l_pt":0})"),
                  InvalidConfigurationError);
  CHECK_THROWS_AS(config_from_text(s, R"({"layers":[3],"d_sa":5,"d_pa":0,"l_pt":0})"),
                  InvalidConfigurationError);
  CHECK_THROWS_AS(config_from_text(s, R"({"layers":[3],"d_sa":0,"d_pa":0})"),
                  InvalidConfigurationError);
  CHECK_THROWS_AS(config_from_text(s, "not json"), InvalidConfigurationError);
  for (const auto& c : random_sample(s, 8, 200)) CHECK(config_from_text(s, to_text(c)) == c);
}

TEST_CASE("space file round trip") {
  const auto s = roberta_large_space();
  CHECK(space_from_json(space_to_json(s)) == s);
  Json j = space_to_json(bert_base_space());
  j.erase("size_grid");
  CHECK(space_from_json(j) == bert_base_space());
}

TEST_CASE("double formatting is exact") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK_THROWS_AS(format_double(std::nan("")), NumericalError);
}
