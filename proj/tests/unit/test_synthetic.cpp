#include <doctest.h>

#include "cmnt/synthetic.hpp"

#include <algorithm>
#include <set>

using namespace cmnt;

TEST_CASE("synthetic corpus structure") {
  SyntheticOptions o;
  o.pairs = 300;
  o.seed = 9;
  const auto c = generate_synthetic(o);
  REQUIRE(c.source.size() == 300);
  REQUIRE(c.target.size() == 300);
  int cued = 0;
  for (std::size_t i = 0; i < c.source.size(); ++i) {
    const auto& src = c.source[i];
    const auto& tgt = c.target[i];
    Words translated;
    std::set<std::string> senses;
    int ambiguous = 0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      const auto& w = src[j];
      if (w[0] == 'm') {
        // a cue always sits right before an ambiguous word and names the sense
        REQUIRE(j + 1 < src.size());
        CHECK(src[j + 1].rfind("amb", 0) == 0);
        ++cued;
        continue;
      }
      if (w[0] == 's') {
        translated.push_back("T" + w.substr(1));
      } else {
        ++ambiguous;
        translated.push_back("W" + w.substr(3));
      }
    }
    CHECK(ambiguous == o.ambiguous_per_sentence);
    REQUIRE(translated.size() == tgt.size());
    std::reverse(translated.begin(), translated.end());
    for (std::size_t j = 0; j < tgt.size(); ++j) {
      if (tgt[j][0] == 'T') {
        CHECK(tgt[j] == translated[j]);
      } else {
        const auto v = tgt[j].find('v');
        CHECK(tgt[j].substr(0, v) == translated[j]);
        senses.insert(tgt[j].substr(v + 1));
      }
    }
    CHECK(senses.size() == 1);
    for (std::size_t j = 0; j + 1 < src.size(); ++j)
      if (src[j][0] == 'm') CHECK("m" + *senses.begin() == src[j]);
  }
  const double rate = cued / (300.0 * o.ambiguous_per_sentence);
  CHECK(rate > 0.10);
  CHECK(rate < 0.20);
}

TEST_CASE("synthetic corpus is seeded") {
  SyntheticOptions o;
  o.pairs = 50;
  const auto a = generate_synthetic(o), b = generate_synthetic(o);
  CHECK(a.source == b.source);
  CHECK(a.target == b.target);
  o.seed = 2;
  CHECK(generate_synthetic(o).source != a.source);
  o.ambiguous_per_sentence = 30;
  CHECK_THROWS(generate_synthetic(o));
}
