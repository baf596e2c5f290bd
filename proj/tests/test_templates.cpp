// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <set>

#include "generators.hpp"
#include "morph/errors.hpp"
#include "morph/templates.hpp"
#include "template_oracle.hpp"
#include "toy_corpus.hpp"

using namespace morph;
using morph::testing::oracle_backward;
using morph::testing::oracle_forward;
using morph::testing::SymbolList;
using morph::testing::to_oracle;
using morph::testing::u32;

namespace {

LanguageSet pairs_set(std::initializer_list<std::pair<std::u32string, std::u32string>> pairs,
                      std::vector<std::string> tags = {"N", "PL"}) {
  LanguageSet set;
  set.language = "xx";
  set.family = "Fam";
  for (const auto& [l, f] : pairs) {
    set.train.push_back({l, f, tags, "xx", "Fam", Origin::kNatural});
  }
  return set;
}

Comparison with_tags(Comparison c, std::vector<std::string> tags) {
  c.tags = std::move(tags);
  c.language = "xx";
  return c;
}

// The cat/cats pattern with every stem position open.
Comparison plural_template(std::size_t merges) {
  Comparison c;
  c.sim = parse_slots("....");
  c.diff1 = parse_slots("...");
  c.diff2 = parse_slots("...s");
  c.merge_count = merges;
  c.tags = {"N", "PL"};
  c.language = "xx";
  return c;
}

Comparison random_comparison(Rng& rng, std::size_t len) {
  static const std::u32string alphabet = U"ab.?\\";
  auto list = [&] {
    std::u32string out;
    for (std::size_t i = 0; i < len; ++i) {
      auto r = rng.uniform_int(0, 7);
      if (r == 0) {
        out.push_back(kQuerySlot);
      } else if (r <= 2) {
        out.push_back(kDotSlot);
      } else {
        out.push_back(alphabet[static_cast<std::size_t>(r - 3) % alphabet.size()]);
      }
    }
    return out;
  };
  Comparison c;
  c.sim = list();
  c.diff1 = list();
  c.diff2 = list();
  c.merge_count = static_cast<std::size_t>(rng.uniform_int(0, 9));
  c.tags = morph::testing::random_tags(rng);
  c.language = "xx";
  return c;
}

}  // namespace

TEST_CASE("compare_forward examples") {
  auto c = compare_forward(U"cat", U"cats");
  CHECK(to_oracle(c).sim == SymbolList{"c", "a", "t", "."});
  CHECK(to_oracle(c).diff1 == SymbolList{".", ".", "."});
  CHECK(to_oracle(c).diff2 == SymbolList{".", ".", ".", "s"});
  CHECK(c.merge_count == 0);

  c = compare_forward(U"abc", U"abc");
  CHECK(render_slots(c.sim) == "abc");
  CHECK(render_slots(c.diff1) == "...");
  CHECK(render_slots(c.diff2) == "...");

  c = compare_forward(U"vaguear", u32("vaguearás"));
  CHECK(render_slots(c.sim) == "vaguear..");
  CHECK(render_slots(c.diff1) == ".......");
  CHECK(render_slots(c.diff2) == ".......ás");

  CHECK_THROWS_AS(compare_forward(U"", U"a"), std::invalid_argument);
  CHECK_THROWS_AS(compare_backward(U"a", U""), std::invalid_argument);
}

TEST_CASE("compare_backward examples") {
  auto c = compare_backward(U"zab", U"ab");
  CHECK(render_slots(c.sim) == ".ab");
  CHECK(render_slots(c.diff1) == "z..");
  CHECK(render_slots(c.diff2) == "..");
  CHECK(compare_backward(U"abc", U"abc") == compare_forward(U"abc", U"abc"));
}

TEST_CASE("property: comparisons match the reference walk and mirror") {
  Rng rng(71);
  for (int trial = 0; trial < 2000; ++trial) {
    auto a = morph::testing::random_word(rng, 1, 7, U"abc");
    auto b = morph::testing::random_word(rng, 1, 7, U"abc");
    CHECK(to_oracle(compare_forward(a, b)) == oracle_forward(a, b));
    CHECK(to_oracle(compare_backward(a, b)) == oracle_backward(a, b));
    auto mirrored = compare_forward(std::u32string(a.rbegin(), a.rend()),
                                    std::u32string(b.rbegin(), b.rend()));
    std::reverse(mirrored.sim.begin(), mirrored.sim.end());
    std::reverse(mirrored.diff1.begin(), mirrored.diff1.end());
    std::reverse(mirrored.diff2.begin(), mirrored.diff2.end());
    CHECK(compare_backward(a, b) == mirrored);
  }
}

TEST_CASE("merge examples") {
  Comparison a;
  a.sim = parse_slots("cat.");
  Comparison b;
  b.sim = parse_slots("ca..");
  auto m = merge(a, b);
  REQUIRE(m);
  CHECK(render_slots(m->sim) == "ca?.");
  CHECK(m->merge_count == 1);

  b.sim = parse_slots("cab.");
  CHECK_FALSE(merge(a, b));
  b.sim = parse_slots("cat");
  CHECK_FALSE(merge(a, b));
}

TEST_CASE("self-merge adds a count and no '?'") {
  auto c = with_tags(compare_forward(U"kata", U"katas"), {"N", "PL"});
  c.merge_count = 3;
  auto m = merge(c, c);
  REQUIRE(m);
  CHECK(m->sim == c.sim);
  CHECK(m->diff1 == c.diff1);
  CHECK(m->diff2 == c.diff2);
  CHECK(m->merge_count == 7);
  CHECK(m->tags == c.tags);
}

TEST_CASE("merging a vowel alternation with plain suffixation") {
  auto a = with_tags(compare_forward(U"kata", U"katas"), {"N", "PL"});
  auto b = with_tags(compare_forward(U"kata", U"kitas"), {"N", "PL", "X"});
  auto m = merge(a, b);
  REQUIRE(m);
  CHECK(render_slots(m->sim) == "k?ta.");
  CHECK(render_slots(m->diff1) == ".?..");
  CHECK(render_slots(m->diff2) == ".?..s");
  CHECK(m->tags == std::vector<std::string>{"N", "PL"});

  auto c = compare_forward(U"kata", U"katan");
  auto d = compare_forward(U"kata", U"katun");
  m = merge(c, d);
  REQUIRE(m);
  CHECK(render_slots(m->sim) == "kat?.");
  CHECK(render_slots(m->diff1) == "...?");
  CHECK(render_slots(m->diff2) == "...?n");
}

TEST_CASE("property: merge is commutative on the lists") {
  Rng rng(83);
  int merged = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    auto len = static_cast<std::size_t>(rng.uniform_int(1, 4));
    auto a = random_comparison(rng, len);
    auto b = random_comparison(rng, len);
    auto ab = merge(a, b);
    auto ba = merge(b, a);
    REQUIRE(ab.has_value() == ba.has_value());
    if (!ab) continue;
    ++merged;
    CHECK(ab->sim == ba->sim);
    CHECK(ab->diff1 == ba->diff1);
    CHECK(ab->diff2 == ba->diff2);
    CHECK(ab->merge_count == ba->merge_count);
    std::set<std::string> ta(ab->tags.begin(), ab->tags.end());
    std::set<std::string> tb(ba->tags.begin(), ba->tags.end());
    CHECK(ta == tb);
  }
  CHECK(merged > 50);
}

TEST_CASE("induction on small record sets") {
  SUBCASE("distinct stems with the same suffix stay apart") {
    auto set = pairs_set({{U"cat", U"cats"}, {U"dog", U"dogs"}});
    auto t = induce_templates(set, AffixDirection::kSuffixing);
    CHECK(t.size() == 2);
    for (const auto& c : t) CHECK(c.merge_count == 0);
  }
  SUBCASE("one record") {
    auto t = induce_templates(pairs_set({{U"cat", U"cats"}}),
                              AffixDirection::kSuffixing);
    REQUIRE(t.size() == 1);
    CHECK(t[0].merge_count == 0);
    CHECK(t[0].tags == std::vector<std::string>{"N", "PL"});
  }
  SUBCASE("disjoint patterns") {
    auto set = pairs_set({{U"ab", U"abc"}, {U"xyzw", U"q"}, {U"mn", U"pq"}});
    CHECK(induce_templates(set, AffixDirection::kSuffixing).size() == 3);
  }
  SUBCASE("a '?' slot does not absorb a third vowel") {
    auto set = pairs_set({{U"kata", U"katas"}, {U"kata", U"kitas"},
                          {U"kata", U"kotas"}});
    auto t = induce_templates(set, AffixDirection::kSuffixing);
    REQUIRE(t.size() == 2);
    std::size_t merged = 0;
    for (const auto& tm : t) {
      if (tm.merge_count == 1) {
        ++merged;
        CHECK(render_slots(tm.diff2) == ".?..s");
      } else {
        CHECK(tm.merge_count == 0);
      }
    }
    CHECK(merged == 1);
  }
  SUBCASE("non-natural records are ignored") {
    auto set = pairs_set({{U"cat", U"cats"}});
    set.train.push_back({U"dog", U"dogs", {"N"}, "xx", "Fam", Origin::kCopyAug});
    CHECK(induce_templates(set, AffixDirection::kSuffixing).size() == 1);
  }
}

TEST_CASE("property: induced templates partition and rebuild their sources") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto set = morph::testing::alternation_language("alt", seed, 25);
    const bool backward = seed % 2 == 0;
    auto dir = backward ? AffixDirection::kPrefixing : AffixDirection::kSuffixing;
    auto traced = induce_templates_traced(set, dir);
    std::vector<std::size_t> all;
    for (const auto& t : traced) {
      CHECK(t.comparison.merge_count + 1 == t.sources.size());
      all.insert(all.end(), t.sources.begin(), t.sources.end());
      bool has_query = false;
      for (auto* list : {&t.comparison.sim, &t.comparison.diff1, &t.comparison.diff2}) {
        has_query |= list->find(kQuerySlot) != std::u32string::npos;
      }
      if (has_query) CHECK(t.comparison.merge_count >= 1);
      for (std::size_t i : t.sources) {
        const auto& s = set.train[i];
        auto own = backward ? compare_backward(s.lemma, s.form)
                            : compare_forward(s.lemma, s.form);
        auto rebuilt = morph::testing::refill(t.comparison, own, backward);
        CHECK(rebuilt.first == s.lemma);
        CHECK(rebuilt.second == s.form);
      }
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(set.train.size());
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = i;
    CHECK(all == expected);
    // Merging ran to a fixed point.
    for (std::size_t i = 0; i < traced.size(); ++i) {
      for (std::size_t j = i + 1; j < traced.size(); ++j) {
        CHECK_FALSE(merge(traced[i].comparison, traced[j].comparison));
      }
    }
    CHECK(induce_templates(set, dir) == induce_templates(set, dir));
  }
}

TEST_CASE("detect_direction") {
  CHECK(detect_direction(pairs_set({{U"vaguear", u32("vaguearás")},
                                    {U"delirar", U"deliraren"}})) ==
        AffixDirection::kSuffixing);
  CHECK(detect_direction(pairs_set({{U"ab", U"zab"}, {U"cd", U"zcd"}})) ==
        AffixDirection::kPrefixing);
  CHECK(detect_direction(pairs_set({{U"abc", U"abc"}})) ==
        AffixDirection::kSuffixing);
  CHECK_THROWS_AS(detect_direction(LanguageSet{}), std::invalid_argument);
  CHECK(direction_name(AffixDirection::kPrefixing) == "prefixing");
}

TEST_CASE("generate fills the plural template") {
  std::vector<Comparison> templates{plural_template(2)};
  UnigramDistribution dist("xx", {{U'd', 1}, {U'o', 1}, {U'g', 1}});
  auto target = pairs_set({{U"dog", U"dogs"}});
  GenerateOptions opts;
  opts.cap = 50;
  auto out = generate(templates, dist, target, opts);
  CHECK(out.size() == 26);  // 27 three-letter words minus the natural "dog"
  for (const auto& s : out) {
    CHECK(s.lemma.size() == 3);
    CHECK(s.form == s.lemma + U"s");
    CHECK(s.tags == std::vector<std::string>{"N", "PL"});
    CHECK(s.origin == Origin::kTemplateAug);
    CHECK(s.language == "xx");
    CHECK(s.family == "Fam");
    CHECK(s.lemma != U"dog");
  }
}

TEST_CASE("generate respects min_merges, cap and the seed") {
  std::vector<Comparison> templates{plural_template(1), plural_template(3)};
  templates[1].diff2 = parse_slots("...n");
  UnigramDistribution dist("xx", {{U'a', 1}, {U'b', 1}, {U'c', 1}, {U'd', 1}});
  auto target = pairs_set({{U"abc", U"abcs"}});
  GenerateOptions opts;
  opts.min_merges = 4;
  CHECK(generate(templates, dist, target, opts).empty());
  opts.min_merges = 2;
  opts.cap = 10;
  opts.seed = 9;
  auto out = generate(templates, dist, target, opts);
  CHECK(out.size() == 10);
  for (const auto& s : out) CHECK(s.form.back() == U'n');
  CHECK(generate(templates, dist, target, opts) == out);
  opts.cap = 0;
  CHECK(generate(templates, dist, target, opts).empty());
}

TEST_CASE("generate with '?' slots keeps or drops in both words together") {
  auto set = pairs_set({{U"kata", U"katas"}, {U"kata", U"kitas"},
                        {U"kata", U"kotas"}});
  auto t = induce_templates(set, AffixDirection::kSuffixing);
  UnigramDistribution dist("xx", {{U'a', 1}, {U'e', 1}, {U'u', 1}});
  GenerateOptions opts;
  opts.cap = 30;
  opts.min_merges = 1;
  auto out = generate(t, dist, set, opts);
  CHECK_FALSE(out.empty());
  for (const auto& s : out) {
    // Template diff1 ".?.." and diff2 ".?..s": the form is the lemma plus s.
    CHECK(s.form == s.lemma + U"s");
    CHECK((s.lemma.size() == 3 || s.lemma.size() == 4));
  }
}

TEST_CASE("property: generated samples are new and bounded") {
  Rng rng(97);
  for (int trial = 0; trial < 20; ++trial) {
    auto set = morph::testing::alternation_language("alt", rng.next(), 15);
    auto t = induce_templates(set, detect_direction(set));
    auto dist = unigram_distribution(set.train);
    GenerateOptions opts;
    opts.cap = static_cast<std::size_t>(rng.uniform_int(0, 200));
    opts.min_merges = static_cast<std::size_t>(rng.uniform_int(1, 3));
    opts.seed = rng.next();
    auto out = generate(t, dist, set, opts);
    CHECK(out.size() <= opts.cap);
    CHECK(generate(t, dist, set, opts) == out);
    std::set<std::tuple<std::u32string, std::u32string, std::vector<std::string>>> seen;
    for (const auto& s : set.train) seen.emplace(s.lemma, s.form, s.tags);
    for (const auto& s : out) {
      CHECK(seen.emplace(s.lemma, s.form, s.tags).second);
      CHECK_FALSE(s.lemma.empty());
      CHECK_FALSE(s.form.empty());
    }
  }
}

TEST_CASE("family template pooling") {
  auto a = morph::testing::alternation_language("aaa", 1, 8);
  auto b = morph::testing::alternation_language("bbb", 2, 6);
  auto c = morph::testing::alternation_language("ccc", 3, 5);
  std::vector<LanguageSet> family{a, b, c};
  auto nb = induce_templates(b, detect_direction(b)).size();
  auto nc = induce_templates(c, detect_direction(c)).size();
  auto pool = family_templates(family, a);
  CHECK(pool.size() == nb + nc);
  for (const auto& t : pool) CHECK(t.language != "aaa");

  std::vector<LanguageSet> pair{a, b};
  CHECK(family_templates(pair, a) == induce_templates(b, detect_direction(b)));
  std::vector<LanguageSet> alone{a};
  CHECK(family_templates(alone, a).empty());
}

TEST_CASE("template text format") {
  auto c = with_tags(compare_forward(U"cat", U"cats"), {"N", "PL"});
  CHECK(serialize_templates(std::span(&c, 1)) == "cat.\n...\n...s\n0\nN;PL\n");
  CHECK(parse_slots("a\\.b?") ==
        std::u32string{U'a', U'.', U'b', kQuerySlot});
  CHECK_THROWS_AS(parse_slots("ab\\"), ParseError);
  CHECK_THROWS_AS(parse_templates("a\nb\nc\n", "xx"), ParseError);
  CHECK_THROWS_AS(parse_templates("a\nb\nc\nx\nN\n", "xx"), ParseError);
  CHECK_THROWS_AS(parse_templates("a\nb\nc\n1\nN;;P\n", "xx"), ParseError);
  auto back = parse_templates("a\nb\nc\n1\n\n", "xx");
  REQUIRE(back.size() == 1);
  CHECK(back[0].tags.empty());
}

TEST_CASE("property: template serialization round trip") {
  Rng rng(113);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Comparison> ts;
    auto n = rng.uniform_int(0, 6);
    for (std::int64_t i = 0; i < n; ++i) {
      ts.push_back(random_comparison(rng, static_cast<std::size_t>(rng.uniform_int(1, 6))));
    }
    auto text = serialize_templates(ts);
    CHECK(parse_templates(text, "xx") == ts);
  }
}
