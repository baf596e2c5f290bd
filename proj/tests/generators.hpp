// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

// Hand-rolled random generators for property tests.

#pragma once

#include <string>
#include <vector>

#include "morph/corpus.hpp"
#include "morph/random.hpp"

namespace morph::testing {

// Mixes ASCII, Latin-1, a three-byte and a four-byte code point.
inline const std::u32string& mixed_alphabet() {
  static const std::u32string a = U"abcdeíaßzÁ€\U0001F600";
  return a;
}

inline std::u32string random_word(Rng& rng, std::size_t min_len,
                                   std::size_t max_len,
                                   const std::u32string& alphabet =
                                       mixed_alphabet()) {
  auto n = rng.uniform_int(static_cast<std::int64_t>(min_len),
                           static_cast<std::int64_t>(max_len));
  std::u32string w;
  for (std::int64_t i = 0; i < n; ++i) {
    w += alphabet[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
  }
  return w;
}

inline std::vector<std::string> random_tags(Rng& rng) {
  static const std::vector<std::string> pool{
      "V", "N", "ADJ", "PL", "SG", "1", "2", "3", "FUT", "PST", "IND",
      "COND", "V.PTCP", "NOM(ACC)", "ESS"};
  auto n = rng.uniform_int(1, 5);
  std::vector<std::string> tags;
  for (std::int64_t i = 0; i < n; ++i) {
    tags.push_back(pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))]);
  }
  return tags;
}

inline std::vector<InflectionSample> random_samples(
    Rng& rng, std::size_t n, const std::string& language = "xx",
    const std::string& family = "Fam") {
  std::vector<InflectionSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({random_word(rng, 1, 9), random_word(rng, 1, 12),
                   random_tags(rng), language, family, Origin::kNatural});
  }
  return out;
}

// Every word over `alphabet` with length in [1, max_len].
inline std::vector<std::u32string> all_words(const std::u32string& alphabet,
                                             std::size_t max_len,
                                             bool include_empty = false) {
  std::vector<std::u32string> out;
  if (include_empty) out.emplace_back();
  std::vector<std::u32string> layer{U""};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::u32string> next;
    for (const auto& w : layer) {
      for (char32_t c : alphabet) next.push_back(w + c);
    }
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

}  // namespace morph::testing
