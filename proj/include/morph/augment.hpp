// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "morph/corpus.hpp"

namespace morph {

struct AugmentConfig {
  std::size_t copy_cap = 10000;
  std::size_t stem_cap = 10000;
  double stem_replace_prob = 0.5;
  std::size_t min_stem_len = 3;
  std::uint64_t seed = 0;

  // Throws ConfigError when a field is out of range.
  void validate() const;
};

// Identity samples `w -> w` tagged [FAM=<family>, LANG=<code>, COPY] over the
// distinct lemmas and forms of the training split. When the inventory exceeds
// `copy_cap`, a seeded subset is kept.
std::vector<InflectionSample> copy_augment(const LanguageSet& set,
                                           const AugmentConfig& cfg);

struct StemSpan {
  std::size_t lemma_start = 0;
  std::size_t form_start = 0;
  std::size_t length = 0;

  bool operator==(const StemSpan&) const = default;
};

// Longest common substring; ties go to the leftmost start in `lemma`, then in
// `form`. Empty when the strings share no character.
std::optional<StemSpan> longest_common_substring(std::u32string_view lemma,
                                                 std::u32string_view form);

// Hallucinated samples: inside the shared stem of a natural (lemma, form)
// pair, each character is replaced with probability `stem_replace_prob` by a
// draw from `dist`, identically in lemma and form.
std::vector<InflectionSample> stem_augment(const LanguageSet& set,
                                           const UnigramDistribution& dist,
                                           const AugmentConfig& cfg);

}  // namespace morph
