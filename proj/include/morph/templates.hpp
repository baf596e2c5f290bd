// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morph/corpus.hpp"

namespace morph {

// Placeholder slots in comparison lists. They sit outside the Unicode range
// so they never collide with a literal '.' or '?' in a word.
inline constexpr char32_t kDotSlot = 0x110000;
inline constexpr char32_t kQuerySlot = 0x110001;

inline bool is_placeholder(char32_t c) {
  return c == kDotSlot || c == kQuerySlot;
}

// Similarity/difference triple produced by comparing two words.
struct Comparison {
  std::u32string sim;
  std::u32string diff1;
  std::u32string diff2;
  std::size_t merge_count = 0;
  std::vector<std::string> tags;
  std::string language;

  bool operator==(const Comparison&) const = default;
};

enum class AffixDirection { kSuffixing, kPrefixing };

std::string_view direction_name(AffixDirection direction);

// Suffixing when the mean common-prefix length of natural (lemma, form) pairs
// is at least the mean common-suffix length.
AffixDirection detect_direction(const LanguageSet& set);

// Position-by-position alignment from the left. Throws std::invalid_argument
// on an empty word.
Comparison compare_forward(std::u32string_view w1, std::u32string_view w2);

// Same alignment anchored at the right end of both words.
Comparison compare_backward(std::u32string_view w1, std::u32string_view w2);

// Merges two comparisons whose lists agree everywhere except where one side
// holds '.'; those positions become '?'. Empty when not mergeable.
std::optional<Comparison> merge(const Comparison& a, const Comparison& b);

struct InducedTemplate {
  Comparison comparison;
  std::vector<std::size_t> sources;  // indices of the records merged into it
};

// One comparison per natural record, then repeated merging in canonical order
// (by rendered sim, diff1, diff2) until no pair is mergeable.
std::vector<InducedTemplate> induce_templates_traced(const LanguageSet& set,
                                                     AffixDirection direction);
std::vector<Comparison> induce_templates(const LanguageSet& set,
                                         AffixDirection direction);

// Pools the templates of every family member other than `target`.
std::vector<Comparison> family_templates(
    std::span<const LanguageSet> family_sets, const LanguageSet& target);

struct GenerateOptions {
  std::size_t cap = 10000;
  std::size_t min_merges = 2;
  std::uint64_t seed = 0;
  // Each '?' slot is filled with probability keep_prob, dropped otherwise.
  double keep_prob = 0.5;
};

// Fills template placeholders from `dist` to create new (lemma, form) pairs
// for `target`. Never returns a duplicate or a copy of a target sample.
std::vector<InflectionSample> generate(std::span<const Comparison> templates,
                                       const UnigramDistribution& dist,
                                       const LanguageSet& target,
                                       const GenerateOptions& options);

// Renders a list with '.' and '?' for placeholders; literal '.', '?' and '\'
// characters are backslash-escaped.
std::string render_slots(std::u32string_view slots);
std::u32string parse_slots(std::string_view text);

// Five lines per comparison (sim, diff1, diff2, merge count, tags), blank
// line separated.
std::string serialize_templates(std::span<const Comparison> templates);
std::vector<Comparison> parse_templates(std::string_view text,
                                        const std::string& language);

}  // namespace morph
