// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "morph/random.hpp"

namespace morph {

enum class Origin { kNatural, kCopyAug, kStemAug, kTemplateAug };

std::string_view origin_name(Origin origin);
Origin parse_origin(std::string_view name);

// One UniMorph record: lemma, inflected form and morphosyntactic tags, plus
// the language it belongs to and where it came from.
struct InflectionSample {
  std::u32string lemma;
  std::u32string form;
  std::vector<std::string> tags;
  std::string language;
  std::string family;
  Origin origin = Origin::kNatural;

  bool operator==(const InflectionSample&) const = default;
};

// Languages with fewer training samples than this are low resource.
inline constexpr std::size_t kLowResourceThreshold = 1300;

struct LanguageSet {
  std::string language;
  std::string family;
  std::vector<InflectionSample> train;
  std::vector<InflectionSample> dev;

  bool low_resource() const { return train.size() < kLowResourceThreshold; }
};

// Character frequencies of one language, normalized to probabilities.
class UnigramDistribution {
 public:
  UnigramDistribution() = default;
  UnigramDistribution(std::string language,
                      const std::map<char32_t, std::size_t>& counts);

  const std::string& language() const { return language_; }
  const std::map<char32_t, double>& probs() const { return probs_; }
  bool empty() const { return probs_.empty(); }

  // Inverse-CDF draw over the support in code point order.
  char32_t sample(Rng& rng) const;

 private:
  std::string language_;
  std::map<char32_t, double> probs_;
  std::vector<char32_t> symbols_;
  std::vector<double> cumulative_;
};

// Parses tab-separated `lemma TAB form TAB tag;tag;...` records. Blank lines
// are skipped; CRLF line endings are accepted.
std::vector<InflectionSample> parse_unimorph(std::string_view text,
                                             const std::string& language,
                                             const std::string& family);

// Writes samples back in UniMorph format. With `origin_column` a fourth
// column carries the origin marker.
std::string serialize_unimorph(std::span<const InflectionSample> samples,
                               bool origin_column = false);

// Pools lemma and form characters of `samples` (which must all share one
// language) into a distribution. Throws std::invalid_argument when empty.
UnigramDistribution unigram_distribution(
    std::span<const InflectionSample> samples);

// Language code -> family metadata, in file order.
using FamilyTable = std::vector<std::pair<std::string, std::string>>;

FamilyTable parse_family_table(std::string_view text);

struct FamilyGroup {
  std::string family;
  std::vector<std::size_t> members;  // indices into the input sets
};

// Groups language sets by family, preserving first-appearance order.
std::vector<FamilyGroup> family_index(std::span<const LanguageSet> sets);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Reads `<dir>/<code>.train` and, when present, `<dir>/<code>.dev`.
LanguageSet load_language_set(const std::filesystem::path& dir,
                              const std::string& code,
                              const std::string& family);

}  // namespace morph
