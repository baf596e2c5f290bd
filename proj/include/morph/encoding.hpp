// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morph/corpus.hpp"

namespace morph {

using SymbolId = int;

// Reserved ids, always the first five entries of every vocabulary.
inline constexpr SymbolId kSos = 0;
inline constexpr SymbolId kEos = 1;
inline constexpr SymbolId kSep = 2;
inline constexpr SymbolId kPad = 3;
inline constexpr SymbolId kUnk = 4;
inline constexpr SymbolId kNumReserved = 5;

inline constexpr std::string_view kCopyTag = "COPY";

// "FAM=<family>" and "LANG=<code>" for the sample's non-empty identity
// fields, in that order.
std::vector<std::string> identity_tags(const InflectionSample& sample);
std::string family_tag(std::string_view family);
std::string language_tag(std::string_view language);

// Shared symbol inventory for the encoder input and the decoder output.
// Characters and tags live in separate namespaces, so a tag "V" and a
// character 'V' get distinct ids.
class Vocabulary {
 public:
  enum class Kind { kReserved, kChar, kTag };

  struct Symbol {
    Kind kind = Kind::kReserved;
    char32_t ch = 0;   // kChar
    std::string text;  // kReserved and kTag; UTF-8 of `ch` for kChar

    bool operator==(const Symbol&) const = default;
  };

  Vocabulary();

  // Reserved symbols, then characters by code point, then tags in byte-wise
  // lexicographic order. Identity tags of every sample are included.
  static Vocabulary build(std::span<const InflectionSample> samples);

  // Plain text, one symbol per line, line number (from 0) = id. Each line is
  // `<kind>TAB<symbol>` with kind one of R, C, T.
  std::string save() const;
  static Vocabulary load(std::string_view text);

  std::size_t size() const { return symbols_.size(); }
  const Symbol& symbol(SymbolId id) const;
  bool contains(char32_t ch) const { return chars_.count(ch) != 0; }
  bool contains_tag(std::string_view tag) const;

  // Out-of-vocabulary lookups return kUnk.
  SymbolId char_id(char32_t ch) const;
  SymbolId tag_id(std::string_view tag) const;

  // FNV-1a of the saved form; checkpoints record it.
  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary& other) const {
    return symbols_ == other.symbols_;
  }

 private:
  void add(Symbol symbol);

  std::vector<Symbol> symbols_;
  std::map<char32_t, SymbolId> chars_;
  std::map<std::string, SymbolId, std::less<>> tags_;
};

struct EncodedPair {
  std::vector<SymbolId> source;
  std::vector<SymbolId> target;
};

// SOS, lemma characters, SEP, identity tags, sample tags, EOS. Identity tags
// are not repeated when the tag list already starts with them (copy samples).
std::vector<SymbolId> encode_source(const InflectionSample& sample,
                                    const Vocabulary& vocab);

// SOS, characters, EOS.
std::vector<SymbolId> encode_target(std::u32string_view form,
                                    const Vocabulary& vocab);

// Inverse of encode_target: drops a leading SOS and stops at the first EOS.
// Non-character symbols become U+FFFD. Throws std::out_of_range for ids
// outside the vocabulary.
std::u32string decode_output(std::span<const SymbolId> ids,
                             const Vocabulary& vocab);

EncodedPair encode_pair(const InflectionSample& sample,
                        const Vocabulary& vocab);

std::vector<EncodedPair> encode_all(std::span<const InflectionSample> samples,
                                    const Vocabulary& vocab);

}  // namespace morph
