// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

// Synthetic corpora and small helpers shared by the test binaries.

#pragma once

#include <unistd.h>

#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "morph/corpus.hpp"
#include "morph/random.hpp"
#include "morph/utf8.hpp"

namespace morph::testing {

struct TagSuffix {
  std::vector<std::string> tags;
  std::u32string suffix;
};

inline std::vector<TagSuffix> default_suffixes() {
  return {{{"V", "PRS", "1", "SG"}, U"o"},
          {{"V", "PST", "3", "PL"}, U"aron"},
          {{"V", "FUT", "2", "SG"}, U"ás"}};
}

// Random lemmas (length 4-8 over a small alphabet), each inflected with every
// suffix. Samples are shuffled; the first `train_size` go to train, the rest
// to dev.
inline LanguageSet suffix_language(const std::string& code,
                                   const std::string& family,
                                   std::uint64_t seed, std::size_t lemmas,
                                   std::size_t train_size,
                                   std::vector<TagSuffix> suffixes =
                                       default_suffixes(),
                                   std::u32string alphabet =
                                       U"abdeiklmnoprstu") {
  Rng rng(seed);
  std::set<std::u32string> words;
  while (words.size() < lemmas) {
    auto n = rng.uniform_int(4, 8);
    std::u32string w;
    for (std::int64_t i = 0; i < n; ++i) {
      w += alphabet[static_cast<std::size_t>(rng.uniform_int(
          0, static_cast<std::int64_t>(alphabet.size()) - 1))];
    }
    words.insert(w);
  }
  std::vector<InflectionSample> all;
  for (const auto& w : words) {
    for (const auto& ts : suffixes) {
      all.push_back({w, w + ts.suffix, ts.tags, code, family, Origin::kNatural});
    }
  }
  rng.shuffle(std::span(all));
  LanguageSet set;
  set.language = code;
  set.family = family;
  set.train.assign(all.begin(), all.begin() + static_cast<long>(train_size));
  set.dev.assign(all.begin() + static_cast<long>(train_size), all.end());
  return set;
}

// The toy language used by the convergence criterion: 200 lemmas x 3 tag
// sets, 480 train / 120 dev.
inline LanguageSet toy_language() {
  return suffix_language("toy", "Toy", 42, 200, 480);
}

// Three small languages in two families.
inline std::vector<LanguageSet> toy_family_corpus() {
  return {
      suffix_language("aaa", "Alpha", 11, 24, 56),
      suffix_language("aab", "Alpha", 12, 24, 56,
                      {{{"N", "PL"}, U"en"}, {{"N", "GEN"}, U"es"},
                       {{"N", "DAT"}, U"em"}}),
      suffix_language("bba", "Beta", 13, 24, 56,
                      {{{"V", "PRS", "1", "SG"}, U"u"},
                       {{"V", "PST"}, U"ta"},
                       {{"V", "IMP"}, U"ka"}},
                      U"aeiouklmnst"),
  };
}

// Stem-final vowel alternation plus suffixation, with one syncretic cell:
// L -> L+n (two tag sets), L -> L[..-1]+v+n for each v in `vowels`. These
// comparisons share list lengths per lemma, so they merge.
inline LanguageSet alternation_language(const std::string& code,
                                        std::uint64_t seed,
                                        std::size_t lemmas,
                                        std::u32string alphabet = U"ptkmnsaeio",
                                        std::u32string vowels = U"ui") {
  Rng rng(seed);
  std::set<std::u32string> words;
  while (words.size() < lemmas) {
    auto n = rng.uniform_int(3, 6);
    std::u32string w;
    for (std::int64_t i = 0; i < n; ++i) {
      w += alphabet[static_cast<std::size_t>(rng.uniform_int(
          0, static_cast<std::int64_t>(alphabet.size()) - 1))];
    }
    words.insert(w);
  }
  LanguageSet set;
  set.language = code;
  set.family = "Alt";
  auto add = [&](const std::u32string& l, std::u32string f,
                 std::vector<std::string> tags) {
    set.train.push_back({l, std::move(f), std::move(tags), code, "Alt",
                         Origin::kNatural});
  };
  for (const auto& w : words) {
    add(w, w + U"n", {"N", "PL"});
    add(w, w + U"n", {"N", "ACC", "PL"});
    for (std::size_t k = 0; k < vowels.size(); ++k) {
      add(w, w.substr(0, w.size() - 1) + vowels[k] + U"n",
          {"N", "PL", "V" + std::to_string(k)});
    }
  }
  rng.shuffle(std::span(set.train));
  return set;
}

// Writes `<code>.train`, `<code>.dev` and `families.tsv` into `dir`.
inline void write_corpus(const std::filesystem::path& dir,
                         const std::vector<LanguageSet>& sets) {
  std::string table;
  for (const auto& s : sets) {
    write_text_file(dir / (s.language + ".train"), serialize_unimorph(s.train));
    write_text_file(dir / (s.language + ".dev"), serialize_unimorph(s.dev));
    table += s.language + "\t" + s.family + "\n";
  }
  write_text_file(dir / "families.tsv", table);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& label) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("morph-" + label + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(++counter));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::u32string u32(const std::string& s) { return decode_utf8(s); }

}  // namespace morph::testing
