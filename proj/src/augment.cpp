// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/augment.hpp"

#include <set>
#include <stdexcept>

#include "morph/encoding.hpp"
#include "morph/errors.hpp"

namespace morph {

void AugmentConfig::validate() const {
  if (!(stem_replace_prob > 0.0 && stem_replace_prob <= 1.0)) {
    throw ConfigError("stem_replace_prob must be in (0, 1]");
  }
  if (min_stem_len < 1) throw ConfigError("min_stem_len must be >= 1");
}

std::vector<InflectionSample> copy_augment(const LanguageSet& set,
                                           const AugmentConfig& cfg) {
  cfg.validate();
  if (set.train.empty()) {
    throw std::invalid_argument("copy augmentation needs training samples");
  }
  std::vector<std::u32string> inventory;
  std::set<std::u32string> seen;
  for (const auto& s : set.train) {
    for (const auto* w : {&s.lemma, &s.form}) {
      if (seen.insert(*w).second) inventory.push_back(*w);
    }
  }
  if (inventory.size() > cfg.copy_cap) {
    Rng rng(derive_seed(cfg.seed, "copy:" + set.language));
    rng.shuffle(std::span(inventory));
    inventory.resize(cfg.copy_cap);
  }
  std::vector<InflectionSample> out;
  out.reserve(inventory.size());
  for (auto& w : inventory) {
    InflectionSample s;
    s.lemma = w;
    s.form = std::move(w);
    s.tags = {family_tag(set.family), language_tag(set.language),
              std::string(kCopyTag)};
    s.language = set.language;
    s.family = set.family;
    s.origin = Origin::kCopyAug;
    out.push_back(std::move(s));
  }
  return out;
}

std::optional<StemSpan> longest_common_substring(std::u32string_view lemma,
                                                 std::u32string_view form) {
  // run[j + 1] = length of the common suffix of lemma[..i] and form[..j].
  std::vector<std::size_t> prev(form.size() + 1, 0);
  std::vector<std::size_t> run(form.size() + 1, 0);
  StemSpan best;
  for (std::size_t i = 0; i < lemma.size(); ++i) {
    for (std::size_t j = 0; j < form.size(); ++j) {
      run[j + 1] = lemma[i] == form[j] ? prev[j] + 1 : 0;
      std::size_t len = run[j + 1];
      if (len == 0) continue;
      StemSpan cand{i + 1 - len, j + 1 - len, len};
      bool better =
          len > best.length ||
          (len == best.length &&
           (cand.lemma_start < best.lemma_start ||
            (cand.lemma_start == best.lemma_start &&
             cand.form_start < best.form_start)));
      if (better) best = cand;
    }
    std::swap(prev, run);
  }
  if (best.length == 0) return std::nullopt;
  return best;
}

std::vector<InflectionSample> stem_augment(const LanguageSet& set,
                                           const UnigramDistribution& dist,
                                           const AugmentConfig& cfg) {
  cfg.validate();
  if (set.train.empty()) {
    throw std::invalid_argument("stem augmentation needs training samples");
  }
  struct Candidate {
    const InflectionSample* source;
    StemSpan stem;
  };
  std::vector<Candidate> candidates;
  for (const auto& s : set.train) {
    if (s.origin != Origin::kNatural) continue;
    auto stem = longest_common_substring(s.lemma, s.form);
    if (stem && stem->length >= cfg.min_stem_len) {
      candidates.push_back({&s, *stem});
    }
  }
  std::vector<InflectionSample> out;
  if (candidates.empty() || cfg.stem_cap == 0 || dist.empty()) return out;
  out.reserve(cfg.stem_cap);

  Rng rng(derive_seed(cfg.seed, "stem:" + set.language));
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  while (out.size() < cfg.stem_cap) {
    rng.shuffle(std::span(order));
    for (std::size_t idx : order) {
      if (out.size() == cfg.stem_cap) break;
      const auto& [source, stem] = candidates[idx];
      InflectionSample s = *source;
      for (std::size_t k = 0; k < stem.length; ++k) {
        if (!rng.bernoulli(cfg.stem_replace_prob)) continue;
        char32_t replacement = dist.sample(rng);
        s.lemma[stem.lemma_start + k] = replacement;
        s.form[stem.form_start + k] = replacement;
      }
      s.origin = Origin::kStemAug;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace morph
