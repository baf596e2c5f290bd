// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

// Small models and batches for the network tests.

#pragma once

#include <vector>

#include "generators.hpp"
#include "morph/encoding.hpp"
#include "morph/model.hpp"
#include "morph/utf8.hpp"

namespace morph::testing {

inline ArchConfig tiny_arch(int emb = 8, int hidden = 8, int layers = 1,
                            double dropout = 0.0) {
  return {emb, hidden, layers, dropout};
}

inline InflectionSample izar_sample() {
  return {U"izar", decode_utf8("izaríais"), {"V", "COND", "PL", "2"}, "spa",
          "Romance", Origin::kNatural};
}

// Random samples over a three-letter alphabet plus their vocabulary and
// encodings.
struct RandomBatch {
  std::vector<InflectionSample> samples;
  Vocabulary vocab;
  std::vector<EncodedPair> pairs;
};

inline RandomBatch random_batch(Rng& rng, std::size_t n,
                                std::size_t max_len = 6) {
  RandomBatch out;
  for (std::size_t i = 0; i < n; ++i) {
    out.samples.push_back({random_word(rng, 1, max_len, U"abc"),
                           random_word(rng, 1, max_len, U"abc"),
                           random_tags(rng), "xx", "Fam", Origin::kNatural});
  }
  out.vocab = Vocabulary::build(out.samples);
  for (const auto& s : out.samples) out.pairs.push_back(encode_pair(s, out.vocab));
  return out;
}

// Redraws every parameter uniformly from [-k, k].
template <typename Scalar>
void randomize_uniform(Seq2Seq<Scalar>& model, std::uint64_t seed,
                       double k = 1.0) {
  Rng rng(seed);
  for (auto& p : model.parameters()) p = static_cast<Scalar>(rng.uniform(-k, k));
}

}  // namespace morph::testing
