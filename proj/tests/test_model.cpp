// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "model_fixtures.hpp"
#include "morph/errors.hpp"
#include "morph/train.hpp"

using namespace morph;
using morph::testing::tiny_arch;

namespace {

bool valid_distribution(const Model::Matrix& m, double tol = 1e-6) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!(m(i, j) >= 0.0f) || !std::isfinite(m(i, j))) return false;
      sum += m(i, j);
    }
    if (std::abs(sum - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("presets and validation") {
  CHECK(ArchConfig::small() == ArchConfig{200, 256, 2, 0.3});
  CHECK(ArchConfig::large() == ArchConfig{150, 900, 2, 0.3});
  ArchConfig bad = tiny_arch();
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tiny_arch(8, 0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(Model(tiny_arch(), 5, 1), std::invalid_argument);
}

TEST_CASE("one embedding matrix") {
  Model m(tiny_arch(6, 4, 2), 20, 1);
  int embeddings = 0;
  std::size_t end = 0;
  for (const auto& t : m.tensors()) {
    if (t.name.find("embedding") != std::string::npos) ++embeddings;
    CHECK(t.offset >= end);  // tensors do not overlap
    CHECK(t.offset % 16 == 0);
    end = t.offset + static_cast<std::size_t>(t.rows * t.cols);
  }
  CHECK(embeddings == 1);
  CHECK(end == m.num_parameters());
  CHECK(m.tensor(m.embedding_tensor()).rows() == 6);
  CHECK(m.tensor(m.embedding_tensor()).cols() == 20);
}

TEST_CASE("encoder shapes, seed dependence and determinism") {
  Rng rng(3);
  auto batch = morph::testing::random_batch(rng, 4);
  Model a(tiny_arch(8, 5, 2), batch.vocab.size(), 1);
  Model b(tiny_arch(8, 5, 2), batch.vocab.size(), 2);
  std::vector<std::vector<SymbolId>> sources{batch.pairs[0].source};
  auto ea = a.encode(sources);
  const auto L = static_cast<Eigen::Index>(batch.pairs[0].source.size());
  CHECK(ea.memory.rows() == 10);
  CHECK(ea.memory.cols() == L);
  CHECK(ea.init_h.size() == 2);
  CHECK(ea.memory != b.encode(sources).memory);
  CHECK(ea.memory == a.encode(sources).memory);
}

TEST_CASE("decode steps give valid distributions") {
  Rng rng(5);
  auto batch = morph::testing::random_batch(rng, 6);
  Model m(tiny_arch(8, 8, 2), batch.vocab.size(), 4);
  morph::testing::randomize_uniform(m, 9, 0.5);
  std::vector<std::vector<SymbolId>> sources;
  for (const auto& p : batch.pairs) sources.push_back(p.source);
  auto enc = m.encode(sources);
  auto state = m.initial_state(enc);
  std::vector<SymbolId> prev(sources.size(), kSos);
  for (int step = 0; step < 12; ++step) {
    auto out = m.decode_step(prev, state, enc);
    CHECK(valid_distribution(out.probs));
    CHECK(valid_distribution(out.attention));
    for (std::size_t b = 0; b < sources.size(); ++b) {
      for (auto t = static_cast<Eigen::Index>(sources[b].size());
           t < out.attention.rows(); ++t) {
        CHECK(out.attention(t, static_cast<Eigen::Index>(b)) == 0.0f);
      }
      CHECK(out.probs(kPad, static_cast<Eigen::Index>(b)) == 0.0f);
      CHECK(out.probs(kSep, static_cast<Eigen::Index>(b)) == 0.0f);
      Eigen::Index best = 0;
      out.probs.col(static_cast<Eigen::Index>(b)).maxCoeff(&best);
      prev[b] = static_cast<SymbolId>(best);
    }
  }
}

TEST_CASE("memory of length one gets all the attention") {
  Model m(tiny_arch(), 12, 2);
  std::vector<std::vector<SymbolId>> sources{{7}};
  auto enc = m.encode(sources);
  auto state = m.initial_state(enc);
  std::vector<SymbolId> prev{kSos};
  for (int step = 0; step < 3; ++step) {
    auto out = m.decode_step(prev, state, enc);
    CHECK(out.attention(0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("greedy decoding truncation and determinism") {
  Model m(tiny_arch(), 12, 2);
  std::vector<SymbolId> source{kSos, 6, kSep, 8, kEos};
  CHECK(m.greedy_decode(source, 1) == std::vector<SymbolId>{kSos, kEos});
  auto out = m.greedy_decode(source, 7);
  CHECK(out == m.greedy_decode(source, 7));
  CHECK(out.front() == kSos);
  CHECK(out.back() == kEos);
  CHECK(out.size() <= 8);
}

TEST_CASE("property: greedy decoding never emits PAD, SEP or a second SOS") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto batch = morph::testing::random_batch(rng, 5);
    Model m(tiny_arch(6, 6, 1 + trial % 2), batch.vocab.size(), rng.next());
    morph::testing::randomize_uniform(m, rng.next(), 2.0);
    std::vector<std::vector<SymbolId>> sources;
    std::vector<int> limits;
    for (const auto& p : batch.pairs) {
      sources.push_back(p.source);
      limits.push_back(decode_limit(p.source));
    }
    auto outputs = m.greedy_decode(sources, limits);
    for (std::size_t b = 0; b < outputs.size(); ++b) {
      const auto& out = outputs[b];
      CHECK(out.front() == kSos);
      CHECK(out.back() == kEos);
      CHECK(static_cast<int>(out.size()) <= limits[b] + 1);
      for (std::size_t i = 1; i < out.size(); ++i) {
        CHECK(out[i] != kPad);
        CHECK(out[i] != kSep);
        CHECK(out[i] != kSos);
      }
    }
  }
}

TEST_CASE("batched decoding matches one-at-a-time decoding") {
  Rng rng(12);
  auto batch = morph::testing::random_batch(rng, 7);
  Model m(tiny_arch(8, 8, 2), batch.vocab.size(), 3);
  morph::testing::randomize_uniform(m, 4, 1.0);
  std::vector<std::vector<SymbolId>> sources;
  std::vector<int> limits;
  for (const auto& p : batch.pairs) {
    sources.push_back(p.source);
    limits.push_back(decode_limit(p.source));
  }
  auto together = m.greedy_decode(sources, limits);
  for (std::size_t b = 0; b < sources.size(); ++b) {
    CHECK(together[b] == m.greedy_decode(sources[b], limits[b]));
  }
}

TEST_CASE("initial loss is close to ln V") {
  Rng rng(13);
  auto batch = morph::testing::random_batch(rng, 32);
  // A larger vocabulary: add more characters.
  std::vector<InflectionSample> samples = batch.samples;
  samples.push_back({U"defghijklmnopqrstuvwxyz", U"ABCDEFGH", {"Q"}, "xx",
                     "Fam", Origin::kNatural});
  auto vocab = Vocabulary::build(samples);
  std::vector<EncodedPair> pairs;
  for (const auto& s : batch.samples) pairs.push_back(encode_pair(s, vocab));
  Model m(ArchConfig{32, 32, 2, 0.3}, vocab.size(), 7);
  double loss = m.loss(pairs, {}, nullptr);
  double lnv = std::log(static_cast<double>(vocab.size()));
  CHECK(std::abs(loss - lnv) / lnv < 0.1);
}

TEST_CASE("loss with full teacher forcing is deterministic") {
  Rng rng(14);
  auto batch = morph::testing::random_batch(rng, 8);
  Model m(tiny_arch(8, 8, 2, 0.0), batch.vocab.size(), 7);
  Rng r1(1);
  Rng r2(2);
  Model::LossOptions tf{true, 1.0};
  CHECK(m.loss(batch.pairs, tf, &r1) == m.loss(batch.pairs, tf, &r2));
  CHECK(m.loss(batch.pairs, {}, nullptr) == m.loss(batch.pairs, {}, nullptr));
  CHECK_THROWS_AS(m.loss(batch.pairs, tf, nullptr), std::invalid_argument);
}

TEST_CASE("the embedding feeds both the encoder and the output layer") {
  std::vector<InflectionSample> samples{
      {U"ab", U"ba", {"X"}, "", "", Origin::kNatural},
      {U"c", U"c", {"Y"}, "", "", Origin::kNatural}};
  auto vocab = Vocabulary::build(samples);
  Model m(tiny_arch(8, 8, 1), vocab.size(), 5);
  const SymbolId s = vocab.char_id(U'c');
  std::vector<std::vector<SymbolId>> with_s{encode_source(samples[1], vocab)};
  std::vector<std::vector<SymbolId>> without_s{encode_source(samples[0], vocab)};

  auto before_mem = m.encode(with_s).memory;
  auto enc = m.encode(without_s);
  auto state = m.initial_state(enc);
  std::vector<SymbolId> prev{kSos};
  auto before = m.decode_step(prev, state, enc).probs;

  m.tensor(m.embedding_tensor()).col(s).array() += 0.5f;
  CHECK(m.encode(with_s).memory != before_mem);
  enc = m.encode(without_s);
  state = m.initial_state(enc);
  auto after = m.decode_step(prev, state, enc).probs;
  CHECK(after(s, 0) != doctest::Approx(before(s, 0)).epsilon(1e-4));
  // Other logits are untouched, so their ratios are preserved.
  const SymbolId t = vocab.char_id(U'a');
  const SymbolId u = vocab.char_id(U'b');
  CHECK(after(t, 0) / after(u, 0) ==
        doctest::Approx(before(t, 0) / before(u, 0)).epsilon(1e-5));
}

TEST_CASE("a single pair can be memorized") {
  auto sample = morph::testing::izar_sample();
  auto vocab = Vocabulary::build(std::span(&sample, 1));
  std::vector<EncodedPair> pairs{encode_pair(sample, vocab)};
  Model m(ArchConfig{16, 32, 1, 0.0}, vocab.size(), 1);
  TrainSettings settings;
  settings.learning_rate = 0.01;
  settings.teacher_forcing_prob = 1.0;
  settings.batch_size = 1;
  settings.max_epochs = 300;
  settings.patience = 300;
  train_epochs(m, pairs, {}, settings);
  CHECK(m.loss(pairs, {}, nullptr) < 0.01);
  auto out = m.greedy_decode(pairs[0].source, decode_limit(pairs[0].source));
  CHECK(decode_output(out, vocab) == sample.form);
}

TEST_CASE("gradient check on a tiny model") {
  Rng rng(21);
  auto batch = morph::testing::random_batch(rng, 3, 4);
  Seq2Seq<double> m(tiny_arch(8, 8, 1), batch.vocab.size(), 3);
  morph::testing::randomize_uniform(m, 17);
  auto r = grad_check(m, batch.pairs, 1e-5, 200, 5);
  CHECK(r.checked > 100);
  CHECK(r.max_relative_error < 1e-4);
  auto again = grad_check(m, batch.pairs, 1e-5, 200, 5);
  CHECK(again.max_relative_error == r.max_relative_error);
  CHECK(again.checked == r.checked);
  CHECK_THROWS_AS(grad_check(m, batch.pairs, 1e-5, 0, 5), std::invalid_argument);
}

TEST_CASE("gradient check on two layers") {
  Rng rng(22);
  auto batch = morph::testing::random_batch(rng, 2, 3);
  Seq2Seq<double> m(tiny_arch(5, 4, 2), batch.vocab.size(), 3);
  morph::testing::randomize_uniform(m, 18);
  CHECK(grad_check(m, batch.pairs, 1e-5, 300, 6).max_relative_error < 1e-4);
}

TEST_CASE("out-of-range ids are rejected") {
  Model m(tiny_arch(), 12, 2);
  std::vector<std::vector<SymbolId>> bad{{kSos, 40, kEos}};
  CHECK_THROWS_AS(m.encode(bad), std::out_of_range);
  std::vector<std::vector<SymbolId>> empty{{}};
  CHECK_THROWS_AS(m.encode(empty), std::invalid_argument);
}

TEST_CASE("gradients do not depend on buffer placement") {
  Rng rng(30);
  auto batch = morph::testing::random_batch(rng, 12);
  Model m(tiny_arch(8, 8, 1, 0.2), batch.vocab.size(), 5);
  Model::LossOptions opts{true, 0.5};
  const auto n = m.num_parameters();
  std::vector<float> reference(n);
  Rng r0(1);
  const float loss = m.loss(batch.pairs, opts, &r0, reference);
  for (std::size_t shift = 1; shift < 8; ++shift) {
    std::vector<char> junk(shift * 24);  // perturb heap placement
    Model copy = m;
    std::vector<float> buffer(n + shift);
    std::span<float> grad(buffer.data() + shift, n);
    Rng r(1);
    CHECK(copy.loss(batch.pairs, opts, &r, grad) == loss);
    CHECK(std::equal(grad.begin(), grad.end(), reference.begin()));
  }
}
