// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "morph/encoding.hpp"
#include "morph/model.hpp"

namespace morph {

struct TrainSettings {
  double learning_rate = 0.001;
  double teacher_forcing_prob = 0.5;
  int batch_size = 64;
  int max_epochs = 60;
  int patience = 5;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables clipping

  void validate() const;
  bool operator==(const TrainSettings&) const = default;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t size, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  void step(std::span<float> params, std::span<const float> grad);
  std::size_t steps() const { return steps_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::vector<float> m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;  // percent; 0 when there is no dev data
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_dev_accuracy = 0.0;
};

// Output-length budget used for greedy decoding of `source`.
int decode_limit(std::span<const SymbolId> source);

// Exact-match accuracy in percent. Pairs are decoded in a canonical order, so
// the result does not depend on the order of `pairs`.
double exact_match_accuracy(const Model& model,
                            std::span<const EncodedPair> pairs,
                            int batch_size = 64);

// Mini-batch Adam with scheduled teacher forcing. After every epoch the dev
// set is decoded greedily; the best epoch's parameters are restored at the
// end, and training stops after `patience` epochs without improvement.
// Throws DivergenceError on a non-finite loss or gradient.
TrainHistory train_epochs(
    Model& model, std::span<const EncodedPair> train,
    std::span<const EncodedPair> dev, const TrainSettings& settings,
    const std::function<void(const EpochRecord&)>& on_epoch = {});

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Central finite differences against the analytic gradient on a stratified
// random subset of parameters (every tensor is sampled). Runs the
// deterministic loss: full teacher forcing, no dropout.
GradCheckResult grad_check(Seq2Seq<double>& model,
                           std::span<const EncodedPair> batch, double epsilon,
                           std::size_t num_params, std::uint64_t seed);

}  // namespace morph
