// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "morph/errors.hpp"

namespace morph {

void TrainSettings::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(teacher_forcing_prob >= 0.0 && teacher_forcing_prob <= 1.0)) {
    throw ConfigError("teacher_forcing_prob must be in [0, 1]");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

AdamOptimizer::AdamOptimizer(std::size_t size, double learning_rate,
                             double beta1, double beta2, double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(size, 0.0f),
      v_(size, 0.0f) {}

void AdamOptimizer::step(std::span<float> params,
                         std::span<const float> grad) {
  ++steps_;
  const auto t = static_cast<double>(steps_);
  const auto b1 = static_cast<float>(beta1_);
  const auto b2 = static_cast<float>(beta2_);
  const auto step_size = static_cast<float>(
      lr_ * std::sqrt(1.0 - std::pow(beta2_, t)) / (1.0 - std::pow(beta1_, t)));
  const auto eps_hat = static_cast<float>(eps_ * std::sqrt(1.0 - std::pow(beta2_, t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0f - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0f - b2) * grad[i] * grad[i];
    params[i] -= step_size * m_[i] / (std::sqrt(v_[i]) + eps_hat);
  }
}

int decode_limit(std::span<const SymbolId> source) {
  return static_cast<int>(2 * source.size() + 10);
}

double exact_match_accuracy(const Model& model,
                            std::span<const EncodedPair> pairs,
                            int batch_size) {
  if (pairs.empty()) return 0.0;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(pairs[a].source, pairs[a].target) <
           std::tie(pairs[b].source, pairs[b].target);
  });
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::vector<SymbolId>> sources;
    std::vector<int> limits;
    for (std::size_t k = start; k < end; ++k) {
      sources.push_back(pairs[order[k]].source);
      limits.push_back(decode_limit(sources.back()));
    }
    auto outputs = model.greedy_decode(sources, limits);
    for (std::size_t k = start; k < end; ++k) {
      if (outputs[k - start] == pairs[order[k]].target) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) /
         static_cast<double>(pairs.size());
}

TrainHistory train_epochs(
    Model& model, std::span<const EncodedPair> train,
    std::span<const EncodedPair> dev, const TrainSettings& settings,
    const std::function<void(const EpochRecord&)>& on_epoch) {
  settings.validate();
  if (train.empty()) throw std::invalid_argument("empty training set");

  Rng rng(settings.seed);
  AdamOptimizer adam(model.num_parameters(), settings.learning_rate);
  std::vector<float> grad(model.num_parameters());
  std::vector<float> best(model.parameters().begin(), model.parameters().end());
  Model::LossOptions options{true, settings.teacher_forcing_prob};

  TrainHistory history;
  history.best_dev_accuracy = -1.0;
  int since_best = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EncodedPair> batch;
  for (int epoch = 1; epoch <= settings.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(settings.batch_size)) {
      std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(settings.batch_size));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(train[order[k]]);
      float loss = model.loss(batch, options, &rng, grad);
      double norm2 = 0.0;
      for (float g : grad) norm2 += static_cast<double>(g) * g;
      if (!std::isfinite(loss) || !std::isfinite(norm2)) {
        throw DivergenceError("non-finite loss or gradient at epoch " +
                              std::to_string(epoch) + ", batch " +
                              std::to_string(batches + 1) + " (loss " +
                              std::to_string(loss) + ")");
      }
      double norm = std::sqrt(norm2);
      if (settings.grad_clip > 0 && norm > settings.grad_clip) {
        auto scale = static_cast<float>(settings.grad_clip / norm);
        for (float& g : grad) g *= scale;
      }
      adam.step(model.parameters(), grad);
      loss_sum += loss;
      ++batches;
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(batches);
    if (!dev.empty()) {
      record.dev_accuracy = exact_match_accuracy(model, dev, 64);
    }
    history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
    if (dev.empty() || record.dev_accuracy > history.best_dev_accuracy) {
      history.best_dev_accuracy = record.dev_accuracy;
      history.best_epoch = epoch;
      std::copy(model.parameters().begin(), model.parameters().end(),
                best.begin());
      since_best = 0;
    } else if (++since_best >= settings.patience) {
      break;
    }
  }
  std::copy(best.begin(), best.end(), model.parameters().begin());
  if (history.best_dev_accuracy < 0) history.best_dev_accuracy = 0.0;
  return history;
}

GradCheckResult grad_check(Seq2Seq<double>& model,
                           std::span<const EncodedPair> batch, double epsilon,
                           std::size_t num_params, std::uint64_t seed) {
  if (num_params == 0) {
    throw std::invalid_argument("grad_check needs at least one parameter");
  }
  Seq2Seq<double>::LossOptions options{false, 1.0};
  std::vector<double> analytic(model.num_parameters());
  model.loss(batch, options, nullptr, analytic);

  Rng rng(seed);
  const auto& tensors = model.tensors();
  const std::size_t per_tensor =
      (num_params + tensors.size() - 1) / tensors.size();
  std::vector<std::size_t> picks;
  for (const auto& t : tensors) {
    auto n = static_cast<std::size_t>(t.rows * t.cols);
    for (std::size_t k = 0; k < per_tensor; ++k) {
      picks.push_back(t.offset + static_cast<std::size_t>(rng.uniform_int(
                                     0, static_cast<std::int64_t>(n) - 1)));
    }
  }
  std::sort(picks.begin(), picks.end());
  picks.erase(std::unique(picks.begin(), picks.end()), picks.end());

  GradCheckResult result;
  auto params = model.parameters();
  for (std::size_t index : picks) {
    const double saved = params[index];
    params[index] = saved + epsilon;
    const double up = model.loss(batch, options, nullptr);
    params[index] = saved - epsilon;
    const double down = model.loss(batch, options, nullptr);
    params[index] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double scale = std::max(std::abs(numeric), std::abs(analytic[index]));
    const double rel = scale == 0.0 ? 0.0 : std::abs(numeric - analytic[index]) / scale;
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace morph
