// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "morph/corpus.hpp"
#include "morph/encoding.hpp"
#include "morph/model.hpp"

namespace morph {

struct MetricsReport {
  std::string language;
  double accuracy = 0.0;  // percent
  double mean_levenshtein = 0.0;
  std::size_t n = 0;

  bool operator==(const MetricsReport&) const = default;
};

// Unit-cost edit distance over Unicode scalars.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

// Scores predictions against gold forms, position by position.
MetricsReport score_predictions(std::string language,
                                std::span<const std::u32string> gold,
                                std::span<const std::u32string> predicted);

// Greedy-decodes every sample. Results come back in input order; decoding
// itself runs in a canonical order so the output is independent of it.
std::vector<std::u32string> predict_forms(
    const Model& model, const Vocabulary& vocab,
    std::span<const InflectionSample> samples, int batch_size = 64);

// Throws std::invalid_argument on an empty dev set.
MetricsReport evaluate(const Model& model,
                       std::span<const InflectionSample> dev,
                       const Vocabulary& vocab, int batch_size = 64);

std::string metrics_tsv_header();
std::string metrics_tsv_row(const MetricsReport& report);

// Per-language accuracy under several conditions, printed like the ablation
// table: Family, Lang, then one column per condition.
struct AblationRow {
  std::string family;
  std::string language;
  std::vector<double> accuracy;  // one per condition
};

std::string format_ablation_table(std::span<const std::string> conditions,
                                  std::span<const AblationRow> rows);

}  // namespace morph
