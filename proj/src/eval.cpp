// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "morph/train.hpp"

namespace morph {

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1,
                         diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

MetricsReport score_predictions(std::string language,
                                std::span<const std::u32string> gold,
                                std::span<const std::u32string> predicted) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("gold and predicted sizes differ");
  }
  MetricsReport report;
  report.language = std::move(language);
  report.n = gold.size();
  if (gold.empty()) return report;
  std::size_t correct = 0;
  std::size_t distance = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == predicted[i]) ++correct;
    distance += levenshtein(gold[i], predicted[i]);
  }
  const auto n = static_cast<double>(gold.size());
  report.accuracy = 100.0 * static_cast<double>(correct) / n;
  report.mean_levenshtein = static_cast<double>(distance) / n;
  return report;
}

std::vector<std::u32string> predict_forms(
    const Model& model, const Vocabulary& vocab,
    std::span<const InflectionSample> samples, int batch_size) {
  std::vector<std::vector<SymbolId>> sources;
  sources.reserve(samples.size());
  for (const auto& s : samples) sources.push_back(encode_source(s, vocab));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) {
    return sources[x] < sources[y];
  });

  std::vector<std::u32string> out(samples.size());
  const auto step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < order.size(); start += step) {
    const std::size_t end = std::min(order.size(), start + step);
    std::vector<std::vector<SymbolId>> batch;
    std::vector<int> limits;
    for (std::size_t k = start; k < end; ++k) {
      batch.push_back(sources[order[k]]);
      limits.push_back(decode_limit(batch.back()));
    }
    auto decoded = model.greedy_decode(batch, limits);
    for (std::size_t k = start; k < end; ++k) {
      out[order[k]] = decode_output(decoded[k - start], vocab);
    }
  }
  return out;
}

MetricsReport evaluate(const Model& model,
                       std::span<const InflectionSample> dev,
                       const Vocabulary& vocab, int batch_size) {
  if (dev.empty()) throw std::invalid_argument("empty dev set");
  auto predicted = predict_forms(model, vocab, dev, batch_size);
  std::vector<std::u32string> gold;
  gold.reserve(dev.size());
  for (const auto& s : dev) gold.push_back(s.form);
  return score_predictions(dev.front().language, gold, predicted);
}

namespace {

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

}  // namespace

std::string metrics_tsv_header() {
  return "language\taccuracy\tmean_levenshtein\tn\n";
}

std::string metrics_tsv_row(const MetricsReport& report) {
  return report.language + "\t" + fixed(report.accuracy, 2) + "\t" +
         fixed(report.mean_levenshtein, 3) + "\t" + std::to_string(report.n) +
         "\n";
}

std::string format_ablation_table(std::span<const std::string> conditions,
                                  std::span<const AblationRow> rows) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Family", "Lang"};
  header.insert(header.end(), conditions.begin(), conditions.end());
  cells.push_back(header);
  for (const auto& row : rows) {
    if (row.accuracy.size() != conditions.size()) {
      throw std::invalid_argument("ablation row width mismatch for " +
                                  row.language);
    }
    std::vector<std::string> line{row.family, row.language};
    for (double a : row.accuracy) line.push_back(fixed(a, 2));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      width[c] = std::max(width[c], line[c].size());
    }
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    const auto& line = cells[r];
    for (std::size_t c = 0; c < line.size(); ++c) {
      const auto pad = std::string(width[c] - line[c].size(), ' ');
      if (c > 0) out += " | ";
      // Text columns are left aligned, numbers right aligned.
      out += c < 2 ? line[c] + pad : pad + line[c];
    }
    out += '\n';
    if (r == 0) {
      for (std::size_t c = 0; c < line.size(); ++c) {
        if (c > 0) out += "-|-";
        out += std::string(width[c], '-');
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace morph
