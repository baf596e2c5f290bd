// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "morph/augment.hpp"
#include "morph/corpus.hpp"
#include "morph/eval.hpp"
#include "morph/model.hpp"
#include "morph/train.hpp"

namespace morph {

struct TuningConfig {
  std::vector<std::string> languages;  // empty: every configured language
  std::size_t downsample = 5000;
  int budget = 100;
};

// Declarative description of one experiment. Relative paths resolve against
// `base_dir`, the directory of the config file.
struct RunConfig {
  std::filesystem::path base_dir = ".";
  std::string corpus_root = ".";
  std::string families_file = "families.tsv";
  std::vector<std::string> languages;  // empty: all languages in the table
  std::set<int> steps{1, 2, 3};
  std::string arch = "both";  // small, large or both
  ArchConfig small = ArchConfig::small();
  ArchConfig large = ArchConfig::large();
  TrainSettings train;
  AugmentConfig augment;
  std::size_t template_cap = 10000;
  std::size_t min_merges = 2;
  double template_keep_prob = 0.5;
  bool enable_templates = false;
  std::set<std::string> exclude;  // subset of copy, stem, step1, step2, step3
  std::uint64_t seed = 1;
  TuningConfig tuning;
  std::string out = "run";

  // Throws ConfigError.
  void validate() const;

  std::filesystem::path resolve(const std::string& path) const;
};

inline const std::vector<std::string>& exclusion_names() {
  static const std::vector<std::string> names{"copy", "stem", "step1",
                                              "step2", "step3"};
  return names;
}

// Unknown keys and ill-typed values are ConfigErrors.
RunConfig parse_run_config(std::string_view text,
                           const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Snapshot for manifests; omits the output directory and base path so that
// runs written to different places stay comparable.
nlohmann::json run_config_to_json(const RunConfig& cfg);

// "copy=100,stem=50,template=20".
void apply_caps(RunConfig& cfg, std::string_view spec);

// What a config resolves to once exclusions are applied.
struct Plan {
  bool step1 = false;
  bool step2 = false;
  bool step3 = false;
  bool copy = false;
  bool stem = false;
  bool templates = false;
  std::vector<std::pair<std::string, ArchConfig>> archs;
};

Plan make_plan(const RunConfig& cfg);
std::string describe_plan(const RunConfig& cfg);

// Configured languages in family-table order, with family metadata.
std::vector<LanguageSet> load_corpus(const RunConfig& cfg);

struct StepData {
  std::vector<InflectionSample> train;
  std::vector<InflectionSample> dev;
  std::map<std::string, std::size_t> counts;  // natural, copy, stem, template
};

// All languages plus per-language copy samples.
StepData step1_data(std::span<const LanguageSet> sets, const RunConfig& cfg,
                    bool with_copy);
// One family plus per-language stem-modified samples.
StepData step2_data(std::span<const LanguageSet> family_sets,
                    const RunConfig& cfg, bool with_stem);
// One language plus template samples induced from it and its siblings.
StepData step3_data(std::span<const LanguageSet> family_sets,
                    const LanguageSet& target, const RunConfig& cfg,
                    bool with_templates);

struct PipelineOptions {
  int jobs = 1;
  std::ostream* log = nullptr;
};

struct LanguageResult {
  std::string language;
  std::string family;
  std::string arch;
  std::string checkpoint;  // relative to the run directory
  MetricsReport metrics;
};

struct PipelineResult {
  nlohmann::json manifest;
  std::vector<LanguageResult> selected;
};

// Runs the configured steps and writes checkpoints, `manifest.json` and
// `metrics.tsv` under `out_dir`.
PipelineResult run_pipeline(const RunConfig& cfg,
                            const std::filesystem::path& out_dir,
                            const PipelineOptions& options);

struct AblationResult {
  std::vector<std::string> conditions;
  std::vector<AblationRow> rows;
  std::string table;
};

// Full pipeline plus one rerun per single exclusion, each in its own
// subdirectory of `out_dir`.
AblationResult ablate(const RunConfig& cfg,
                      std::span<const std::string> exclusions,
                      const std::filesystem::path& out_dir,
                      const PipelineOptions& options);

struct SearchResult {
  int trial = 0;
  ArchConfig arch;
  double dev_accuracy = 0.0;
};

// Uniform draw from the tuning ranges.
ArchConfig sample_arch(Rng& rng);

// Trains `budget` random architectures on the downsampled tuning corpus and
// ranks them by dev accuracy (ties keep trial order).
std::vector<SearchResult> random_search(const RunConfig& cfg, int budget,
                                        const std::filesystem::path& out_dir,
                                        const PipelineOptions& options);

// Runs fn(0..n-1) on up to `jobs` threads. The first exception (by index) is
// rethrown after all workers finish.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace morph
