// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

// A three-language corpus on disk plus a fast configuration for it.

#pragma once

#include <string>

#include "morph/pipeline.hpp"
#include "toy_corpus.hpp"

namespace morph::testing {

inline std::string tiny_config_json(const std::string& extra = "") {
  return R"({
  "corpus_root": "corpus",
  "families_file": "corpus/families.tsv",
  "presets": {
    "small": {"embedding_dim": 8, "hidden_size": 8, "num_layers": 1, "dropout": 0.1},
    "large": {"embedding_dim": 6, "hidden_size": 12, "num_layers": 1, "dropout": 0.1}
  },
  "train": {"learning_rate": 0.01, "batch_size": 16, "max_epochs": 2, "patience": 2},
  "augment": {"copy_cap": 20, "stem_cap": 20},
  "seed": 5)" + extra + "\n}\n";
}

// Writes the toy family corpus and config.json under `dir`.
inline std::filesystem::path write_tiny_project(const std::filesystem::path& dir,
                                                const std::string& extra = "") {
  std::filesystem::create_directories(dir / "corpus");
  write_corpus(dir / "corpus", toy_family_corpus());
  write_text_file(dir / "config.json", tiny_config_json(extra));
  return dir / "config.json";
}

}  // namespace morph::testing
