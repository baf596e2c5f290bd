// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "morph/encoding.hpp"
#include "morph/model.hpp"

namespace morph {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// A trained model together with everything needed to run it: the vocabulary,
// the language -> family map used for identity tags, and free-form string
// metadata (step, parent checkpoint, ...).
struct Checkpoint {
  Vocabulary vocab;
  Model model;
  std::map<std::string, std::string> families;
  std::map<std::string, std::string> info;
};

// Layout: "MORPHCKP", u32 version, u64 header length, JSON header, then each
// tensor as little-endian float32 in header order. The header carries the
// architecture, the vocabulary text and its fingerprint, and tensor shapes.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Hex FNV-1a of a byte string, as recorded in run manifests.
std::string content_hash(std::string_view bytes);

}  // namespace morph
