// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

#include <json.hpp>

#include "morph/errors.hpp"
#include "morph/random.hpp"

namespace morph {

namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "MORPHCKP";

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() < pos + sizeof(T)) {
    throw ParseError("checkpoint truncated at byte " + std::to_string(pos));
  }
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(raw, raw + sizeof(T));
  }
  pos += sizeof(T);
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

json arch_to_json(const ArchConfig& arch) {
  return {{"embedding_dim", arch.embedding_dim},
          {"hidden_size", arch.hidden_size},
          {"num_layers", arch.num_layers},
          {"dropout", arch.dropout}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig arch;
  arch.embedding_dim = j.at("embedding_dim").get<int>();
  arch.hidden_size = j.at("hidden_size").get<int>();
  arch.num_layers = j.at("num_layers").get<int>();
  arch.dropout = j.at("dropout").get<double>();
  return arch;
}

}  // namespace

std::string content_hash(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  const auto& model = checkpoint.model;
  if (model.vocab_size() != checkpoint.vocab.size()) {
    throw std::invalid_argument("model and vocabulary sizes differ");
  }
  json header;
  header["arch"] = arch_to_json(model.arch());
  header["vocab"] = checkpoint.vocab.save();
  header["vocab_hash"] = content_hash(checkpoint.vocab.save());
  header["families"] = checkpoint.families;
  header["info"] = checkpoint.info;
  json tensors = json::array();
  for (const auto& t : model.tensors()) {
    tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  }
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::string out(kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + model.num_parameters() * sizeof(float));
  for (float p : model.parameters()) put_le<float>(out, p);
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw ParseError("not a checkpoint (bad magic)");
  }
  std::size_t pos = kMagic.size();
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " +
                     std::to_string(version));
  }
  const auto length = get_le<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < length) throw ParseError("checkpoint header truncated");
  json header;
  try {
    header = json::parse(bytes.substr(pos, length));
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  pos += length;

  try {
    const std::string vocab_text = header.at("vocab").get<std::string>();
    if (content_hash(vocab_text) != header.at("vocab_hash").get<std::string>()) {
      throw ParseError("checkpoint vocabulary hash mismatch");
    }
    Vocabulary vocab = Vocabulary::load(vocab_text);
    ArchConfig arch = arch_from_json(header.at("arch"));
    arch.validate();
    Checkpoint ckp{vocab, Model(arch, vocab.size(), 0),
                   header.at("families").get<std::map<std::string, std::string>>(),
                   header.at("info").get<std::map<std::string, std::string>>()};
    const auto& stored = header.at("tensors");
    const auto& expected = ckp.model.tensors();
    if (stored.size() != expected.size()) {
      throw ParseError("checkpoint tensor count mismatch");
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (stored[i].at("name").get<std::string>() != expected[i].name ||
          stored[i].at("rows").get<Eigen::Index>() != expected[i].rows ||
          stored[i].at("cols").get<Eigen::Index>() != expected[i].cols) {
        throw ParseError("checkpoint tensor " + expected[i].name +
                         " does not match the architecture");
      }
    }
    auto params = ckp.model.parameters();
    if (bytes.size() - pos != params.size() * sizeof(float)) {
      throw ParseError("checkpoint payload size mismatch");
    }
    for (float& p : params) p = get_le<float>(bytes, pos);
    return ckp;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint architecture: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& checkpoint) {
  write_text_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_text_file(path));
}

}  // namespace morph
