// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/encoding.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "morph/errors.hpp"
#include "morph/random.hpp"
#include "morph/utf8.hpp"

namespace morph {

namespace {

constexpr std::string_view kReservedNames[] = {"<SOS>", "<EOS>", "<SEP>",
                                               "<PAD>", "<UNK>"};
constexpr char32_t kReplacementChar = 0xFFFD;

}  // namespace

std::string family_tag(std::string_view family) {
  return "FAM=" + std::string(family);
}

std::string language_tag(std::string_view language) {
  return "LANG=" + std::string(language);
}

std::vector<std::string> identity_tags(const InflectionSample& sample) {
  std::vector<std::string> tags;
  if (!sample.family.empty()) tags.push_back(family_tag(sample.family));
  if (!sample.language.empty()) tags.push_back(language_tag(sample.language));
  return tags;
}

Vocabulary::Vocabulary() {
  for (auto name : kReservedNames) {
    add({Kind::kReserved, 0, std::string(name)});
  }
}

void Vocabulary::add(Symbol symbol) {
  auto id = static_cast<SymbolId>(symbols_.size());
  switch (symbol.kind) {
    case Kind::kChar:
      if (!chars_.emplace(symbol.ch, id).second) {
        throw ParseError("duplicate character symbol '" + symbol.text + "'");
      }
      break;
    case Kind::kTag:
      if (!tags_.emplace(symbol.text, id).second) {
        throw ParseError("duplicate tag symbol '" + symbol.text + "'");
      }
      break;
    case Kind::kReserved:
      break;
  }
  symbols_.push_back(std::move(symbol));
}

Vocabulary Vocabulary::build(std::span<const InflectionSample> samples) {
  std::set<char32_t> chars;
  std::set<std::string> tags;
  for (const auto& s : samples) {
    chars.insert(s.lemma.begin(), s.lemma.end());
    chars.insert(s.form.begin(), s.form.end());
    tags.insert(s.tags.begin(), s.tags.end());
    for (auto& t : identity_tags(s)) tags.insert(std::move(t));
  }
  Vocabulary vocab;
  for (char32_t c : chars) vocab.add({Kind::kChar, c, encode_utf8(c)});
  for (const auto& t : tags) vocab.add({Kind::kTag, 0, t});
  return vocab;
}

std::string Vocabulary::save() const {
  std::string out;
  for (const auto& s : symbols_) {
    switch (s.kind) {
      case Kind::kReserved:
        out += "R\t";
        break;
      case Kind::kChar:
        out += "C\t";
        break;
      case Kind::kTag:
        out += "T\t";
        break;
    }
    out += s.text;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::load(std::string_view text) {
  Vocabulary vocab;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.size() < 3 || line[1] != '\t') {
      throw ParseError(line_no, "expected '<kind>TAB<symbol>'");
    }
    auto body = line.substr(2);
    if (line_no <= static_cast<std::size_t>(kNumReserved)) {
      if (line[0] != 'R' || body != kReservedNames[line_no - 1]) {
        throw ParseError(line_no, "reserved symbols must come first in order "
                                  "<SOS> <EOS> <SEP> <PAD> <UNK>");
      }
      continue;
    }
    if (line[0] == 'C') {
      std::u32string cp;
      try {
        cp = decode_utf8(body);
      } catch (const ParseError& e) {
        throw ParseError(line_no, e.what());
      }
      if (cp.size() != 1) {
        throw ParseError(line_no, "character symbol must be one code point");
      }
      vocab.add({Kind::kChar, cp[0], std::string(body)});
    } else if (line[0] == 'T') {
      vocab.add({Kind::kTag, 0, std::string(body)});
    } else {
      throw ParseError(line_no, "unknown symbol kind '" +
                                    std::string(1, line[0]) + "'");
    }
  }
  if (line_no < static_cast<std::size_t>(kNumReserved)) {
    throw ParseError("vocabulary is missing reserved symbols");
  }
  return vocab;
}

const Vocabulary::Symbol& Vocabulary::symbol(SymbolId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw std::out_of_range("symbol id " + std::to_string(id) +
                            " outside vocabulary of size " +
                            std::to_string(symbols_.size()));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains_tag(std::string_view tag) const {
  return tags_.find(tag) != tags_.end();
}

SymbolId Vocabulary::char_id(char32_t ch) const {
  auto it = chars_.find(ch);
  return it == chars_.end() ? kUnk : it->second;
}

SymbolId Vocabulary::tag_id(std::string_view tag) const {
  auto it = tags_.find(tag);
  return it == tags_.end() ? kUnk : it->second;
}

std::uint64_t Vocabulary::fingerprint() const { return fnv1a(save()); }

std::vector<SymbolId> encode_source(const InflectionSample& sample,
                                    const Vocabulary& vocab) {
  std::vector<SymbolId> ids;
  ids.reserve(sample.lemma.size() + sample.tags.size() + 5);
  ids.push_back(kSos);
  for (char32_t c : sample.lemma) ids.push_back(vocab.char_id(c));
  ids.push_back(kSep);
  auto identity = identity_tags(sample);
  bool already_tagged =
      sample.tags.size() >= identity.size() &&
      std::equal(identity.begin(), identity.end(), sample.tags.begin());
  if (!already_tagged) {
    for (const auto& t : identity) ids.push_back(vocab.tag_id(t));
  }
  for (const auto& t : sample.tags) ids.push_back(vocab.tag_id(t));
  ids.push_back(kEos);
  return ids;
}

std::vector<SymbolId> encode_target(std::u32string_view form,
                                    const Vocabulary& vocab) {
  std::vector<SymbolId> ids;
  ids.reserve(form.size() + 2);
  ids.push_back(kSos);
  for (char32_t c : form) ids.push_back(vocab.char_id(c));
  ids.push_back(kEos);
  return ids;
}

std::u32string decode_output(std::span<const SymbolId> ids,
                             const Vocabulary& vocab) {
  std::u32string out;
  std::size_t i = 0;
  if (!ids.empty() && ids[0] == kSos) i = 1;
  for (; i < ids.size(); ++i) {
    const auto& sym = vocab.symbol(ids[i]);
    if (ids[i] == kEos) break;
    out.push_back(sym.kind == Vocabulary::Kind::kChar ? sym.ch
                                                      : kReplacementChar);
  }
  return out;
}

EncodedPair encode_pair(const InflectionSample& sample,
                        const Vocabulary& vocab) {
  return {encode_source(sample, vocab), encode_target(sample.form, vocab)};
}

std::vector<EncodedPair> encode_all(std::span<const InflectionSample> samples,
                                    const Vocabulary& vocab) {
  std::vector<EncodedPair> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_pair(s, vocab));
  return out;
}

}  // namespace morph
