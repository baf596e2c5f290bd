// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "morph/errors.hpp"
#include "morph/utf8.hpp"

namespace morph {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\r';
  });
}

bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
           c == '\f';
  });
}

// Calls `fn(line_number, line)` for every line, CR stripped.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(++line_no, line);
    start = end + 1;
  }
}

}  // namespace

std::string_view origin_name(Origin origin) {
  switch (origin) {
    case Origin::kNatural:
      return "natural";
    case Origin::kCopyAug:
      return "copy_aug";
    case Origin::kStemAug:
      return "stem_aug";
    case Origin::kTemplateAug:
      return "template_aug";
  }
  return "natural";
}

Origin parse_origin(std::string_view name) {
  for (auto o : {Origin::kNatural, Origin::kCopyAug, Origin::kStemAug,
                 Origin::kTemplateAug}) {
    if (origin_name(o) == name) return o;
  }
  throw ParseError("unknown origin marker '" + std::string(name) + "'");
}

UnigramDistribution::UnigramDistribution(
    std::string language, const std::map<char32_t, std::size_t>& counts)
    : language_(std::move(language)) {
  std::size_t total = 0;
  for (const auto& [ch, n] : counts) total += n;
  if (total == 0) return;
  double running = 0.0;
  for (const auto& [ch, n] : counts) {
    if (n == 0) continue;
    double p = static_cast<double>(n) / static_cast<double>(total);
    probs_[ch] = p;
    running += p;
    symbols_.push_back(ch);
    cumulative_.push_back(running);
  }
  cumulative_.back() = 1.0;
}

char32_t UnigramDistribution::sample(Rng& rng) const {
  if (symbols_.empty()) {
    throw std::logic_error("sampling from an empty unigram distribution");
  }
  double u = rng.uniform();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return symbols_[static_cast<std::size_t>(it - cumulative_.begin())];
}

std::vector<InflectionSample> parse_unimorph(std::string_view text,
                                             const std::string& language,
                                             const std::string& family) {
  std::vector<InflectionSample> samples;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(line_no, "expected 3 tab-separated fields, found " +
                                    std::to_string(fields.size()));
    }
    InflectionSample s;
    try {
      s.lemma = decode_utf8(fields[0]);
      s.form = decode_utf8(fields[1]);
    } catch (const ParseError& e) {
      throw ParseError(line_no, e.what());
    }
    if (s.lemma.empty()) throw ParseError(line_no, "empty lemma");
    if (s.form.empty()) throw ParseError(line_no, "empty form");
    for (auto tag : split(fields[2], ';')) {
      if (tag.empty()) throw ParseError(line_no, "empty tag");
      if (has_space(tag)) {
        throw ParseError(line_no, "whitespace inside tag '" +
                                      std::string(tag) + "'");
      }
      s.tags.emplace_back(tag);
    }
    s.language = language;
    s.family = family;
    samples.push_back(std::move(s));
  });
  return samples;
}

std::string serialize_unimorph(std::span<const InflectionSample> samples,
                               bool origin_column) {
  std::string out;
  for (const auto& s : samples) {
    out += encode_utf8(s.lemma);
    out += '\t';
    out += encode_utf8(s.form);
    out += '\t';
    for (std::size_t i = 0; i < s.tags.size(); ++i) {
      if (i) out += ';';
      out += s.tags[i];
    }
    if (origin_column) {
      out += '\t';
      out += origin_name(s.origin);
    }
    out += '\n';
  }
  return out;
}

UnigramDistribution unigram_distribution(
    std::span<const InflectionSample> samples) {
  if (samples.empty()) {
    throw std::invalid_argument("unigram distribution of an empty sample list");
  }
  const auto& language = samples.front().language;
  std::map<char32_t, std::size_t> counts;
  for (const auto& s : samples) {
    if (s.language != language) {
      throw std::invalid_argument("unigram distribution over mixed languages");
    }
    for (char32_t c : s.lemma) ++counts[c];
    for (char32_t c : s.form) ++counts[c];
  }
  return UnigramDistribution(language, counts);
}

FamilyTable parse_family_table(std::string_view text) {
  FamilyTable table;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line) || line.front() == '#') return;
    auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(line_no, "expected 'code<TAB>family'");
    }
    for (const auto& [code, fam] : table) {
      if (code == fields[0]) {
        throw ParseError(line_no,
                         "duplicate language code '" + code + "'");
      }
    }
    table.emplace_back(std::string(fields[0]), std::string(fields[1]));
  });
  return table;
}

std::vector<FamilyGroup> family_index(std::span<const LanguageSet> sets) {
  std::vector<FamilyGroup> groups;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return g.family == sets[i].family;
    });
    if (it == groups.end()) {
      groups.push_back({sets[i].family, {i}});
    } else {
      it->members.push_back(i);
    }
  }
  return groups;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path,
                     std::string_view text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

LanguageSet load_language_set(const std::filesystem::path& dir,
                              const std::string& code,
                              const std::string& family) {
  LanguageSet set;
  set.language = code;
  set.family = family;
  auto train_path = dir / (code + ".train");
  try {
    set.train = parse_unimorph(read_text_file(train_path), code, family);
    auto dev_path = dir / (code + ".dev");
    if (std::filesystem::exists(dev_path)) {
      set.dev = parse_unimorph(read_text_file(dev_path), code, family);
    }
  } catch (const ParseError& e) {
    throw ParseError(code + ": " + e.what());
  }
  return set;
}

}  // namespace morph
