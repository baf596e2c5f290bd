// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/templates.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "morph/errors.hpp"
#include "morph/utf8.hpp"

namespace morph {

namespace {

std::u32string reversed(std::u32string_view s) {
  return std::u32string(s.rbegin(), s.rend());
}

std::size_t common_prefix(std::u32string_view a, std::u32string_view b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
  return n;
}

std::size_t common_suffix(std::u32string_view a, std::u32string_view b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() &&
         a[a.size() - 1 - n] == b[b.size() - 1 - n]) {
    ++n;
  }
  return n;
}

// Merges one list pair; false when some position holds two different
// entries neither of which is '.'.
bool merge_list(std::u32string_view a, std::u32string_view b,
                std::u32string& out) {
  if (a.size() != b.size()) return false;
  out.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      out[i] = a[i];
    } else if (a[i] == kDotSlot || b[i] == kDotSlot) {
      out[i] = kQuerySlot;
    } else {
      return false;
    }
  }
  return true;
}

std::vector<std::string> merge_tags(const std::vector<std::string>& a,
                                    const std::vector<std::string>& b) {
  if (a == b) return a;
  std::vector<std::string> out;
  for (const auto& t : a) {
    if (std::find(b.begin(), b.end(), t) != b.end() &&
        std::find(out.begin(), out.end(), t) == out.end()) {
      out.push_back(t);
    }
  }
  return out;
}

std::string join_tags(const std::vector<std::string>& tags) {
  std::string out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (i) out += ';';
    out += tags[i];
  }
  return out;
}

struct MergeNode {
  InducedTemplate item;
  std::string key;
  std::uint64_t id = 0;
  bool fresh = false;

  auto order() const { return std::tie(key, id); }
};

// Merges within one group of equal list lengths. The first mergeable pair
// (i < j in sorted order) is merged each round. Pairs of original elements
// that start before `boundary` were already found unmergeable in an earlier
// round and are skipped.
void merge_group(std::vector<MergeNode>& nodes, std::uint64_t& next_id) {
  auto less = [](const MergeNode& a, const MergeNode& b) {
    return a.order() < b.order();
  };
  std::sort(nodes.begin(), nodes.end(), less);
  std::optional<std::pair<std::string, std::uint64_t>> boundary;
  while (true) {
    std::optional<std::size_t> hit_a;
    std::size_t hit_b = 0;
    std::optional<Comparison> merged;
    for (std::size_t a = 0; a < nodes.size() && !hit_a; ++a) {
      bool known = !nodes[a].fresh && boundary &&
                   std::pair(nodes[a].key, nodes[a].id) < *boundary;
      for (std::size_t b = a + 1; b < nodes.size(); ++b) {
        if (known && !nodes[b].fresh) continue;
        merged = merge(nodes[a].item.comparison, nodes[b].item.comparison);
        if (merged) {
          hit_a = a;
          hit_b = b;
          break;
        }
      }
    }
    if (!hit_a) return;

    boundary = std::pair(nodes[*hit_a].key, nodes[*hit_a].id);
    for (auto& n : nodes) n.fresh = false;

    MergeNode node;
    node.item.comparison = std::move(*merged);
    node.item.sources = nodes[*hit_a].item.sources;
    const auto& more = nodes[hit_b].item.sources;
    node.item.sources.insert(node.item.sources.end(), more.begin(),
                             more.end());
    std::sort(node.item.sources.begin(), node.item.sources.end());
    const auto& c = node.item.comparison;
    node.key = render_slots(c.sim) + '\n' + render_slots(c.diff1) + '\n' +
               render_slots(c.diff2);
    node.id = next_id++;
    node.fresh = true;

    nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(hit_b));
    nodes.erase(nodes.begin() + static_cast<std::ptrdiff_t>(*hit_a));
    auto pos = std::upper_bound(nodes.begin(), nodes.end(), node, less);
    nodes.insert(pos, std::move(node));
  }
}

}  // namespace

std::string_view direction_name(AffixDirection direction) {
  return direction == AffixDirection::kSuffixing ? "suffixing" : "prefixing";
}

AffixDirection detect_direction(const LanguageSet& set) {
  if (set.train.empty()) {
    throw std::invalid_argument("direction detection needs training samples");
  }
  // Equal denominators, so comparing sums compares the means.
  std::size_t prefix_total = 0;
  std::size_t suffix_total = 0;
  for (const auto& s : set.train) {
    if (s.origin != Origin::kNatural) continue;
    prefix_total += common_prefix(s.lemma, s.form);
    suffix_total += common_suffix(s.lemma, s.form);
  }
  return prefix_total >= suffix_total ? AffixDirection::kSuffixing
                                      : AffixDirection::kPrefixing;
}

Comparison compare_forward(std::u32string_view w1, std::u32string_view w2) {
  if (w1.empty() || w2.empty()) {
    throw std::invalid_argument("cannot compare an empty word");
  }
  Comparison c;
  std::size_t common = std::min(w1.size(), w2.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (w1[i] == w2[i]) {
      c.sim.push_back(w1[i]);
      c.diff1.push_back(kDotSlot);
      c.diff2.push_back(kDotSlot);
    } else {
      c.sim.push_back(kDotSlot);
      c.diff1.push_back(w1[i]);
      c.diff2.push_back(w2[i]);
    }
  }
  std::size_t extra = std::max(w1.size(), w2.size()) - common;
  c.sim.append(extra, kDotSlot);
  c.diff1.append(w1.substr(common));
  c.diff2.append(w2.substr(common));
  return c;
}

Comparison compare_backward(std::u32string_view w1, std::u32string_view w2) {
  Comparison c = compare_forward(reversed(w1), reversed(w2));
  std::reverse(c.sim.begin(), c.sim.end());
  std::reverse(c.diff1.begin(), c.diff1.end());
  std::reverse(c.diff2.begin(), c.diff2.end());
  return c;
}

std::optional<Comparison> merge(const Comparison& a, const Comparison& b) {
  Comparison out;
  if (!merge_list(a.sim, b.sim, out.sim) ||
      !merge_list(a.diff1, b.diff1, out.diff1) ||
      !merge_list(a.diff2, b.diff2, out.diff2)) {
    return std::nullopt;
  }
  out.merge_count = a.merge_count + b.merge_count + 1;
  out.tags = merge_tags(a.tags, b.tags);
  out.language = a.language;
  return out;
}

std::vector<InducedTemplate> induce_templates_traced(
    const LanguageSet& set, AffixDirection direction) {
  // Only equal-length lists can merge, so each length signature is an
  // independent group.
  using Signature = std::tuple<std::size_t, std::size_t, std::size_t>;
  std::map<Signature, std::vector<MergeNode>> groups;
  std::uint64_t next_id = 0;
  for (std::size_t i = 0; i < set.train.size(); ++i) {
    const auto& s = set.train[i];
    if (s.origin != Origin::kNatural) continue;
    MergeNode node;
    node.item.comparison = direction == AffixDirection::kSuffixing
                               ? compare_forward(s.lemma, s.form)
                               : compare_backward(s.lemma, s.form);
    node.item.comparison.tags = s.tags;
    node.item.comparison.language = set.language;
    node.item.sources = {i};
    const auto& c = node.item.comparison;
    node.key = render_slots(c.sim) + '\n' + render_slots(c.diff1) + '\n' +
               render_slots(c.diff2);
    node.id = next_id++;
    groups[{c.sim.size(), c.diff1.size(), c.diff2.size()}].push_back(
        std::move(node));
  }
  std::vector<MergeNode> all;
  for (auto& [sig, nodes] : groups) {
    merge_group(nodes, next_id);
    for (auto& n : nodes) all.push_back(std::move(n));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.order() < b.order();
  });
  std::vector<InducedTemplate> out;
  out.reserve(all.size());
  for (auto& n : all) out.push_back(std::move(n.item));
  return out;
}

std::vector<Comparison> induce_templates(const LanguageSet& set,
                                         AffixDirection direction) {
  std::vector<Comparison> out;
  for (auto& t : induce_templates_traced(set, direction)) {
    out.push_back(std::move(t.comparison));
  }
  return out;
}

std::vector<Comparison> family_templates(
    std::span<const LanguageSet> family_sets, const LanguageSet& target) {
  std::vector<Comparison> pool;
  for (const auto& sibling : family_sets) {
    if (sibling.language == target.language || sibling.train.empty()) {
      continue;
    }
    auto induced = induce_templates(sibling, detect_direction(sibling));
    pool.insert(pool.end(), std::make_move_iterator(induced.begin()),
                std::make_move_iterator(induced.end()));
  }
  return pool;
}

std::vector<InflectionSample> generate(std::span<const Comparison> templates,
                                       const UnigramDistribution& dist,
                                       const LanguageSet& target,
                                       const GenerateOptions& options) {
  std::vector<const Comparison*> eligible;
  for (const auto& t : templates) {
    if (t.merge_count >= options.min_merges && !t.tags.empty()) {
      eligible.push_back(&t);
    }
  }
  std::vector<InflectionSample> out;
  if (eligible.empty() || options.cap == 0 || dist.empty()) return out;

  using Key = std::tuple<std::u32string, std::u32string, std::vector<std::string>>;
  std::set<Key> seen;
  for (const auto& s : target.train) seen.emplace(s.lemma, s.form, s.tags);

  Rng rng(derive_seed(options.seed, "template:" + target.language));
  // Bounded so that templates with few distinct fillings cannot loop forever.
  const std::size_t max_attempts = options.cap * 20 + eligible.size();
  std::size_t attempts = 0;
  while (out.size() < options.cap && attempts < max_attempts) {
    rng.shuffle(std::span(eligible));
    for (const Comparison* t : eligible) {
      if (out.size() == options.cap || attempts == max_attempts) break;
      ++attempts;
      std::u32string lemma;
      std::u32string form;
      std::size_t n = std::max(t->diff1.size(), t->diff2.size());
      for (std::size_t i = 0; i < n; ++i) {
        char32_t s1 = i < t->diff1.size() ? t->diff1[i] : 0;
        char32_t s2 = i < t->diff2.size() ? t->diff2[i] : 0;
        bool query = s1 == kQuerySlot || s2 == kQuerySlot;
        bool any_slot = is_placeholder(s1) || is_placeholder(s2);
        bool keep = query ? rng.bernoulli(options.keep_prob) : true;
        char32_t fill = any_slot ? dist.sample(rng) : 0;
        auto emit = [&](char32_t slot, std::u32string& word) {
          if (slot == 0) return;
          if (slot == kDotSlot) {
            word.push_back(fill);
          } else if (slot == kQuerySlot) {
            if (keep) word.push_back(fill);
          } else {
            word.push_back(slot);
          }
        };
        emit(s1, lemma);
        emit(s2, form);
      }
      if (lemma.empty() || form.empty()) continue;
      if (!seen.emplace(lemma, form, t->tags).second) continue;
      InflectionSample s;
      s.lemma = std::move(lemma);
      s.form = std::move(form);
      s.tags = t->tags;
      s.language = target.language;
      s.family = target.family;
      s.origin = Origin::kTemplateAug;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::string render_slots(std::u32string_view slots) {
  std::string out;
  for (char32_t c : slots) {
    if (c == kDotSlot) {
      out += '.';
    } else if (c == kQuerySlot) {
      out += '?';
    } else {
      if (c == U'.' || c == U'?' || c == U'\\') out += '\\';
      out += encode_utf8(c);
    }
  }
  return out;
}

std::u32string parse_slots(std::string_view text) {
  std::u32string raw = decode_utf8(text);
  std::u32string out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == U'\\') {
      if (i + 1 == raw.size()) throw ParseError("dangling escape in template");
      out.push_back(raw[++i]);
    } else if (raw[i] == U'.') {
      out.push_back(kDotSlot);
    } else if (raw[i] == U'?') {
      out.push_back(kQuerySlot);
    } else {
      out.push_back(raw[i]);
    }
  }
  return out;
}

std::string serialize_templates(std::span<const Comparison> templates) {
  std::string out;
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const auto& t = templates[i];
    if (i) out += '\n';
    out += render_slots(t.sim) + '\n';
    out += render_slots(t.diff1) + '\n';
    out += render_slots(t.diff2) + '\n';
    out += std::to_string(t.merge_count) + '\n';
    out += join_tags(t.tags) + '\n';
  }
  return out;
}

std::vector<Comparison> parse_templates(std::string_view text,
                                        const std::string& language) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  std::vector<Comparison> out;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (lines[i].empty()) {
      ++i;
      continue;
    }
    if (i + 5 > lines.size()) {
      throw ParseError(i + 1, "truncated template record");
    }
    Comparison c;
    try {
      c.sim = parse_slots(lines[i]);
      c.diff1 = parse_slots(lines[i + 1]);
      c.diff2 = parse_slots(lines[i + 2]);
    } catch (const ParseError& e) {
      throw ParseError(i + 1, e.what());
    }
    const auto count_line = std::string(lines[i + 3]);
    if (count_line.empty() ||
        count_line.find_first_not_of("0123456789") != std::string::npos) {
      throw ParseError(i + 4, "merge count must be a non-negative integer");
    }
    c.merge_count = std::stoull(count_line);
    auto tag_line = lines[i + 4];
    std::size_t ts = 0;
    while (ts <= tag_line.size() && !tag_line.empty()) {
      auto te = tag_line.find(';', ts);
      if (te == std::string_view::npos) te = tag_line.size();
      if (te == ts) throw ParseError(i + 5, "empty tag");
      c.tags.emplace_back(tag_line.substr(ts, te - ts));
      ts = te + 1;
    }
    c.language = language;
    out.push_back(std::move(c));
    i += 5;
  }
  return out;
}

}  // namespace morph
