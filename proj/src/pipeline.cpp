// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "morph/checkpoint.hpp"
#include "morph/encoding.hpp"
#include "morph/errors.hpp"
#include "morph/templates.hpp"

namespace morph {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  if (corpus_root.empty()) throw ConfigError("corpus_root is empty");
  if (families_file.empty()) throw ConfigError("families_file is empty");
  if (steps.empty()) throw ConfigError("steps is empty");
  for (int s : steps) {
    if (s < 1 || s > 3) {
      throw ConfigError("unknown step " + std::to_string(s));
    }
  }
  if (arch != "small" && arch != "large" && arch != "both") {
    throw ConfigError("arch must be small, large or both, got '" + arch + "'");
  }
  small.validate();
  large.validate();
  train.validate();
  augment.validate();
  if (!(template_keep_prob >= 0.0 && template_keep_prob <= 1.0)) {
    throw ConfigError("template_keep_prob must be in [0, 1]");
  }
  const auto& known = exclusion_names();
  for (const auto& e : exclude) {
    if (std::find(known.begin(), known.end(), e) == known.end()) {
      throw ConfigError("unknown exclusion '" + e + "'");
    }
  }
  if (tuning.budget < 1) throw ConfigError("tuning.budget must be >= 1");
  if (tuning.downsample < 1) throw ConfigError("tuning.downsample must be >= 1");
  if (out.empty()) throw ConfigError("out is empty");
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> keys,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : obj.items()) {
    if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& dst, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    dst = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

void read_arch(const json& obj, ArchConfig& arch, const std::string& where) {
  check_keys(obj, {"embedding_dim", "hidden_size", "num_layers", "dropout"},
             where);
  read(obj, "embedding_dim", arch.embedding_dim, where);
  read(obj, "hidden_size", arch.hidden_size, where);
  read(obj, "num_layers", arch.num_layers, where);
  read(obj, "dropout", arch.dropout, where);
}

std::vector<std::string> read_language_list(const json& value,
                                            const std::string& where) {
  if (value.is_string() && value.get<std::string>() == "all") return {};
  if (!value.is_array()) {
    throw ConfigError(where + " must be \"all\" or a list of codes");
  }
  std::vector<std::string> out;
  for (const auto& v : value) {
    if (!v.is_string()) throw ConfigError(where + " entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

json arch_json(const ArchConfig& a) {
  return {{"embedding_dim", a.embedding_dim},
          {"hidden_size", a.hidden_size},
          {"num_layers", a.num_layers},
          {"dropout", a.dropout}};
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(sep, start);
    if (end == std::string_view::npos) end = text.size();
    auto piece = text.substr(start, end - start);
    if (!piece.empty()) out.emplace_back(piece);
    start = end + 1;
  }
  return out;
}

}  // namespace

RunConfig parse_run_config(std::string_view text,
                           const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  check_keys(root,
             {"corpus_root", "families_file", "languages", "steps", "arch",
              "presets", "train", "augment", "enable_templates", "exclude",
              "seed", "tuning", "out"},
             "config");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  read(root, "corpus_root", cfg.corpus_root, "config");
  read(root, "families_file", cfg.families_file, "config");
  if (root.contains("languages")) {
    cfg.languages = read_language_list(root["languages"], "languages");
  }
  if (root.contains("steps")) {
    std::vector<int> steps;
    read(root, "steps", steps, "config");
    cfg.steps = {steps.begin(), steps.end()};
  }
  read(root, "arch", cfg.arch, "config");
  if (root.contains("presets")) {
    const auto& presets = root["presets"];
    check_keys(presets, {"small", "large"}, "presets");
    if (presets.contains("small")) read_arch(presets["small"], cfg.small, "presets.small");
    if (presets.contains("large")) read_arch(presets["large"], cfg.large, "presets.large");
  }
  if (root.contains("train")) {
    const auto& t = root["train"];
    check_keys(t,
               {"learning_rate", "teacher_forcing_prob", "batch_size",
                "max_epochs", "patience", "grad_clip"},
               "train");
    read(t, "learning_rate", cfg.train.learning_rate, "train");
    read(t, "teacher_forcing_prob", cfg.train.teacher_forcing_prob, "train");
    read(t, "batch_size", cfg.train.batch_size, "train");
    read(t, "max_epochs", cfg.train.max_epochs, "train");
    read(t, "patience", cfg.train.patience, "train");
    read(t, "grad_clip", cfg.train.grad_clip, "train");
  }
  if (root.contains("augment")) {
    const auto& a = root["augment"];
    check_keys(a,
               {"copy_cap", "stem_cap", "stem_replace_prob", "min_stem_len",
                "template_cap", "min_merges", "template_keep_prob"},
               "augment");
    read(a, "copy_cap", cfg.augment.copy_cap, "augment");
    read(a, "stem_cap", cfg.augment.stem_cap, "augment");
    read(a, "stem_replace_prob", cfg.augment.stem_replace_prob, "augment");
    read(a, "min_stem_len", cfg.augment.min_stem_len, "augment");
    read(a, "template_cap", cfg.template_cap, "augment");
    read(a, "min_merges", cfg.min_merges, "augment");
    read(a, "template_keep_prob", cfg.template_keep_prob, "augment");
  }
  read(root, "enable_templates", cfg.enable_templates, "config");
  if (root.contains("exclude")) {
    std::vector<std::string> ex;
    read(root, "exclude", ex, "config");
    cfg.exclude = {ex.begin(), ex.end()};
  }
  read(root, "seed", cfg.seed, "config");
  if (root.contains("tuning")) {
    const auto& t = root["tuning"];
    check_keys(t, {"languages", "downsample", "budget"}, "tuning");
    if (t.contains("languages")) {
      cfg.tuning.languages = read_language_list(t["languages"], "tuning.languages");
    }
    read(t, "downsample", cfg.tuning.downsample, "tuning");
    read(t, "budget", cfg.tuning.budget, "tuning");
  }
  read(root, "out", cfg.out, "config");
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw FileError("config not found: " + path.string());
  }
  return parse_run_config(read_text_file(path), path.parent_path().empty()
                                                     ? std::filesystem::path(".")
                                                     : path.parent_path());
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["corpus_root"] = cfg.corpus_root;
  j["families_file"] = cfg.families_file;
  j["languages"] = cfg.languages.empty() ? json("all") : json(cfg.languages);
  j["steps"] = cfg.steps;
  j["arch"] = cfg.arch;
  j["presets"] = {{"small", arch_json(cfg.small)},
                  {"large", arch_json(cfg.large)}};
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"teacher_forcing_prob", cfg.train.teacher_forcing_prob},
                {"batch_size", cfg.train.batch_size},
                {"max_epochs", cfg.train.max_epochs},
                {"patience", cfg.train.patience},
                {"grad_clip", cfg.train.grad_clip}};
  j["augment"] = {{"copy_cap", cfg.augment.copy_cap},
                  {"stem_cap", cfg.augment.stem_cap},
                  {"stem_replace_prob", cfg.augment.stem_replace_prob},
                  {"min_stem_len", cfg.augment.min_stem_len},
                  {"template_cap", cfg.template_cap},
                  {"min_merges", cfg.min_merges},
                  {"template_keep_prob", cfg.template_keep_prob}};
  j["enable_templates"] = cfg.enable_templates;
  j["exclude"] = cfg.exclude;
  j["seed"] = cfg.seed;
  j["tuning"] = {{"languages", cfg.tuning.languages.empty()
                                   ? json("all")
                                   : json(cfg.tuning.languages)},
                 {"downsample", cfg.tuning.downsample},
                 {"budget", cfg.tuning.budget}};
  return j;
}

void apply_caps(RunConfig& cfg, std::string_view spec) {
  for (const auto& item : split(spec, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("cap override '" + item + "' is not name=value");
    }
    std::string name = item.substr(0, eq);
    std::size_t value = 0;
    try {
      std::size_t used = 0;
      value = std::stoull(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cap override '" + item + "' needs an integer");
    }
    if (name == "copy") {
      cfg.augment.copy_cap = value;
    } else if (name == "stem") {
      cfg.augment.stem_cap = value;
    } else if (name == "template") {
      cfg.template_cap = value;
    } else {
      throw ConfigError("unknown cap '" + name + "'");
    }
  }
}

Plan make_plan(const RunConfig& cfg) {
  cfg.validate();
  Plan plan;
  auto runs = [&](int step) {
    return cfg.steps.count(step) != 0 &&
           cfg.exclude.count("step" + std::to_string(step)) == 0;
  };
  plan.step1 = runs(1);
  plan.step2 = runs(2);
  plan.step3 = runs(3);
  if (!plan.step1 && !plan.step2 && !plan.step3) {
    throw ConfigError("every training step is excluded");
  }
  plan.copy = plan.step1 && cfg.exclude.count("copy") == 0;
  plan.stem = plan.step2 && cfg.exclude.count("stem") == 0;
  plan.templates = plan.step3 && cfg.enable_templates;
  if (cfg.arch != "large") plan.archs.emplace_back("small", cfg.small);
  if (cfg.arch != "small") plan.archs.emplace_back("large", cfg.large);
  return plan;
}

std::string describe_plan(const RunConfig& cfg) {
  Plan plan = make_plan(cfg);
  std::ostringstream out;
  auto on = [](bool b) { return b ? "on" : "off"; };
  out << "corpus_root\t" << cfg.resolve(cfg.corpus_root).string() << '\n';
  out << "families_file\t" << cfg.resolve(cfg.families_file).string() << '\n';
  out << "languages\t";
  if (cfg.languages.empty()) {
    out << "all";
  } else {
    for (std::size_t i = 0; i < cfg.languages.size(); ++i) {
      out << (i ? "," : "") << cfg.languages[i];
    }
  }
  out << '\n';
  out << "step1\t" << on(plan.step1) << "\tcopy " << on(plan.copy)
      << " cap " << cfg.augment.copy_cap << '\n';
  out << "step2\t" << on(plan.step2) << "\tstem " << on(plan.stem)
      << " cap " << cfg.augment.stem_cap << '\n';
  out << "step3\t" << on(plan.step3) << "\ttemplates " << on(plan.templates)
      << " cap " << cfg.template_cap << " min_merges " << cfg.min_merges
      << '\n';
  for (const auto& [name, a] : plan.archs) {
    out << "arch\t" << name << "\tembedding " << a.embedding_dim << " hidden "
        << a.hidden_size << " layers " << a.num_layers << " dropout "
        << a.dropout << '\n';
  }
  out << "train\tlr " << cfg.train.learning_rate << " tf "
      << cfg.train.teacher_forcing_prob << " batch " << cfg.train.batch_size
      << " epochs " << cfg.train.max_epochs << " patience "
      << cfg.train.patience << '\n';
  out << "seed\t" << cfg.seed << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Data

std::vector<LanguageSet> load_corpus(const RunConfig& cfg) {
  const auto table =
      parse_family_table(read_text_file(cfg.resolve(cfg.families_file)));
  std::vector<std::pair<std::string, std::string>> chosen;
  if (cfg.languages.empty()) {
    chosen = table;
  } else {
    for (const auto& code : cfg.languages) {
      auto it = std::find_if(table.begin(), table.end(),
                             [&](const auto& e) { return e.first == code; });
      if (it == table.end()) {
        throw ConfigError("language '" + code + "' is not in the family table");
      }
      chosen.push_back(*it);
    }
  }
  if (chosen.empty()) throw ConfigError("no languages configured");
  std::vector<LanguageSet> sets;
  const auto root = cfg.resolve(cfg.corpus_root);
  for (const auto& [code, family] : chosen) {
    sets.push_back(load_language_set(root, code, family));
    if (sets.back().train.empty()) {
      throw ParseError(code + ": empty training set");
    }
  }
  return sets;
}

namespace {

void append(std::vector<InflectionSample>& dst,
            std::vector<InflectionSample> src) {
  dst.insert(dst.end(), std::make_move_iterator(src.begin()),
             std::make_move_iterator(src.end()));
}

StepData natural_union(std::span<const LanguageSet> sets) {
  StepData data;
  for (const auto& s : sets) {
    data.train.insert(data.train.end(), s.train.begin(), s.train.end());
    data.dev.insert(data.dev.end(), s.dev.begin(), s.dev.end());
  }
  data.counts = {{"natural", data.train.size()},
                 {"copy", 0},
                 {"stem", 0},
                 {"template", 0}};
  return data;
}

}  // namespace

StepData step1_data(std::span<const LanguageSet> sets, const RunConfig& cfg,
                    bool with_copy) {
  StepData data = natural_union(sets);
  if (!with_copy) return data;
  for (const auto& s : sets) {
    AugmentConfig ac = cfg.augment;
    ac.seed = derive_seed(cfg.seed, "copy/" + s.language);
    auto extra = copy_augment(s, ac);
    data.counts["copy"] += extra.size();
    append(data.train, std::move(extra));
  }
  return data;
}

StepData step2_data(std::span<const LanguageSet> family_sets,
                    const RunConfig& cfg, bool with_stem) {
  StepData data = natural_union(family_sets);
  if (!with_stem) return data;
  for (const auto& s : family_sets) {
    AugmentConfig ac = cfg.augment;
    ac.seed = derive_seed(cfg.seed, "stem/" + s.language);
    auto extra = stem_augment(s, unigram_distribution(s.train), ac);
    data.counts["stem"] += extra.size();
    append(data.train, std::move(extra));
  }
  return data;
}

StepData step3_data(std::span<const LanguageSet> family_sets,
                    const LanguageSet& target, const RunConfig& cfg,
                    bool with_templates) {
  StepData data = natural_union(std::span(&target, 1));
  if (!with_templates) return data;
  auto pool = induce_templates(target, detect_direction(target));
  auto siblings = family_templates(family_sets, target);
  pool.insert(pool.end(), siblings.begin(), siblings.end());
  GenerateOptions go;
  go.cap = cfg.template_cap;
  go.min_merges = cfg.min_merges;
  go.keep_prob = cfg.template_keep_prob;
  go.seed = derive_seed(cfg.seed, "template/" + target.language);
  auto extra = generate(pool, unigram_distribution(target.train), target, go);
  data.counts["template"] = extra.size();
  append(data.train, std::move(extra));
  return data;
}

// ---------------------------------------------------------------------------
// Execution

void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mu);
            if (next >= n) return;
            i = next++;
          }
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

std::string safe_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

class Logger {
 public:
  explicit Logger(std::ostream* out) : out_(out) {}
  void line(const std::string& text) {
    if (!out_) return;
    std::lock_guard lock(mu_);
    *out_ << text << '\n';
    out_->flush();
  }

 private:
  std::ostream* out_;
  std::mutex mu_;
};

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// One trained (or inherited) model and its bookkeeping.
struct Job {
  std::string id;
  std::string parent;  // "random-init" or a job id
  std::vector<std::string> ancestry;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> counts;
  TrainHistory history;
  std::string checkpoint;  // relative path
  std::string hash;
  std::optional<Model> model;
};

json job_json(const Job& job) {
  json history = json::array();
  for (const auto& e : job.history.epochs) {
    history.push_back({{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"dev_accuracy", e.dev_accuracy}});
  }
  std::size_t total = 0;
  for (const auto& [k, v] : job.counts) total += v;
  json counts = job.counts;
  counts["total"] = total;
  return {{"parent", job.parent},
          {"ancestry", job.ancestry},
          {"seed", job.seed},
          {"samples", counts},
          {"checkpoint", job.checkpoint},
          {"checkpoint_hash", job.hash},
          {"best_epoch", job.history.best_epoch},
          {"dev_accuracy", job.history.best_dev_accuracy},
          {"history", history}};
}

json metrics_json(const MetricsReport& m) {
  return {{"accuracy", m.accuracy},
          {"mean_levenshtein", m.mean_levenshtein},
          {"n", m.n}};
}

struct Context {
  const RunConfig& cfg;
  const std::filesystem::path& out_dir;
  const Vocabulary& vocab;
  const std::map<std::string, std::string>& families;
  Logger& log;
};

// Trains `job.model` (already initialized) on `data` and saves it.
void train_job(Job& job, const StepData& data, const std::string& step,
               Context& ctx) {
  job.counts = data.counts;
  auto train = encode_all(data.train, ctx.vocab);
  auto dev = encode_all(data.dev, ctx.vocab);
  TrainSettings ts = ctx.cfg.train;
  ts.seed = job.seed;
  ctx.log.line("[" + job.id + "] training on " +
               std::to_string(train.size()) + " samples, dev " +
               std::to_string(dev.size()));
  job.history = train_epochs(*job.model, train, dev, ts,
                             [&](const EpochRecord& r) {
                               ctx.log.line("[" + job.id + "] epoch " +
                                            std::to_string(r.epoch) + " loss " +
                                            fmt(r.train_loss, 4) + " dev " +
                                            fmt(r.dev_accuracy, 2));
                             });
  Checkpoint ckp{ctx.vocab, *job.model, ctx.families,
                 {{"id", job.id}, {"parent", job.parent}, {"step", step}}};
  const std::string bytes = serialize_checkpoint(ckp);
  job.hash = content_hash(bytes);
  job.checkpoint = "checkpoints/" + job.id + ".ckpt";
  write_text_file(ctx.out_dir / job.checkpoint, bytes);
}

Job start_job(std::string id, const Job* parent, const ArchConfig& arch,
              Context& ctx) {
  Job job;
  job.seed = derive_seed(ctx.cfg.seed, "train/" + id);
  if (parent) {
    job.parent = parent->id;
    job.ancestry = parent->ancestry;
    job.model.emplace(*parent->model);
  } else {
    job.parent = "random-init";
    job.model.emplace(arch, ctx.vocab.size(),
                      derive_seed(ctx.cfg.seed, "init/" + id));
  }
  job.id = std::move(id);
  return job;
}

std::string metrics_tsv(std::span<const LanguageResult> results) {
  std::string out = "language\tfamily\tarch\taccuracy\tmean_levenshtein\tn\n";
  for (const auto& r : results) {
    out += r.language + "\t" + r.family + "\t" + r.arch + "\t" +
           fmt(r.metrics.accuracy, 2) + "\t" +
           fmt(r.metrics.mean_levenshtein, 3) + "\t" +
           std::to_string(r.metrics.n) + "\n";
  }
  return out;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg,
                            const std::filesystem::path& out_dir,
                            const PipelineOptions& options) {
  const Plan plan = make_plan(cfg);
  Logger log(options.log);
  const auto sets = load_corpus(cfg);
  const auto groups = family_index(sets);
  std::map<std::string, std::string> families;
  for (const auto& s : sets) families[s.language] = s.family;

  // One vocabulary for the whole run, so fine-tuned models share embeddings.
  const StepData general = step1_data(sets, cfg, plan.copy);
  const Vocabulary vocab = Vocabulary::build(general.train);
  write_text_file(out_dir / "vocab.txt", vocab.save());
  Context ctx{cfg, out_dir, vocab, families, log};

  json runs = json::object();
  // Per language and architecture: the metrics of its final model.
  std::map<std::string, std::map<std::string, LanguageResult>> scored;

  for (const auto& [arch_name, arch] : plan.archs) {
    json arch_runs = json::object();
    std::optional<Job> step1;
    if (plan.step1) {
      step1 = start_job(arch_name + "/step1", nullptr, arch, ctx);
      step1->ancestry.push_back("step1");
      train_job(*step1, general, "1", ctx);
      arch_runs["step1"] = job_json(*step1);
    }

    std::vector<std::optional<Job>> step2(groups.size());
    if (plan.step2) {
      std::vector<StepData> data(groups.size());
      parallel_for(groups.size(), options.jobs, [&](std::size_t g) {
        std::vector<LanguageSet> members;
        for (auto i : groups[g].members) members.push_back(sets[i]);
        data[g] = step2_data(members, cfg, plan.stem);
        step2[g] = start_job(arch_name + "/step2/" + safe_name(groups[g].family),
                             step1 ? &*step1 : nullptr, arch, ctx);
        step2[g]->ancestry.push_back("step2");
        train_job(*step2[g], data[g], "2", ctx);
      });
      json fam = json::object();
      for (std::size_t g = 0; g < groups.size(); ++g) {
        fam[groups[g].family] = job_json(*step2[g]);
      }
      arch_runs["step2"] = fam;
    }

    // Parent of a language's final stage.
    auto parent_of = [&](std::size_t lang) -> const Job* {
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto& m = groups[g].members;
        if (std::find(m.begin(), m.end(), lang) != m.end() && step2[g]) {
          return &*step2[g];
        }
      }
      return step1 ? &*step1 : nullptr;
    };
    auto family_members = [&](std::size_t lang) {
      std::vector<LanguageSet> members;
      for (const auto& g : groups) {
        if (g.family != sets[lang].family) continue;
        for (auto i : g.members) members.push_back(sets[i]);
      }
      return members;
    };

    std::vector<LanguageResult> results(sets.size());
    std::vector<json> lang_json(sets.size());
    parallel_for(sets.size(), options.jobs, [&](std::size_t i) {
      const auto& set = sets[i];
      LanguageResult& r = results[i];
      r.language = set.language;
      r.family = set.family;
      r.arch = arch_name;
      const Job* final_job = parent_of(i);
      std::optional<Job> own;
      if (plan.step3) {
        auto members = family_members(i);
        auto data = step3_data(members, set, cfg, plan.templates);
        own = start_job(arch_name + "/step3/" + safe_name(set.language),
                        final_job, arch, ctx);
        own->ancestry.push_back("step3");
        train_job(*own, data, "3", ctx);
        lang_json[i] = job_json(*own);
        final_job = &*own;
      }
      r.checkpoint = final_job->checkpoint;
      r.metrics = set.dev.empty()
                      ? MetricsReport{set.language, 0.0, 0.0, 0}
                      : evaluate(*final_job->model, set.dev, vocab);
      json scored_json = metrics_json(r.metrics);
      scored_json["checkpoint"] = r.checkpoint;
      scored_json["ancestry"] = final_job->ancestry;
      if (plan.step3) {
        lang_json[i]["scored"] = scored_json;
      } else {
        lang_json[i] = {{"scored", scored_json}};
      }
    });
    json lang_runs = json::object();
    for (std::size_t i = 0; i < sets.size(); ++i) {
      lang_runs[sets[i].language] = lang_json[i];
      scored[sets[i].language][arch_name] = results[i];
    }
    arch_runs[plan.step3 ? "step3" : "scored"] = lang_runs;
    runs[arch_name] = arch_runs;
  }

  PipelineResult result;
  json selection = json::object();
  for (const auto& set : sets) {
    const auto& by_arch = scored[set.language];
    const LanguageResult* best = nullptr;
    // Small comes first in plan order, so strict '>' keeps it on ties.
    for (const auto& [name, arch] : plan.archs) {
      const auto& r = by_arch.at(name);
      if (!best || r.metrics.accuracy > best->metrics.accuracy) best = &r;
    }
    result.selected.push_back(*best);
    json s = metrics_json(best->metrics);
    s["arch"] = best->arch;
    s["family"] = best->family;
    s["checkpoint"] = best->checkpoint;
    selection[set.language] = s;
  }

  json counts = json::object();
  for (const auto& s : sets) {
    counts[s.language] = {{"family", s.family},
                          {"train", s.train.size()},
                          {"dev", s.dev.size()},
                          {"low_resource", s.low_resource()}};
  }
  json& m = result.manifest;
  m["config"] = run_config_to_json(cfg);
  m["plan"] = {{"step1", plan.step1}, {"step2", plan.step2},
               {"step3", plan.step3}, {"copy", plan.copy},
               {"stem", plan.stem},   {"templates", plan.templates}};
  m["seed"] = cfg.seed;
  m["vocabulary"] = {{"size", vocab.size()},
                     {"hash", content_hash(vocab.save())}};
  m["languages"] = counts;
  m["runs"] = runs;
  m["selection"] = selection;

  write_text_file(out_dir / "manifest.json", m.dump(2) + "\n");
  write_text_file(out_dir / "metrics.tsv", metrics_tsv(result.selected));
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

AblationResult ablate(const RunConfig& cfg,
                      std::span<const std::string> exclusions,
                      const std::filesystem::path& out_dir,
                      const PipelineOptions& options) {
  static const std::map<std::string, std::string> kColumn{
      {"copy", "Copy"},     {"stem", "Stem-mod"}, {"step1", "Step 1"},
      {"step2", "Step 2"},  {"step3", "Step 3"}};
  std::set<std::string> requested(exclusions.begin(), exclusions.end());
  for (const auto& e : requested) {
    if (!kColumn.count(e)) throw ConfigError("unknown exclusion '" + e + "'");
  }
  std::vector<std::string> order;
  for (const auto& name : exclusion_names()) {
    if (requested.count(name)) order.push_back(name);
  }

  AblationResult result;
  result.conditions.push_back("Result");
  std::vector<std::vector<LanguageResult>> columns;
  columns.push_back(run_pipeline(cfg, out_dir / "full", options).selected);
  for (const auto& name : order) {
    RunConfig variant = cfg;
    variant.exclude.insert(name);
    result.conditions.push_back(kColumn.at(name));
    columns.push_back(
        run_pipeline(variant, out_dir / ("no-" + name), options).selected);
  }
  for (std::size_t i = 0; i < columns.front().size(); ++i) {
    AblationRow row;
    row.family = columns.front()[i].family;
    row.language = columns.front()[i].language;
    for (const auto& col : columns) row.accuracy.push_back(col[i].metrics.accuracy);
    result.rows.push_back(std::move(row));
  }
  result.table = format_ablation_table(result.conditions, result.rows);
  write_text_file(out_dir / "ablation.txt", result.table);
  return result;
}

// ---------------------------------------------------------------------------
// Random search

ArchConfig sample_arch(Rng& rng) {
  ArchConfig a;
  a.num_layers = static_cast<int>(rng.uniform_int(1, 3));
  a.dropout = rng.uniform(0.1, 0.6);
  a.embedding_dim = static_cast<int>(rng.uniform_int(32, 256));
  a.hidden_size = static_cast<int>(rng.uniform_int(64, 1024));
  return a;
}

std::vector<SearchResult> random_search(const RunConfig& cfg, int budget,
                                        const std::filesystem::path& out_dir,
                                        const PipelineOptions& options) {
  if (budget < 1) throw ConfigError("search budget must be >= 1");
  cfg.validate();
  Logger log(options.log);
  RunConfig scoped = cfg;
  if (!cfg.tuning.languages.empty()) scoped.languages = cfg.tuning.languages;
  auto sets = load_corpus(scoped);
  for (auto& s : sets) {
    if (s.train.size() <= cfg.tuning.downsample) continue;
    std::vector<std::size_t> idx(s.train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(cfg.seed, "downsample/" + s.language));
    rng.shuffle(std::span(idx));
    idx.resize(cfg.tuning.downsample);
    std::sort(idx.begin(), idx.end());
    std::vector<InflectionSample> kept;
    for (auto i : idx) kept.push_back(s.train[i]);
    s.train = std::move(kept);
  }
  const StepData data = step1_data(sets, cfg, false);
  const Vocabulary vocab = Vocabulary::build(data.train);
  const auto train = encode_all(data.train, vocab);
  const auto dev = encode_all(data.dev, vocab);

  Rng space(derive_seed(cfg.seed, "search/space"));
  std::vector<SearchResult> results(static_cast<std::size_t>(budget));
  for (int t = 0; t < budget; ++t) {
    results[t].trial = t + 1;
    results[t].arch = sample_arch(space);
  }
  parallel_for(results.size(), options.jobs, [&](std::size_t t) {
    auto& r = results[t];
    const std::string id = "search/" + std::to_string(r.trial);
    Model model(r.arch, vocab.size(), derive_seed(cfg.seed, "init/" + id));
    TrainSettings ts = cfg.train;
    ts.seed = derive_seed(cfg.seed, "train/" + id);
    r.dev_accuracy = train_epochs(model, train, dev, ts).best_dev_accuracy;
    log.line("[" + id + "] layers " + std::to_string(r.arch.num_layers) +
             " emb " + std::to_string(r.arch.embedding_dim) + " hidden " +
             std::to_string(r.arch.hidden_size) + " dropout " +
             fmt(r.arch.dropout, 3) + " dev " + fmt(r.dev_accuracy, 2));
  });
  std::stable_sort(results.begin(), results.end(),
                   [](const SearchResult& a, const SearchResult& b) {
                     return a.dev_accuracy > b.dev_accuracy;
                   });
  std::string tsv = "rank\ttrial\tnum_layers\tdropout\tembedding_dim\thidden_size\tdev_accuracy\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    tsv += std::to_string(i + 1) + "\t" + std::to_string(r.trial) + "\t" +
           std::to_string(r.arch.num_layers) + "\t" + fmt(r.arch.dropout, 4) +
           "\t" + std::to_string(r.arch.embedding_dim) + "\t" +
           std::to_string(r.arch.hidden_size) + "\t" +
           fmt(r.dev_accuracy, 2) + "\n";
  }
  write_text_file(out_dir / "search.tsv", tsv);
  return results;
}

}  // namespace morph
