// Copyright 2026 The morphinfl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "morph/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "morph/augment.hpp"
#include "morph/checkpoint.hpp"
#include "morph/corpus.hpp"
#include "morph/encoding.hpp"
#include "morph/errors.hpp"
#include "morph/eval.hpp"
#include "morph/pipeline.hpp"
#include "morph/templates.hpp"
#include "morph/train.hpp"
#include "morph/utf8.hpp"

namespace morph {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Flags shared by the commands that run the pipeline.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::optional<std::string> arch;
  std::optional<std::string> steps;
  std::optional<std::string> exclude;
  bool enable_templates = false;
  std::optional<std::string> caps;
  std::optional<std::string> out;

  void attach(CLI::App* cmd, bool with_exclude = true) {
    cmd->add_option("--config", config, "Run config (JSON)")->required();
    cmd->add_option("--seed", seed, "Master seed");
    cmd->add_option("--jobs", jobs, "Parallel jobs")->check(CLI::PositiveNumber);
    cmd->add_option("--arch", arch, "small, large or both")
        ->check(CLI::IsMember({"small", "large", "both"}));
    cmd->add_option("--steps", steps, "Steps to run, e.g. 1,2,3");
    if (with_exclude) {
      cmd->add_option("--exclude", exclude,
                      "Exclusions: copy,stem,step1,step2,step3");
    }
    cmd->add_flag("--enable-templates", enable_templates,
                  "Add template samples in step 3");
    cmd->add_option("--caps", caps, "Cap overrides, e.g. copy=100,stem=50");
    cmd->add_option("--out", out, "Output directory");
  }

  RunConfig load(bool apply_exclude = true) const {
    RunConfig cfg = load_run_config(config);
    if (seed) cfg.seed = *seed;
    if (arch) cfg.arch = *arch;
    if (steps) {
      cfg.steps.clear();
      for (const auto& s : split_list(*steps, ',')) {
        try {
          std::size_t used = 0;
          int v = std::stoi(s, &used);
          if (used != s.size()) throw std::invalid_argument(s);
          cfg.steps.insert(v);
        } catch (const std::exception&) {
          throw ConfigError("--steps entry '" + s + "' is not a number");
        }
      }
    }
    if (apply_exclude && exclude) {
      for (const auto& e : split_list(*exclude, ',')) cfg.exclude.insert(e);
    }
    if (enable_templates) cfg.enable_templates = true;
    if (caps) apply_caps(cfg, *caps);
    if (out) cfg.out = *out;
    cfg.validate();
    return cfg;
  }

  fs::path out_dir(const RunConfig& cfg) const {
    // --out is taken relative to the working directory, the config's own
    // `out` relative to the config file.
    return out ? fs::path(*out) : cfg.resolve(cfg.out);
  }
};

const LanguageSet& find_language(const std::vector<LanguageSet>& sets,
                                 const std::string& code) {
  for (const auto& s : sets) {
    if (s.language == code) return s;
  }
  throw ConfigError("language '" + code + "' is not configured");
}

void emit(const std::optional<std::string>& path, const std::string& text,
          std::ostream& out) {
  if (path) {
    write_text_file(*path, text);
  } else {
    out << text;
  }
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  while (!text.empty() && text.back() == ' ') text.pop_back();
  return text;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw FileError("file not found: " + path);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Neural morphological inflection toolkit", "morphinfl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  // ingest
  Overrides ingest_o;
  std::optional<std::string> ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Parse and summarize corpora");
  ingest->add_option("--config", ingest_o.config, "Run config")->required();
  ingest->add_option("--out", ingest_out, "Write summary.tsv and vocab.txt here");

  // augment
  Overrides aug_o;
  std::string aug_lang, aug_kind;
  std::optional<std::string> aug_out;
  bool origin_column = false;
  auto* augment = app.add_subcommand("augment", "Write augmented samples");
  augment->add_option("--config", aug_o.config, "Run config")->required();
  augment->add_option("--lang", aug_lang, "Language code")->required();
  augment->add_option("--kind", aug_kind, "copy or stem")
      ->required()
      ->check(CLI::IsMember({"copy", "stem"}));
  augment->add_option("--seed", aug_o.seed, "Master seed");
  augment->add_option("--caps", aug_o.caps, "Cap overrides");
  augment->add_option("--out", aug_out, "Output file (default stdout)");
  augment->add_flag("--origin-column", origin_column,
                    "Append the origin marker as a fourth column");

  // induce
  Overrides ind_o;
  std::string ind_lang;
  std::optional<std::string> ind_out, ind_samples;
  auto* induce = app.add_subcommand("induce", "Induce templates for a language");
  induce->add_option("--config", ind_o.config, "Run config")->required();
  induce->add_option("--lang", ind_lang, "Language code")->required();
  induce->add_option("--seed", ind_o.seed, "Master seed");
  induce->add_option("--caps", ind_o.caps, "Cap overrides (template=N)");
  induce->add_option("--out", ind_out, "Template file (default stdout)");
  induce->add_option("--samples", ind_samples,
                     "Also write generated samples to this file");

  // train
  Overrides train_o;
  bool dry_run = false;
  auto* train = app.add_subcommand("train", "Run the three-step pipeline");
  train_o.attach(train);
  train->add_flag("--dry-run", dry_run, "Print the resolved plan and exit");

  // finetune
  std::string ft_ckpt, ft_train, ft_lang, ft_out;
  std::optional<std::string> ft_dev, ft_family, ft_config;
  std::uint64_t ft_seed = 1;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a checkpoint");
  finetune->add_option("--checkpoint", ft_ckpt, "Parent checkpoint")->required();
  finetune->add_option("--train", ft_train, "Training file")->required();
  finetune->add_option("--dev", ft_dev, "Dev file");
  finetune->add_option("--lang", ft_lang, "Language code")->required();
  finetune->add_option("--family", ft_family, "Family (default: checkpoint)");
  finetune->add_option("--config", ft_config, "Config for train settings");
  finetune->add_option("--seed", ft_seed, "Seed");
  finetune->add_option("--out", ft_out, "Output checkpoint")->required();

  // predict
  std::string pr_ckpt, pr_lemma, pr_tags, pr_lang;
  auto* predict = app.add_subcommand("predict", "Inflect one lemma");
  predict->add_option("--checkpoint", pr_ckpt, "Checkpoint")->required();
  predict->add_option("--lemma", pr_lemma, "Lemma")->required();
  predict->add_option("--tags", pr_tags, "Tags, e.g. V;COND;PL;2")->required();
  predict->add_option("--lang", pr_lang, "Language code")->required();

  // evaluate
  std::string ev_ckpt, ev_dev;
  std::optional<std::string> ev_lang;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a dev file");
  evaluate_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint")->required();
  evaluate_cmd->add_option("--dev", ev_dev, "Dev file")->required();
  evaluate_cmd->add_option("--lang", ev_lang, "Language (default: file stem)");

  // ablate
  Overrides abl_o;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the ablation matrix");
  abl_o.attach(ablate_cmd);

  // search
  Overrides search_o;
  std::optional<int> budget;
  auto* search = app.add_subcommand("search", "Random hyperparameter search");
  search_o.attach(search, false);
  search->add_option("--budget", budget, "Number of trials")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (*ingest) {
      RunConfig cfg = ingest_o.load();
      auto sets = load_corpus(cfg);
      std::string tsv = "language\tfamily\ttrain\tdev\tlow_resource\n";
      std::vector<InflectionSample> all;
      for (const auto& s : sets) {
        tsv += s.language + "\t" + s.family + "\t" +
               std::to_string(s.train.size()) + "\t" +
               std::to_string(s.dev.size()) + "\t" +
               (s.low_resource() ? "yes" : "no") + "\n";
        all.insert(all.end(), s.train.begin(), s.train.end());
      }
      out << tsv;
      if (ingest_out) {
        write_text_file(fs::path(*ingest_out) / "summary.tsv", tsv);
        write_text_file(fs::path(*ingest_out) / "vocab.txt",
                        Vocabulary::build(all).save());
      }
    } else if (*augment) {
      RunConfig cfg = aug_o.load();
      cfg.languages = {aug_lang};
      auto sets = load_corpus(cfg);
      const auto& set = sets.front();
      AugmentConfig ac = cfg.augment;
      std::vector<InflectionSample> samples;
      if (aug_kind == "copy") {
        ac.seed = derive_seed(cfg.seed, "copy/" + set.language);
        samples = copy_augment(set, ac);
      } else {
        ac.seed = derive_seed(cfg.seed, "stem/" + set.language);
        samples = stem_augment(set, unigram_distribution(set.train), ac);
      }
      emit(aug_out, serialize_unimorph(samples, origin_column), out);
    } else if (*induce) {
      RunConfig cfg = ind_o.load();
      auto sets = load_corpus(cfg);
      const auto& target = find_language(sets, ind_lang);
      auto templates = induce_templates(target, detect_direction(target));
      emit(ind_out, serialize_templates(templates), out);
      if (ind_samples) {
        std::vector<LanguageSet> family;
        for (const auto& s : sets) {
          if (s.family == target.family) family.push_back(s);
        }
        auto data = step3_data(family, target, cfg, true);
        std::vector<InflectionSample> generated;
        for (auto& s : data.train) {
          if (s.origin == Origin::kTemplateAug) generated.push_back(s);
        }
        write_text_file(*ind_samples, serialize_unimorph(generated, true));
      }
    } else if (*train) {
      RunConfig cfg = train_o.load();
      if (dry_run) {
        load_corpus(cfg);
        out << describe_plan(cfg);
        return kExitOk;
      }
      const auto dir = train_o.out_dir(cfg);
      run_pipeline(cfg, dir, PipelineOptions{train_o.jobs, &err});
      out << read_text_file(dir / "metrics.tsv");
    } else if (*finetune) {
      require_file(ft_ckpt);
      require_file(ft_train);
      if (ft_dev) require_file(*ft_dev);
      TrainSettings ts;
      if (ft_config) ts = load_run_config(*ft_config).train;
      ts.seed = ft_seed;
      Checkpoint ckp = load_checkpoint(ft_ckpt);
      std::string family = ft_family ? *ft_family : "";
      if (!ft_family && ckp.families.count(ft_lang)) family = ckp.families[ft_lang];
      auto train_samples = parse_unimorph(read_text_file(ft_train), ft_lang, family);
      std::vector<InflectionSample> dev_samples;
      if (ft_dev) dev_samples = parse_unimorph(read_text_file(*ft_dev), ft_lang, family);
      auto history = train_epochs(ckp.model, encode_all(train_samples, ckp.vocab),
                                  encode_all(dev_samples, ckp.vocab), ts,
                                  [&](const EpochRecord& r) {
                                    err << "epoch " << r.epoch << " loss "
                                        << r.train_loss << " dev "
                                        << r.dev_accuracy << '\n';
                                  });
      ckp.families[ft_lang] = family;
      ckp.info["parent"] = ft_ckpt;
      ckp.info["step"] = "finetune";
      save_checkpoint(ft_out, ckp);
      out << "best_epoch\t" << history.best_epoch << "\tdev_accuracy\t"
          << history.best_dev_accuracy << '\n';
    } else if (*predict) {
      require_file(pr_ckpt);
      Checkpoint ckp = load_checkpoint(pr_ckpt);
      InflectionSample sample;
      sample.lemma = decode_utf8(pr_lemma);
      sample.tags = split_list(pr_tags, ';');
      if (sample.lemma.empty() || sample.tags.empty()) {
        throw ConfigError("--lemma and --tags must be non-empty");
      }
      sample.language = pr_lang;
      auto fam = ckp.families.find(pr_lang);
      if (fam != ckp.families.end()) sample.family = fam->second;
      auto forms = predict_forms(ckp.model, ckp.vocab, std::span(&sample, 1));
      out << encode_utf8(forms.front()) << '\n';
    } else if (*evaluate_cmd) {
      require_file(ev_ckpt);
      require_file(ev_dev);
      Checkpoint ckp = load_checkpoint(ev_ckpt);
      std::string lang = ev_lang ? *ev_lang : fs::path(ev_dev).stem().string();
      auto fam = ckp.families.find(lang);
      auto dev = parse_unimorph(read_text_file(ev_dev), lang,
                                fam == ckp.families.end() ? "" : fam->second);
      if (dev.empty()) throw ConfigError("dev file has no samples");
      out << metrics_tsv_header()
          << metrics_tsv_row(evaluate(ckp.model, dev, ckp.vocab));
    } else if (*ablate_cmd) {
      RunConfig cfg = abl_o.load(false);
      std::vector<std::string> exclusions =
          abl_o.exclude ? split_list(*abl_o.exclude, ',') : exclusion_names();
      auto result = ablate(cfg, exclusions, abl_o.out_dir(cfg),
                           PipelineOptions{abl_o.jobs, &err});
      out << result.table;
    } else if (*search) {
      RunConfig cfg = search_o.load();
      auto results = random_search(cfg, budget ? *budget : cfg.tuning.budget,
                                   search_o.out_dir(cfg),
                                   PipelineOptions{search_o.jobs, &err});
      out << "rank\ttrial\tnum_layers\tdropout\tembedding_dim\thidden_size\tdev_accuracy\n";
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        char line[256];
        std::snprintf(line, sizeof line, "%zu\t%d\t%d\t%.4f\t%d\t%d\t%.2f\n",
                      i + 1, r.trial, r.arch.num_layers, r.arch.dropout,
                      r.arch.embedding_dim, r.arch.hidden_size, r.dev_accuracy);
        out << line;
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const FileError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace morph
