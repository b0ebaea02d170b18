// moralclip command-line tool: one subcommand per pipeline stage.

#include <signal.h>

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moralclip/agreement.hpp"
#include "moralclip/annotation.hpp"
#include "moralclip/binary_io.hpp"
#include "moralclip/checkpoint.hpp"
#include "moralclip/compass.hpp"
#include "moralclip/dataset.hpp"
#include "moralclip/evaluation.hpp"
#include "moralclip/features.hpp"
#include "moralclip/manifest.hpp"
#include "moralclip/synthetic.hpp"
#include "moralclip/text.hpp"
#include "moralclip/training.hpp"
#include "moralclip/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moralclip;

namespace {

enum class Role { Param, Input, Output };

struct Key {
  std::string name;
  std::string fallback;  // empty with optional=true means "not set"
  std::string help;
  Role role = Role::Param;
  bool optional = false;
};

// Resolves every key as flag > config file > default and remembers where
// each value came from for the run manifest.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "key=value configuration file");
  }

  void add(Key key) {
    auto* opt = app_->add_option("--" + key.name, flags_[key.name], key.help);
    if (!key.fallback.empty()) opt->default_str(key.fallback);
    options_[key.name] = opt;
    keys_.push_back(std::move(key));
  }

  void resolve() {
    std::map<std::string, std::string> from_config;
    if (!config_path_.empty()) from_config = read_config(config_path_);
    std::set<std::string> known;
    for (const auto& k : keys_) known.insert(k.name);
    for (const auto& [name, _] : from_config) {
      if (!known.contains(name)) throw ValidationError("config file: unknown key '" + name + "'");
    }
    for (const auto& k : keys_) {
      if (options_[k.name]->count() > 0) {
        values_[k.name] = flags_[k.name];
      } else if (auto it = from_config.find(k.name); it != from_config.end()) {
        values_[k.name] = it->second;
      } else if (!k.fallback.empty() || !k.optional) {
        values_[k.name] = k.fallback;
      }
    }
    for (const auto& k : keys_) {
      if (!k.optional && values_[k.name].empty()) throw ValidationError("--" + k.name + " is required");
    }
  }

  bool has(const std::string& name) const { return values_.contains(name) && !values_.at(name).empty(); }
  const std::string& str(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw ValidationError("--" + name + " is required");
    return it->second;
  }
  fs::path path(const std::string& name) const { return str(name); }
  double real(const std::string& name) const { return parse_real(str(name), "--" + name); }
  std::size_t count(const std::string& name) const {
    return static_cast<std::size_t>(parse_unsigned(str(name), "--" + name));
  }
  std::uint64_t u64(const std::string& name) const { return parse_unsigned(str(name), "--" + name); }
  bool flag(const std::string& name) const { return parse_bool(str(name), "--" + name); }

  json resolved() const {
    json out = json::object();
    for (const auto& k : keys_) {
      if (k.role == Role::Param && values_.contains(k.name)) out[k.name] = values_.at(k.name);
    }
    return out;
  }
  json paths(Role role) const {
    json out = json::object();
    for (const auto& k : keys_) {
      if (k.role == role && has(k.name)) out[k.name] = values_.at(k.name);
    }
    return out;
  }
  const std::string& config_path() const { return config_path_; }

 private:
  static std::map<std::string, std::string> read_config(const fs::path& file) {
    std::map<std::string, std::string> out;
    std::istringstream in(read_text_file(file));
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) {
        throw ValidationError("config file line " + std::to_string(line_no) + ": expected key=value");
      }
      std::string key = trim(t.substr(0, eq));
      std::replace(key.begin(), key.end(), '_', '-');
      out[key] = trim(t.substr(eq + 1));
    }
    return out;
  }

  CLI::App* app_;
  std::string config_path_;
  std::vector<Key> keys_;
  std::map<std::string, std::string> flags_;
  std::map<std::string, CLI::Option*> options_;
  std::map<std::string, std::string> values_;
};

std::string now_utc() { return utc_timestamp_now(); }

// Collects outputs for the run manifest.
struct Run {
  fs::path out;
  std::vector<std::string> outputs;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
  void text(const std::string& name, std::string_view content) { write_text_file(file(name), content); }
};

void write_run_manifest(const std::string& command, const Settings& s, const Run& run, const std::string& started,
                        const std::string& finished) {
  json doc = {{"command", command},
              {"tool_version", std::string(kVersion)},
              {"seed", s.has("seed") ? s.str("seed") : "0"},
              {"config", s.resolved()},
              {"config_file", s.config_path()},
              {"inputs", s.paths(Role::Input)},
              {"out", run.out.string()},
              {"outputs", run.outputs},
              {"started_at", started},
              {"finished_at", finished}};
  write_text_file(run.out / "run_manifest.json", doc.dump(2) + "\n");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

MoralScale parse_moral_scale(const std::string& s) {
  if (s == "literal") return MoralScale::Literal;
  if (s == "match") return MoralScale::MatchScale;
  throw ValidationError("--moral-scale must be 'literal' or 'match', got '" + s + "'");
}

Split parse_split_filter(const std::string& s, bool& all) {
  all = s == "all";
  return all ? Split::Unassigned : parse_split(s);
}

Manifest records_for(const Manifest& records, const std::string& split) {
  bool all = false;
  const Split sp = parse_split_filter(split, all);
  Manifest out = all ? records : select_split(records, sp);
  if (out.empty()) throw ValidationError("no records in split '" + split + "'");
  return out;
}

// --- key groups shared by several commands ---

void add_out(Settings& s) { s.add({"out", "", "output directory", Role::Output}); }
void add_seed(Settings& s) { s.add({"seed", "0", "seed for all randomness"}); }

void add_train_keys(Settings& s) {
  const TrainConfig d;
  s.add({"manifest", "", "manifest (JSONL)", Role::Input});
  s.add({"image-bank", "", "image feature bank (MCFB)", Role::Input});
  s.add({"text-bank", "", "text feature bank (MCFB), keyed by caption", Role::Input});
  s.add({"variant", "normal", "normal | augmented | swap_mild | swap_strong"});
  s.add({"lambda", format_real(d.lambda), "moral loss weight"});
  s.add({"temperature", format_real(d.temperature), "similarity temperature"});
  s.add({"epochs", std::to_string(d.epochs), "training epochs"});
  s.add({"batch-size", std::to_string(d.batch_size), "mini-batch size"});
  s.add({"learning-rate", format_real(d.learning_rate), "peak learning rate"});
  s.add({"min-learning-rate", format_real(d.min_learning_rate), "cosine floor"});
  s.add({"weight-decay", format_real(d.weight_decay), "decoupled weight decay"});
  s.add({"schedule", "cosine", "cosine | constant"});
  s.add({"include-diagonal", "false", "count matched pairs in the moral loss"});
  s.add({"moral-scale", "literal", "literal (cos/tau vs similarity) | match (cos vs similarity)"});
  s.add({"hidden-dim", std::to_string(d.hidden_dim), "encoder hidden width"});
  s.add({"output-dim", std::to_string(d.output_dim), "embedding dimension"});
  s.add({"bypass", "true", "linear bypass around the tanh layer"});
  s.add({"augment-copies", std::to_string(d.augment_copies), "replicas per train sample (augmented)"});
  s.add({"swap-mix-fraction", format_real(d.swap_mix_fraction), "fraction of train samples swapped"});
  s.add({"swap-group-cap", std::to_string(d.swap_group_cap), "mild swap cap per label group"});
  add_seed(s);
  add_out(s);
}

TrainConfig train_config(const Settings& s) {
  TrainConfig c;
  c.lambda = s.real("lambda");
  c.temperature = s.real("temperature");
  c.epochs = s.count("epochs");
  c.batch_size = s.count("batch-size");
  c.learning_rate = s.real("learning-rate");
  c.min_learning_rate = s.real("min-learning-rate");
  c.weight_decay = s.real("weight-decay");
  c.schedule = parse_schedule(s.str("schedule"));
  c.include_diagonal = s.flag("include-diagonal");
  c.moral_scale = parse_moral_scale(s.str("moral-scale"));
  c.hidden_dim = s.count("hidden-dim");
  c.output_dim = s.count("output-dim");
  c.bypass = s.flag("bypass");
  c.augment_copies = s.count("augment-copies");
  c.swap_mix_fraction = s.real("swap-mix-fraction");
  c.swap_group_cap = s.count("swap-group-cap");
  c.seed = s.u64("seed");
  validate(c);
  return c;
}

void add_embedding_inputs(Settings& s, bool checkpoint_required) {
  s.add({"manifest", "", "manifest (JSONL)", Role::Input});
  s.add({"image-bank", "", "image features or embeddings (MCFB)", Role::Input});
  s.add({"text-bank", "", "text features or embeddings (MCFB), keyed by caption", Role::Input});
  s.add({"checkpoint", "", "alignment checkpoint; when given the banks are encoded first", Role::Input,
         !checkpoint_required});
}

RetrievalCorpus load_corpus(const Settings& s, const Manifest& records) {
  const FeatureBank images = read_bank(s.path("image-bank"));
  const FeatureBank texts = read_bank(s.path("text-bank"));
  if (s.has("checkpoint")) {
    const AlignmentModel model = alignment_from_checkpoint(read_checkpoint(s.path("checkpoint")));
    return embed_records(model, records, images, texts);
  }
  return {gather_embeddings(records, images, Modality::Image), gather_embeddings(records, texts, Modality::Text)};
}

// --- commands ---

using Handler = std::function<void(const Settings&, Run&)>;

struct Command {
  std::string name;
  std::string help;
  std::function<void(Settings&)> keys;
  Handler run;
};

void cmd_preprocess(const Settings& s, Run& run) {
  const auto rows = parse_smid_csv(read_text_file(s.path("ratings")));
  std::map<std::string, std::vector<std::string>> captions;
  if (s.has("captions")) {
    try {
      captions = json::parse(read_text_file(s.path("captions"))).get<std::map<std::string, std::vector<std::string>>>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("captions file must map image ids to caption lists: ") + e.what());
    }
  }
  const auto result = preprocess_smid(rows, captions);
  write_manifest(result.records, run.file("manifest.jsonl"));
  run.text("exclusion_report.csv", result.report.to_csv());
  std::cout << result.report.retained_images << " of " << result.report.input_images << " images retained\n";
}

SyntheticCorpusConfig synth_config(const Settings& s) {
  SyntheticCorpusConfig c;
  c.n_samples = s.count("n-samples");
  c.feature_dim = s.count("dim");
  c.moral_signal_strength = s.real("signal");
  c.noise_scale = s.real("noise");
  c.semantic_strength = s.real("semantic");
  c.label_signal_strength = s.real("label-signal");
  c.foundation_rate = s.real("foundation-rate");
  c.captions_per_sample = s.count("captions");
  c.seed = s.u64("seed");
  c.label_distribution.clear();
  for (const auto& item : split_list(s.str("distribution"))) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ValidationError("--distribution entries must be class:probability");
    c.label_distribution[parse_polarity_class(item.substr(0, colon))] =
        parse_real(item.substr(colon + 1), "--distribution");
  }
  validate(c);
  return c;
}

void cmd_synth(const Settings& s, Run& run) {
  const auto corpus = synthesize_corpus(synth_config(s));
  write_manifest(corpus.records, run.file("manifest.jsonl"));
  write_bank(corpus.images, run.file("image_features.mcfb"));
  write_bank(corpus.texts, run.file("text_features.mcfb"));
  std::cout << corpus.records.size() << " samples, dim " << corpus.images.dim() << "\n";
}

std::string split_summary(const Manifest& records) {
  std::map<std::pair<std::string, std::string>, std::array<std::size_t, 3>> counts;
  for (const auto& r : records) {
    auto& c = counts[{std::string(to_string(r.source)), std::string(to_string(collapse_polarity(r.label)))}];
    if (r.split == Split::Train) ++c[0];
    if (r.split == Split::Val) ++c[1];
    if (r.split == Split::Test) ++c[2];
  }
  std::string out = "source,class,train,val,test\n";
  for (const auto& [k, c] : counts) {
    out += k.first + "," + k.second + "," + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
           std::to_string(c[2]) + "\n";
  }
  return out;
}

void cmd_split(const Settings& s, Run& run) {
  const auto out = stratified_split(read_manifest(s.path("manifest")),
                                    {s.real("val-fraction"), s.real("test-fraction"), s.u64("seed")});
  write_manifest(out, run.file("manifest.jsonl"));
  run.text("split_summary.csv", split_summary(out));
}

void cmd_augment(const Settings& s, Run& run) {
  const auto out = augment_replicate(read_manifest(s.path("manifest")), s.count("copies"), s.u64("seed"));
  write_manifest(out, run.file("manifest.jsonl"));
  std::cout << out.size() << " records\n";
}

void cmd_swap(const Settings& s, Run& run) {
  SwapConfig cfg;
  const std::string mode = s.str("mode");
  if (mode == "mild") {
    cfg = SwapConfig::mild(s.u64("seed"));
  } else if (mode == "strong") {
    cfg = SwapConfig::strong(s.u64("seed"));
  } else {
    throw ValidationError("--mode must be 'mild' or 'strong'");
  }
  cfg.mix_fraction = s.real("mix-fraction");
  if (cfg.mode == SwapMode::Mild) cfg.per_group_cap = s.count("group-cap");
  const auto result = mft_swap(read_manifest(s.path("manifest")), cfg);
  write_manifest(result.records, run.file("manifest.jsonl"));
  run.text("swap_log.csv", result.to_csv());
  std::cout << result.swaps.size() << " swaps of " << result.requested_targets << " requested\n";
}

json map_json(const RetrievalMap& m) {
  return {{"i2i", m.per_direction[0]}, {"t2t", m.per_direction[1]}, {"i2t", m.per_direction[2]},
          {"t2i", m.per_direction[3]}, {"mean", m.mean}};
}

void cmd_train(const Settings& s, Run& run) {
  const TrainConfig cfg = train_config(s);
  const Manifest records = read_manifest(s.path("manifest"));
  const FeatureBank images = read_bank(s.path("image-bank"));
  const FeatureBank texts = read_bank(s.path("text-bank"));
  const auto result = train(cfg, records, images, texts, parse_variant(s.str("variant")));

  write_checkpoint(alignment_checkpoint(result.best_model, cfg), run.file("alignment.mckp"));
  write_checkpoint(alignment_checkpoint(result.final_model, cfg), run.file("alignment_final.mckp"));
  run.text("history.csv", result.history.to_csv());
  if (result.swap) run.text("swap_log.csv", result.swap->to_csv());

  json summary = {{"best_epoch", result.best_epoch}, {"best_val_map", result.best_val_map},
                  {"train_samples", result.train_samples}};
  const Manifest test = select_split(records, Split::Test);
  if (!test.empty()) summary["test_map"] = map_json(retrieval_map(embed_records(result.best_model, test, images, texts)));
  run.text("summary.json", summary.dump(2) + "\n");
  std::cout << "best epoch " << result.best_epoch << ", validation MAP " << format_real(result.best_val_map) << "\n";
}

void cmd_sweep(const Settings& s, Run& run) {
  const TrainConfig cfg = train_config(s);
  std::vector<double> lambdas;
  for (const auto& item : split_list(s.str("lambdas"))) lambdas.push_back(parse_real(item, "--lambdas"));
  if (lambdas.empty()) throw ValidationError("--lambdas must list at least one value");
  const auto rows = lambda_sweep(cfg, read_manifest(s.path("manifest")), read_bank(s.path("image-bank")),
                                 read_bank(s.path("text-bank")), lambdas, parse_variant(s.str("variant")));
  run.text("sweep.csv", sweep_to_csv(rows));
  std::cout << sweep_to_csv(rows);
}

void cmd_eval(const Settings& s, Run& run) {
  const Manifest records = records_for(read_manifest(s.path("manifest")), s.str("split"));
  const RetrievalCorpus corpus = load_corpus(s, records);
  const std::size_t n_boot = s.count("bootstrap");
  std::uint64_t seed = s.u64("seed");

  std::vector<MetricReport> reports;
  // Each metric draws from its own seed so adding a metric never shifts another's resamples.
  auto add = [&](const std::string& name, const std::function<double()>& point,
                 const std::function<MetricReport(std::uint64_t)>& boot) {
    const std::uint64_t metric_seed = seed++;
    if (n_boot == 0) {
      reports.push_back({name, point(), 0.0, 0, 0});
    } else {
      reports.push_back(boot(metric_seed));
    }
  };
  for (const auto& metric : split_list(s.str("metrics"))) {
    if (metric == "map") {
      struct Dir {
        const char* name;
        const LabeledEmbeddings& q;
        const LabeledEmbeddings& c;
        bool exclude_self;
      };
      for (const Dir& d : {Dir{"map_i2i", corpus.images, corpus.images, true}, Dir{"map_t2t", corpus.texts, corpus.texts, true},
                           Dir{"map_i2t", corpus.images, corpus.texts, false},
                           Dir{"map_t2i", corpus.texts, corpus.images, false}}) {
        add(d.name, [&] { return mean_average_precision(d.q, d.c, d.exclude_self).value; },
            [&](std::uint64_t sd) { return bootstrap_map(d.name, d.q, d.c, d.exclude_self, n_boot, sd); });
      }
    } else if (metric == "dp") {
      add("dp_image", [&] { return discriminative_power(corpus.images); },
          [&](std::uint64_t sd) { return bootstrap_discriminative_power("dp_image", corpus.images, n_boot, sd); });
      add("dp_text", [&] { return discriminative_power(corpus.texts); },
          [&](std::uint64_t sd) { return bootstrap_discriminative_power("dp_text", corpus.texts, n_boot, sd); });
    } else if (metric == "silhouette") {
      add("silhouette_image", [&] { return silhouette(corpus.images); },
          [&](std::uint64_t sd) { return bootstrap_silhouette("silhouette_image", corpus.images, n_boot, sd); });
      add("silhouette_text", [&] { return silhouette(corpus.texts); },
          [&](std::uint64_t sd) { return bootstrap_silhouette("silhouette_text", corpus.texts, n_boot, sd); });
    } else {
      throw ValidationError("unknown metric '" + metric + "' (expected map, dp, silhouette)");
    }
  }
  const std::string csv = metric_reports_to_csv(reports);
  run.text("metrics.csv", csv);
  std::cout << csv;
}

void cmd_retrieve(const Settings& s, Run& run) {
  const Manifest records = records_for(read_manifest(s.path("manifest")), s.str("split"));
  const RetrievalCorpus corpus = load_corpus(s, records);
  const Direction dir = parse_direction(s.str("direction"));
  const std::size_t k = s.count("k");
  std::vector<std::string> queries;
  if (s.has("query")) {
    queries = split_list(s.str("query"));
  } else {
    for (const auto& r : records) queries.push_back(r.id);
  }
  std::string out;
  for (const auto& q : queries) out += retrieval_to_json_line(rank_retrieve(corpus, q, dir, k)) + "\n";
  run.text("retrieval.jsonl", out);
}

void cmd_export(const Settings& s, Run& run) {
  const Manifest records = records_for(read_manifest(s.path("manifest")), s.str("split"));
  const RetrievalCorpus corpus = load_corpus(s, records);
  write_bank(bank_from_matrix(corpus.images.vectors, corpus.images.ids), run.file("image_embeddings.mcfb"));
  write_bank(bank_from_matrix(corpus.texts.vectors, corpus.texts.ids), run.file("text_embeddings.mcfb"));
  std::string labels = "id,label,polarity_class,split,source\n";
  for (const auto& r : records) {
    labels += r.id + "," + serialize_label(r.label) + "," + std::string(to_string(collapse_polarity(r.label))) + "," +
              std::string(to_string(r.split)) + "," + std::string(to_string(r.source)) + "\n";
  }
  run.text("labels.csv", labels);
}

CompassConfig compass_config(const Settings& s) {
  CompassConfig c;
  c.learning_rate = s.real("learning-rate");
  c.batch_size = s.count("batch-size");
  c.max_epochs = s.count("max-epochs");
  c.plateau_factor = s.real("plateau-factor");
  c.plateau_patience = s.count("plateau-patience");
  c.early_stop_patience = s.count("early-stop-patience");
  c.early_stop_warmup = s.count("early-stop-warmup");
  c.trunk_dim = s.count("trunk-dim");
  c.seed = s.u64("seed");
  validate(c);
  return c;
}

void cmd_compass_train(const Settings& s, Run& run) {
  const CompassConfig cfg = compass_config(s);
  const Manifest records = read_manifest(s.path("manifest"));
  const FeatureBank images = read_bank(s.path("image-bank"));
  const auto result =
      train_compass(cfg, select_split(records, Split::Train), select_split(records, Split::Val), images);
  write_checkpoint(compass_checkpoint(result.model, cfg), run.file("compass.mckp"));
  run.text("compass_log.csv", result.log_csv());
  const Manifest test = select_split(records, Split::Test);
  if (!test.empty()) {
    const auto metrics = evaluate_compass(result.model, test, images);
    run.text("compass_metrics.csv", metrics.to_csv());
    std::cout << "test macro-F1 " << format_real(metrics.average.f1) << "\n";
  }
  std::cout << "best epoch " << result.best_epoch << " of " << result.log.size() << "\n";
}

void cmd_compass_label(const Settings& s, Run& run) {
  const CompassModel model = compass_from_checkpoint(read_checkpoint(s.path("checkpoint")));
  const Manifest records = read_manifest(s.path("manifest"));
  const FeatureBank images = read_bank(s.path("image-bank"));
  std::set<Source> sources;
  for (const auto& item : split_list(s.str("sources"))) sources.insert(parse_source(item));

  Manifest selected;
  for (const auto& r : records) {
    if (sources.contains(r.source)) selected.push_back(r);
  }
  const Manifest labeled = compass_label(model, selected, images);
  Manifest out = records;
  std::size_t next = 0;
  for (auto& r : out) {
    if (sources.contains(r.source)) r = labeled[next++];
  }
  write_manifest(out, run.file("manifest.jsonl"));
  std::cout << labeled.size() << " records labeled\n";
}

void cmd_agreement(const Settings& s, Run& run) {
  RatingsTable table = ratings_from_export_json(read_text_file(s.path("ratings")));
  const auto screening = screen_annotators(table, s.real("min-std"));
  run.text("screening.csv", screening.to_csv());
  if (s.flag("screen")) {
    for (const auto& a : screening.excluded) table.erase_annotator(a.annotator);
  }
  std::optional<std::map<std::string, MoralLabelVector>> model_labels;
  if (s.has("model-manifest")) {
    model_labels.emplace();
    for (const auto& r : read_manifest(s.path("model-manifest"))) (*model_labels)[r.image_feature_id] = r.label;
  }
  const auto report = agreement_report(table, model_labels ? &*model_labels : nullptr,
                                       {s.count("bootstrap"), s.u64("seed")});
  run.text("agreement.csv", report.to_csv());
  std::cout << report.to_csv();
}

void cmd_serve(const Settings& s, Run& run) {
  BatchPlan plan;
  if (s.has("plan")) {
    plan = BatchPlan::from_json(read_text_file(s.path("plan")));
  } else if (s.has("manifest")) {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& r : read_manifest(s.path("manifest"))) {
      if (seen.insert(r.image_feature_id).second) ids.push_back(r.image_feature_id);
    }
    BatchPlanOptions o;
    o.n_batches = s.count("n-batches");
    o.per_batch = s.count("per-batch");
    o.annotators_per_batch = s.count("annotators-per-batch");
    o.seed = s.u64("seed");
    plan = plan_batches(ids, o);
  } else {
    throw ValidationError("serve needs --plan or --manifest");
  }
  run.text("plan.json", plan.to_json());
  const fs::path store = s.has("store") ? s.path("store") : run.file("ratings.jsonl");
  const std::string instructions = s.has("instructions") ? read_text_file(s.path("instructions")) : default_instructions();
  AnnotationService service(plan, store, instructions, s.has("image-dir") ? s.path("image-dir") : fs::path{});
  AnnotationHttpServer server(service);

  // Handle SIGINT/SIGTERM synchronously on this thread.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const std::string host = s.str("host");
  const int bound = server.start_background(host, static_cast<int>(s.count("port")));
  if (bound < 0) throw IoError("cannot bind " + host + ":" + s.str("port"));
  std::cout << "serving on http://" << host << ":" << bound << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moralclip: moral alignment engine over precomputed features"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  const std::vector<Command> commands = {
      {"preprocess-smid", "turn SMID rating means into a labeled manifest",
       [](Settings& s) {
         s.add({"ratings", "", "ratings CSV", Role::Input});
         s.add({"captions", "", "JSON object mapping image id to captions", Role::Input, true});
         add_out(s);
       },
       cmd_preprocess},
      {"synth", "generate a synthetic corpus with planted moral structure",
       [](Settings& s) {
         const SyntheticCorpusConfig d;
         s.add({"n-samples", std::to_string(d.n_samples), "number of samples"});
         s.add({"dim", std::to_string(d.feature_dim), "feature dimension"});
         s.add({"signal", format_real(d.moral_signal_strength), "polarity-class direction magnitude"});
         s.add({"noise", format_real(d.noise_scale), "per-modality noise scale"});
         s.add({"semantic", format_real(d.semantic_strength), "shared semantic content scale"});
         s.add({"label-signal", format_real(d.label_signal_strength), "per-foundation direction magnitude"});
         s.add({"foundation-rate", format_real(d.foundation_rate), "activation rate of a foundation"});
         s.add({"captions", std::to_string(d.captions_per_sample), "captions per sample"});
         s.add({"distribution", "neutral:0.2,virtue:0.35,vice:0.35,mixed:0.1", "class:probability list"});
         add_seed(s);
         add_out(s);
       },
       cmd_synth},
      {"compass-train", "train the per-foundation polarity classifier",
       [](Settings& s) {
         const CompassConfig d;
         s.add({"manifest", "", "manifest with train/val splits", Role::Input});
         s.add({"image-bank", "", "image feature bank", Role::Input});
         s.add({"learning-rate", format_real(d.learning_rate), "initial learning rate"});
         s.add({"batch-size", std::to_string(d.batch_size), "mini-batch size"});
         s.add({"max-epochs", std::to_string(d.max_epochs), "epoch limit"});
         s.add({"plateau-factor", format_real(d.plateau_factor), "learning-rate reduction factor"});
         s.add({"plateau-patience", std::to_string(d.plateau_patience), "stalled epochs before reduction"});
         s.add({"early-stop-patience", std::to_string(d.early_stop_patience), "stalled epochs before stopping"});
         s.add({"early-stop-warmup", std::to_string(d.early_stop_warmup), "epochs before early stopping counts"});
         s.add({"trunk-dim", std::to_string(d.trunk_dim), "shared trunk width"});
         add_seed(s);
         add_out(s);
       },
       cmd_compass_train},
      {"compass-label", "weak-label records with a trained classifier",
       [](Settings& s) {
         s.add({"checkpoint", "", "compass checkpoint", Role::Input});
         s.add({"manifest", "", "manifest to label", Role::Input});
         s.add({"image-bank", "", "image feature bank", Role::Input});
         s.add({"sources", "imagenet,laion,synthetic", "sources whose records get relabeled"});
         add_seed(s);
         add_out(s);
       },
       cmd_compass_label},
      {"split", "stratified train/val/test assignment",
       [](Settings& s) {
         s.add({"manifest", "", "input manifest", Role::Input});
         s.add({"val-fraction", "0.05", "validation fraction"});
         s.add({"test-fraction", "0.05", "test fraction"});
         add_seed(s);
         add_out(s);
       },
       cmd_split},
      {"augment", "caption-rotation replicas of train records",
       [](Settings& s) {
         s.add({"manifest", "", "input manifest", Role::Input});
         s.add({"copies", "4", "replicas per train record"});
         add_seed(s);
         add_out(s);
       },
       cmd_augment},
      {"swap", "exchange images or captions within label groups",
       [](Settings& s) {
         s.add({"manifest", "", "input manifest", Role::Input});
         s.add({"mode", "mild", "mild | strong"});
         s.add({"mix-fraction", "0.75", "fraction of train records used as targets"});
         s.add({"group-cap", "500", "mild mode: swaps per label group"});
         add_seed(s);
         add_out(s);
       },
       cmd_swap},
      {"train", "train the dual projection encoder", add_train_keys, cmd_train},
      {"sweep", "train once per moral loss weight",
       [](Settings& s) {
         add_train_keys(s);
         s.add({"lambdas", "0.1,0.2,0.3,0.4,0.5", "comma-separated weights"});
       },
       cmd_sweep},
      {"eval", "moral MAP, discriminative power and silhouette with bootstrap errors",
       [](Settings& s) {
         add_embedding_inputs(s, false);
         s.add({"split", "test", "train | val | test | all"});
         s.add({"metrics", "map,dp,silhouette", "comma-separated metrics"});
         s.add({"bootstrap", "1000", "bootstrap resamples (0 for point estimates)"});
         add_seed(s);
         add_out(s);
       },
       cmd_eval},
      {"retrieve", "top-k retrieval dumps",
       [](Settings& s) {
         add_embedding_inputs(s, false);
         s.add({"split", "test", "train | val | test | all"});
         s.add({"direction", "i2i", "i2i | t2t | i2t | t2i"});
         s.add({"k", "10", "items per query"});
         s.add({"query", "", "comma-separated query ids (default: every record)", Role::Param, true});
         add_seed(s);
         add_out(s);
       },
       cmd_retrieve},
      {"agreement", "inter-annotator agreement and annotator screening",
       [](Settings& s) {
         s.add({"ratings", "", "annotation export JSON", Role::Input});
         s.add({"model-manifest", "", "manifest whose labels are compared with the majority", Role::Input, true});
         s.add({"min-std", format_real(kDefaultMinResponseStd), "minimum response standard deviation"});
         s.add({"screen", "true", "drop screened-out annotators before computing agreement"});
         s.add({"bootstrap", "1000", "bootstrap resamples for standard errors"});
         add_seed(s);
         add_out(s);
       },
       cmd_agreement},
      {"export-embeddings", "write embeddings and labels for external projection",
       [](Settings& s) {
         add_embedding_inputs(s, true);
         s.add({"split", "all", "train | val | test | all"});
         add_seed(s);
         add_out(s);
       },
       cmd_export},
      {"serve", "run the annotation HTTP service",
       [](Settings& s) {
         s.add({"plan", "", "batch plan JSON", Role::Input, true});
         s.add({"manifest", "", "manifest whose images are planned into batches", Role::Input, true});
         s.add({"store", "", "ratings JSONL (default: <out>/ratings.jsonl)", Role::Input, true});
         s.add({"image-dir", "", "directory holding image files", Role::Input, true});
         s.add({"instructions", "", "instructions text file", Role::Input, true});
         s.add({"n-batches", "4", "batches"});
         s.add({"per-batch", "50", "images per batch"});
         s.add({"annotators-per-batch", "3", "annotators per batch"});
         s.add({"host", "127.0.0.1", "bind address"});
         s.add({"port", "8080", "port (0 picks a free one)"});
         add_seed(s);
         add_out(s);
       },
       cmd_serve},
  };

  std::vector<std::unique_ptr<Settings>> settings;
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    settings.push_back(std::make_unique<Settings>(sub));
    c.keys(*settings.back());
    subs.push_back(sub);
  }

  if (argc <= 1) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    Settings& s = *settings[i];
    try {
      s.resolve();
      Run run{s.path("out"), {}};
      fs::create_directories(run.out);
      const std::string started = now_utc();
      if (commands[i].name == "serve") write_run_manifest(commands[i].name, s, run, started, "");
      commands[i].run(s, run);
      write_run_manifest(commands[i].name, s, run, started, now_utc());
      return 0;
    } catch (const ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "failed: " << e.what() << "\n";
      return 2;
    }
  }
  std::cerr << app.help();
  return 1;
}
