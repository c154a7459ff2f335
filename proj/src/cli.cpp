#include "artstyle/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <iostream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "artstyle/config.hpp"
#include "artstyle/dataset.hpp"
#include "artstyle/ensemble.hpp"
#include "artstyle/eval.hpp"
#include "artstyle/image_io.hpp"
#include "artstyle/imageproc.hpp"
#include "artstyle/metaclassifier.hpp"
#include "artstyle/submodel.hpp"

namespace artstyle {

namespace fs = std::filesystem;

namespace {

// Flag value if given, else config value, else fallback.
template <typename T>
std::optional<T> pick(const CLI::Option* flag, const T& flag_value, const std::optional<T>& config_value) {
  if (flag && flag->count() > 0) return flag_value;
  return config_value;
}

template <typename T>
T require(const std::optional<T>& value, const std::string& what) {
  if (!value) throw UsageError("missing " + what);
  return *value;
}

fs::path require_existing(const std::optional<fs::path>& path, const std::string& what) {
  const auto p = require(path, what);
  if (!fs::exists(p)) throw UsageError("file not found: " + p.string() + " (" + what + ")");
  return p;
}

struct Common {
  std::string config_path;
  ExperimentConfig config;

  void load() {
    if (!config_path.empty()) config = load_experiment_config(config_path);
  }

  // Output path from the flag, else <output.dir>/<default_name>.
  std::optional<fs::path> output(const CLI::Option* flag, const std::string& flag_value,
                                 const std::string& default_name) const {
    if (flag && flag->count() > 0) return fs::path(flag_value);
    if (config.output_dir) return *config.output_dir / default_name;
    return std::nullopt;
  }
};

struct LoadedData {
  Manifest manifest;
  fs::path base_dir;
};

LoadedData load_data(const fs::path& manifest_path, const std::optional<fs::path>& rules_path) {
  auto manifest = load_manifest(manifest_path);
  if (rules_path) manifest = curate(manifest, load_curation_rules(*rules_path));
  return {std::move(manifest), manifest_path.parent_path()};
}

fs::path image_path(const LoadedData& data, const ArtworkRecord& record) {
  fs::path p = record.image_ref;
  return p.is_relative() ? data.base_dir / p : p;
}

std::vector<const ArtworkRecord*> select_items(const Manifest& manifest, const std::optional<SplitAssignment>& split,
                                               const std::string& subset) {
  std::vector<const ArtworkRecord*> items;
  if (subset == "all") {
    for (const auto& r : manifest.records()) items.push_back(&r);
    return items;
  }
  if (!split) throw UsageError("subset '" + subset + "' needs a split assignment (--split)");
  const Split wanted = parse_split(subset);
  for (const auto& id : split->ids_in(wanted)) {
    const auto* r = manifest.find(id);
    if (!r) throw DataError("split refers to image '" + id + "' which is not in the manifest");
    items.push_back(r);
  }
  if (items.empty()) throw DataError("split '" + subset + "' is empty");
  return items;
}

std::vector<std::shared_ptr<const SubModel>> open_roster(const fs::path& roster_path, const Manifest& manifest) {
  std::vector<std::shared_ptr<const SubModel>> roster;
  for (const auto& d : load_roster(roster_path)) {
    if (d.class_count != manifest.class_count()) {
      throw DataError("sub-model '" + d.id + "' declares " + std::to_string(d.class_count) +
                      " classes but the manifest has " + std::to_string(manifest.class_count()));
    }
    roster.push_back(open_submodel(d, &manifest));
  }
  return roster;
}

bool roster_needs_images(const std::vector<std::shared_ptr<const SubModel>>& roster) {
  return std::any_of(roster.begin(), roster.end(), [](const auto& m) { return m->needs_image(); });
}

std::map<std::string, std::string> cache_digests(const fs::path& roster_path) {
  std::map<std::string, std::string> digests;
  for (const auto& d : load_roster(roster_path)) {
    if (const auto* c = std::get_if<CacheBackend>(&d.backend)) digests[d.id] = sha256_file(c->path);
  }
  return digests;
}

struct ReportOutputs {
  std::string json_path;
  std::string text_path;
  std::string confusion_path;
  std::string predictions_path;
  bool normalize = false;
  std::size_t top_k = 10;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--out", json_path, "Report JSON path (default: <output.dir>/<command>-report.json)");
    cmd->add_option("--text", text_path, "Also write the aligned text report here");
    cmd->add_option("--confusion-csv", confusion_path, "Also write the confusion matrix as CSV");
    cmd->add_option("--predictions", predictions_path, "Write per-item predictions and scores as CSV");
    cmd->add_flag("--normalize", normalize, "Rescale scores to sum to one in the predictions file (display only)");
    cmd->add_option("--top-k", top_k, "Number of confused pairs to report")->capture_default_str()->check(CLI::PositiveNumber);
  }
};

struct ItemPrediction {
  std::string image_id;
  std::size_t label = 0;
  std::size_t predicted = 0;
  std::vector<double> scores;
};

std::vector<ItemPrediction> predict_items(const EnsembleConfig& config, const LoadedData& data,
                                          const std::vector<const ArtworkRecord*>& items) {
  const bool need_images = roster_needs_images(config.roster);
  std::vector<ItemPrediction> out;
  out.reserve(items.size());
  for (const auto* r : items) {
    std::optional<RasterImage> image;
    if (need_images) image = load_image(image_path(data, *r));
    auto p = ensemble_predict(config, r->image_id, image ? &*image : nullptr);
    out.push_back({r->image_id, static_cast<std::size_t>(r->label), p.class_id, std::move(p.scores)});
  }
  return out;
}

void emit_report(const std::string& model_id, const std::string& subset, const Manifest& manifest,
                 const std::vector<ItemPrediction>& preds, const ReportOutputs& outputs,
                 const std::optional<fs::path>& json_path, std::ostream& out) {
  std::vector<std::size_t> predicted;
  std::vector<std::size_t> labels;
  for (const auto& p : preds) {
    predicted.push_back(p.predicted);
    labels.push_back(p.label);
  }
  const auto matrix = confusion_matrix(predicted, labels, manifest.class_count(), manifest.class_names());
  const auto report = make_report(model_id, subset, matrix, outputs.top_k);
  const auto text = report_to_text(report);
  if (json_path) write_file(*json_path, report_to_json(report));
  if (!outputs.text_path.empty()) write_file(outputs.text_path, text);
  if (!outputs.confusion_path.empty()) write_file(outputs.confusion_path, confusion_to_csv(matrix));
  if (!outputs.predictions_path.empty()) {
    std::string csv = "image_id,label,predicted";
    for (std::size_t c = 0; c < manifest.class_count(); ++c) csv += ",s_" + std::to_string(c);
    csv += '\n';
    for (const auto& p : preds) {
      csv += csv::quote(p.image_id) + ',' + std::to_string(p.label) + ',' + std::to_string(p.predicted);
      double sum = 0.0;
      for (double s : p.scores) sum += s;
      for (double s : p.scores) csv += ',' + format_double(outputs.normalize && sum > 0.0 ? s / sum : s);
      csv += '\n';
    }
    write_file(outputs.predictions_path, csv);
  }
  out << text;
}

void print_error(std::ostream& err, std::string_view kind, std::string_view message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Art style recognition with stacking ensembles", "artstyle"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "Experiment TOML file; flags override its values");
  };

  // shared flag storage
  std::string manifest_flag, rules_flag, split_flag, roster_flag, subset = "test", mode_flag = "average";
  std::string out_flag, image_flag, params_flag, meta_flag, cache_flag, model_id_flag, history_flag;
  std::vector<double> ratios_flag;
  std::uint64_t seed_flag = 0;
  int level = 1;
  std::size_t jobs = 1;
  std::vector<std::size_t> hidden_flag;
  double dropout_flag = 0.5, lr_flag = 0.01, momentum_flag = 0.9;
  std::size_t batch_flag = 64, epochs_flag = 200, patience_flag = 10;
  std::vector<double> weights_flag;
  std::vector<std::string> inputs;
  std::string csv_flag;
  ReportOutputs report_outputs;

  std::map<const CLI::App*, std::string> default_subset;

  auto add_manifest = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", manifest_flag, "Manifest CSV (image_id,image_path,class_name)");
    cmd->add_option("--rules", rules_flag, "Curation rules JSON applied to the manifest");
  };
  auto add_split = [&](CLI::App* cmd, const std::string& fallback) {
    cmd->add_option("--split", split_flag, "Split assignment CSV (image_id,split)");
    default_subset[cmd] = fallback;
    cmd->add_option("--subset", subset, "Items to use: train, val, test or all (default " + fallback + ")")
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
  };
  auto add_roster = [&](CLI::App* cmd) { cmd->add_option("--roster", roster_flag, "Sub-model roster JSON"); };

  auto* curate_cmd = app.add_subcommand("curate", "Apply merge/exclude rules to a manifest");
  add_config(curate_cmd);
  add_manifest(curate_cmd);
  auto* curate_out = curate_cmd->add_option("--out", out_flag, "Curated manifest CSV");

  auto* split_cmd = app.add_subcommand("split", "Stratified train/val/test split");
  add_config(split_cmd);
  add_manifest(split_cmd);
  auto* split_ratios = split_cmd->add_option("--ratios", ratios_flag, "Train,val,test fractions (default 0.8,0.1,0.1)")
                           ->delimiter(',')
                           ->expected(3);
  auto* split_seed = split_cmd->add_option("--seed", seed_flag, "Shuffle seed (default 0)");
  auto* split_out = split_cmd->add_option("--out", out_flag, "Split assignment CSV");

  auto* aug_cmd = app.add_subcommand("augment-preview", "Write an augmented copy of one image as PNG");
  aug_cmd->add_option("--image", image_flag, "Input PNG or JPEG")->required()->check(CLI::ExistingFile);
  aug_cmd->add_option("--level", level, "Augmentation level 1-4")->required()->check(CLI::Range(1, 4));
  aug_cmd->add_option("--params", params_flag, "Augmentation magnitudes JSON")->check(CLI::ExistingFile);
  auto* aug_seed = aug_cmd->add_option("--seed", seed_flag, "Random seed (default 0)");
  aug_cmd->add_option("--out", out_flag, "Output PNG")->required();

  auto* predict_cmd = app.add_subcommand("predict", "Run external/synthetic sub-models and write prediction caches");
  add_config(predict_cmd);
  add_manifest(predict_cmd);
  add_split(predict_cmd, "all");
  add_roster(predict_cmd);
  auto* predict_out = predict_cmd->add_option("--out-dir", out_flag, "Directory for <model>.csv caches and roster.json");
  predict_cmd->add_option("--jobs", jobs, "Parallel workers")->capture_default_str()->check(CLI::PositiveNumber);

  auto* ensemble_cmd = app.add_subcommand("ensemble", "Evaluate a simple (average/max/min) ensemble");
  add_config(ensemble_cmd);
  add_manifest(ensemble_cmd);
  add_split(ensemble_cmd, "test");
  add_roster(ensemble_cmd);
  auto* ensemble_mode = ensemble_cmd->add_option("--mode", mode_flag, "average, max or min (default average)");
  report_outputs.add_to(ensemble_cmd);

  auto* train_cmd = app.add_subcommand("train-meta", "Train the stacking meta-classifier on frozen sub-model outputs");
  add_config(train_cmd);
  add_manifest(train_cmd);
  train_cmd->add_option("--split", split_flag, "Split assignment CSV (image_id,split)");
  add_roster(train_cmd);
  auto* train_hidden = train_cmd->add_option("--hidden", hidden_flag, "Hidden layer widths, one or two (default 64)")->delimiter(',');
  auto* train_dropout = train_cmd->add_option("--dropout", dropout_flag, "Dropout rate (default 0.5)");
  auto* train_lr = train_cmd->add_option("--lr", lr_flag, "Learning rate (default 0.01)");
  auto* train_momentum = train_cmd->add_option("--momentum", momentum_flag, "Momentum (default 0.9)");
  auto* train_batch = train_cmd->add_option("--batch-size", batch_flag, "Mini-batch size (default 64)");
  auto* train_epochs = train_cmd->add_option("--epochs", epochs_flag, "Maximum epochs (default 200)");
  auto* train_patience = train_cmd->add_option("--patience", patience_flag, "Early-stopping patience in epochs (default 10)");
  auto* train_weights = train_cmd->add_option("--class-weights", weights_flag, "Per-class loss weights")->delimiter(',');
  auto* train_seed = train_cmd->add_option("--seed", seed_flag, "Initialization and shuffling seed (default 0)");
  auto* train_out = train_cmd->add_option("--out", out_flag, "Checkpoint JSON (default: <output.dir>/meta.json)");
  train_cmd->add_option("--history", history_flag, "Training history CSV (default: next to the checkpoint)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a cache, a simple ensemble or a stacking ensemble");
  add_config(eval_cmd);
  add_manifest(eval_cmd);
  add_split(eval_cmd, "test");
  add_roster(eval_cmd);
  auto* eval_roster = eval_cmd->get_option("--roster");
  auto* eval_cache = eval_cmd->add_option("--cache", cache_flag, "Evaluate one prediction cache directly")->check(CLI::ExistingFile);
  auto* eval_meta = eval_cmd->add_option("--meta", meta_flag, "Stacking checkpoint (uses the roster)");
  auto* eval_mode = eval_cmd->add_option("--mode", mode_flag, "Simple combination mode when no --meta is given");
  eval_cmd->add_option("--model-id", model_id_flag, "Identifier recorded in the report");
  eval_cache->excludes(eval_roster)->excludes(eval_meta)->excludes(eval_mode);
  report_outputs.add_to(eval_cmd);

  auto* report_cmd = app.add_subcommand("report", "Summarize evaluation reports");
  report_cmd->add_option("inputs", inputs, "Report JSON files")->required()->check(CLI::ExistingFile);
  auto* report_out = report_cmd->add_option("--out", out_flag, "Text summary path (default: stdout)");
  report_cmd->add_option("--csv", csv_flag, "CSV summary with per-class accuracy");

  std::vector<std::string> argv_store{"artstyle"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    common.load();
    const auto& cfg = common.config;
    CLI::App* active = app.get_subcommands().front();
    auto flag = [&](const std::string& name) { return active->get_option_no_throw(name); };
    if (auto it = default_subset.find(active); it != default_subset.end() && flag("--subset")->count() == 0) {
      subset = it->second;
    }
    auto manifest_path = [&] {
      return require_existing(pick<fs::path>(flag("--manifest"), manifest_flag, cfg.manifest), "--manifest (or [data] manifest)");
    };
    auto rules_path = [&]() -> std::optional<fs::path> {
      auto p = pick<fs::path>(flag("--rules"), rules_flag, cfg.rules);
      if (p && !fs::exists(*p)) throw UsageError("file not found: " + p->string() + " (--rules)");
      return p;
    };
    auto load_split_opt = [&]() -> std::optional<SplitAssignment> {
      auto p = pick<fs::path>(flag("--split"), split_flag, cfg.split_file);
      if (!p) return std::nullopt;
      if (!fs::exists(*p)) throw UsageError("file not found: " + p->string() + " (--split)");
      return load_split_assignment(*p);
    };
    auto roster_path = [&] {
      return require_existing(pick<fs::path>(flag("--roster"), roster_flag, cfg.roster), "--roster (or [ensemble] roster)");
    };

    if (curate_cmd->parsed()) {
      const auto mpath = manifest_path();
      const auto rpath = require_existing(rules_path(), "--rules (or [data] rules)");
      const auto target = require(common.output(curate_out, out_flag, "manifest.curated.csv"), "--out");
      const auto curated = curate(load_manifest(mpath), load_curation_rules(rpath));
      write_file(target, serialize_manifest(curated));
      out << "curated manifest: " << curated.class_count() << " classes, " << curated.size() << " records -> "
          << target.string() << '\n';
      for (const auto& c : class_histogram(curated)) out << "  " << c.label.name << ": " << c.count << '\n';
    } else if (split_cmd->parsed()) {
      const auto data = load_data(manifest_path(), rules_path());
      std::optional<SplitRatios> ratios;
      if (split_ratios->count() > 0) ratios = SplitRatios{ratios_flag[0], ratios_flag[1], ratios_flag[2]};
      else ratios = cfg.ratios;
      const auto seed = pick<std::uint64_t>(split_seed, seed_flag, cfg.split_seed).value_or(0);
      auto target = split_out->count() > 0 ? std::optional<fs::path>(out_flag) : cfg.split_file;
      if (!target) target = common.output(nullptr, "", "split.csv");
      const auto assignment = stratified_split(data.manifest, ratios.value_or(SplitRatios{}), seed);
      write_file(require(target, "--out"), serialize_split(assignment));
      std::array<std::size_t, 3> totals{};
      for (const auto& [id, s] : assignment.entries()) ++totals[static_cast<std::size_t>(s)];
      out << "split: train " << totals[0] << ", val " << totals[1] << ", test " << totals[2] << " -> "
          << target->string() << '\n';
    } else if (aug_cmd->parsed()) {
      AugmentationParams params;
      if (!params_flag.empty()) {
        try {
          params = nlohmann::json::parse(read_file(params_flag)).get<AugmentationParams>();
        } catch (const nlohmann::json::exception& e) {
          throw DataError(params_flag + ": " + e.what());
        }
      }
      const auto image = load_image(image_flag);
      Rng rng(aug_seed->count() > 0 ? seed_flag : 0);
      const auto augmented = augment(image, AugmentationLevel(level), params, rng);
      save_png(augmented, out_flag);
      out << "level " << level << " preview " << augmented.width() << "x" << augmented.height() << " -> " << out_flag
          << '\n';
    } else if (predict_cmd->parsed()) {
      const auto data = load_data(manifest_path(), rules_path());
      const auto split = load_split_opt();
      const auto items = select_items(data.manifest, split, subset);
      const auto rpath = roster_path();
      const auto descriptors = load_roster(rpath);
      const auto out_dir = require(common.output(predict_out, out_flag, "caches"), "--out-dir");
      fs::create_directories(out_dir);
      std::vector<SubModelDescriptor> emitted;
      for (const auto& d : descriptors) {
        if (d.class_count != data.manifest.class_count()) {
          throw DataError("sub-model '" + d.id + "' declares " + std::to_string(d.class_count) +
                          " classes but the manifest has " + std::to_string(data.manifest.class_count()));
        }
        if (std::holds_alternative<CacheBackend>(d.backend)) {
          emitted.push_back(d);
          continue;
        }
        const auto model = open_submodel(d, &data.manifest);
        std::vector<std::optional<ProbabilityVector>> results(items.size());
        std::atomic<std::size_t> next{0};
        std::mutex failure_mutex;
        std::exception_ptr failure;
        auto worker = [&] {
          for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
            try {
              std::optional<RasterImage> image;
              if (model->needs_image()) image = load_image(image_path(data, *items[i]));
              results[i] = model->predict(items[i]->image_id, image ? &*image : nullptr);
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
              next = items.size();
            }
          }
        };
        {
          std::vector<std::jthread> pool;
          for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
          worker();
        }
        if (failure) std::rethrow_exception(failure);
        std::vector<std::pair<std::string, ProbabilityVector>> rows;
        for (std::size_t i = 0; i < items.size(); ++i) rows.emplace_back(items[i]->image_id, *results[i]);
        const auto cache_file = out_dir / (d.id + ".csv");
        write_file(cache_file, serialize_prediction_cache(rows, d.class_count));
        emitted.push_back({d.id, d.input_spec, CacheBackend{d.id + ".csv"}, d.class_count});
        out << "cached " << rows.size() << " predictions for '" << d.id << "' -> " << cache_file.string() << '\n';
      }
      for (auto& d : emitted) {
        if (auto* c = std::get_if<CacheBackend>(&d.backend); c && c->path.is_absolute()) {
          c->path = fs::relative(c->path, fs::absolute(out_dir));
        }
      }
      write_file(out_dir / "roster.json", serialize_roster(emitted));
    } else if (ensemble_cmd->parsed()) {
      const auto data = load_data(manifest_path(), rules_path());
      const auto split = load_split_opt();
      const auto items = select_items(data.manifest, split, subset);
      EnsembleConfig config;
      config.roster = open_roster(roster_path(), data.manifest);
      const auto mode = parse_mode(pick<std::string>(ensemble_mode, mode_flag, cfg.mode).value_or("average"));
      config.strategy = mode;
      const auto preds = predict_items(config, data, items);
      emit_report("ensemble:" + std::string(mode_name(mode)), subset, data.manifest, preds, report_outputs,
                  common.output(flag("--out"), report_outputs.json_path, "ensemble-report.json"), out);
    } else if (train_cmd->parsed()) {
      const auto data = load_data(manifest_path(), rules_path());
      const auto split = load_split_opt();
      if (!split) throw UsageError("missing --split (or [split] file)");
      const auto rpath = roster_path();
      const auto digests_before = cache_digests(rpath);
      const auto roster = open_roster(rpath, data.manifest);
      const bool need_images = roster_needs_images(roster);

      auto features_for = [&](Split which) {
        FeatureSet set;
        for (const auto* r : select_items(data.manifest, split, std::string(split_name(which)))) {
          std::optional<RasterImage> image;
          if (need_images) image = load_image(image_path(data, *r));
          const auto stacked = stack_features(collect_outputs(roster, r->image_id, image ? &*image : nullptr));
          set.add(stacked.values, r->label);
        }
        return set;
      };
      const auto train_set = features_for(Split::Train);
      const auto val_set = features_for(Split::Validation);

      const auto hidden = pick<std::vector<std::size_t>>(train_hidden, hidden_flag, cfg.hidden_widths)
                              .value_or(std::vector<std::size_t>{64});
      const auto dropout = pick<double>(train_dropout, dropout_flag, cfg.dropout).value_or(0.5);
      const auto layout = LayerLayout::for_stack(roster.size(), data.manifest.class_count(), hidden, dropout);
      TrainConfig tc;
      tc.learning_rate = pick<double>(train_lr, lr_flag, cfg.learning_rate).value_or(tc.learning_rate);
      tc.momentum = pick<double>(train_momentum, momentum_flag, cfg.momentum).value_or(tc.momentum);
      tc.batch_size = pick<std::size_t>(train_batch, batch_flag, cfg.batch_size).value_or(tc.batch_size);
      tc.max_epochs = pick<std::size_t>(train_epochs, epochs_flag, cfg.max_epochs).value_or(tc.max_epochs);
      tc.early_stop_patience = pick<std::size_t>(train_patience, patience_flag, cfg.patience).value_or(tc.early_stop_patience);
      tc.class_weights = pick<std::vector<double>>(train_weights, weights_flag, cfg.class_weights).value_or(std::vector<double>{});
      const auto seed = pick<std::uint64_t>(train_seed, seed_flag, cfg.train_seed).value_or(0);
      tc.seed = derive_seed(seed, 1);

      const auto result = train_meta(init_meta(layout, seed), train_set, val_set, tc);

      const auto checkpoint = train_out->count() > 0 ? std::optional<fs::path>(out_flag)
                                                     : (cfg.checkpoint ? cfg.checkpoint : common.output(nullptr, "", "meta.json"));
      const auto ckpt = require(checkpoint, "--out (or [meta] checkpoint)");
      write_file(ckpt, serialize_checkpoint(result.model));
      const fs::path history = history_flag.empty() ? fs::path(ckpt).replace_extension(".history.csv") : fs::path(history_flag);
      write_file(history, serialize_history(result.history));

      if (cache_digests(rpath) != digests_before) {
        throw RuntimeFailure("a prediction cache changed during meta-classifier training");
      }
      const auto& best = result.history.epochs[result.history.best_epoch - 1];
      out << "trained " << layout.input_dim << "-input meta-classifier for " << result.history.epochs.size()
          << " epochs; best epoch " << result.history.best_epoch << " (val accuracy "
          << format_double(best.validation_accuracy) << ") -> " << ckpt.string() << '\n';
    } else if (eval_cmd->parsed()) {
      const auto data = load_data(manifest_path(), rules_path());
      const auto split = load_split_opt();
      const auto items = select_items(data.manifest, split, subset);
      EnsembleConfig config;
      std::string model_id;
      if (eval_cache->count() > 0) {
        SubModelDescriptor d{fs::path(cache_flag).stem().string(), {}, CacheBackend{cache_flag}, data.manifest.class_count()};
        config.roster.push_back(open_submodel(d, &data.manifest));
        config.strategy = CombinationMode::Average;
        model_id = d.id;
      } else {
        config.roster = open_roster(roster_path(), data.manifest);
        auto meta_path = pick<fs::path>(eval_meta, meta_flag, std::nullopt);
        if (meta_path) {
          if (!fs::exists(*meta_path)) throw UsageError("file not found: " + meta_path->string() + " (--meta)");
          config.strategy = std::make_shared<const MetaClassifier>(load_checkpoint(*meta_path));
          model_id = "stacking:" + meta_path->stem().string();
        } else {
          const auto mode = parse_mode(pick<std::string>(eval_mode, mode_flag, cfg.mode).value_or("average"));
          config.strategy = mode;
          model_id = config.roster.size() == 1 ? config.roster.front()->id() : "ensemble:" + std::string(mode_name(mode));
        }
      }
      if (!model_id_flag.empty()) model_id = model_id_flag;
      const auto preds = predict_items(config, data, items);
      emit_report(model_id, subset, data.manifest, preds, report_outputs,
                  common.output(flag("--out"), report_outputs.json_path, "evaluate-report.json"), out);
    } else if (report_cmd->parsed()) {
      std::vector<EvaluationReport> reports;
      for (const auto& path : inputs) {
        try {
          reports.push_back(report_from_json(read_file(path)));
        } catch (const DataError& e) {
          throw DataError(path + ": " + e.what());
        }
      }
      std::size_t width = 5;
      for (const auto& r : reports) width = std::max(width, r.model_id.size());
      std::ostringstream text;
      text << std::string("model") + std::string(width - 5, ' ') << "  split    items  accuracy\n";
      for (const auto& r : reports) {
        char line[64];
        std::snprintf(line, sizeof line, "  %-5s  %7llu  %7.2f%%", r.split.c_str(),
                      static_cast<unsigned long long>(r.confusion.total()), 100.0 * r.overall_accuracy);
        text << r.model_id << std::string(width - r.model_id.size(), ' ') << line << '\n';
      }
      if (report_out->count() > 0) write_file(out_flag, text.str());
      out << text.str();
      if (!csv_flag.empty()) {
        std::string csv = "model_id,split,items,accuracy";
        const auto& names = reports.front().confusion.class_names();
        for (const auto& n : names) csv += ',' + csv::quote(n);
        csv += '\n';
        for (const auto& r : reports) {
          if (r.confusion.class_names() != names) throw DataError("report: inputs use different class vocabularies");
          csv += csv::quote(r.model_id) + ',' + r.split + ',' + std::to_string(r.confusion.total()) + ',' +
                 format_double(r.overall_accuracy);
          for (const auto& a : r.per_class_accuracy) csv += ',' + (a ? format_double(*a) : std::string());
          csv += '\n';
        }
        write_file(csv_flag, csv);
      }
    }
  } catch (const UsageError& e) {
    print_error(err, "usage", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    print_error(err, "data", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    print_error(err, "runtime", e.what());
    return kExitRuntime;
  }
  return kExitSuccess;
}

}  // namespace artstyle
