#include "hmt/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hmt/checkpoint.hpp"
#include "hmt/error.hpp"
#include "hmt/eval.hpp"
#include "hmt/gradcheck.hpp"
#include "hmt/report.hpp"
#include "hmt/synthetic.hpp"
#include "hmt/train.hpp"
#include "json.hpp"

namespace hmt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kGradTolerance = 1e-4;

// An option whose value may also come from the JSON config file. Flags given
// on the command line win over config values.
struct Binding {
  std::string key;
  CLI::Option* option;
  std::function<void(const json&)> assign;
};

class Bindings {
 public:
  explicit Bindings(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* option(const std::string& key, T& target, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + key, target, help)->capture_default_str();
    list_.push_back({key, opt, [&target](const json& v) { target = v.get<T>(); }});
    return opt;
  }

  CLI::Option* flag(const std::string& key, bool& target, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + key, target, help);
    list_.push_back({key, opt, [&target](const json& v) { target = v.get<bool>(); }});
    return opt;
  }

  void apply_config(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      std::string key = it.key();
      std::replace(key.begin(), key.end(), '_', '-');
      auto found = std::find_if(list_.begin(), list_.end(), [&](const Binding& b) { return b.key == key; });
      if (found == list_.end()) throw ConfigError("config file " + path + ": unknown key '" + it.key() + "'");
      if (found->option->count() > 0) continue;
      try {
        found->assign(it.value());
      } catch (const json::exception& e) {
        throw ConfigError("config file " + path + ": bad value for '" + it.key() + "': " + e.what());
      }
      given_.push_back(key);
    }
  }

  // True when the value came from the command line or the config file.
  bool given(const std::string& key) const {
    for (const auto& b : list_) {
      if (b.key == key && b.option->count() > 0) return true;
    }
    return std::find(given_.begin(), given_.end(), key) != given_.end();
  }

 private:
  CLI::App* app_;
  std::vector<Binding> list_;
  std::vector<std::string> given_;
};

std::uint64_t resolve_seed(const Bindings& b, std::uint64_t flag_value) {
  if (b.given("seed")) return flag_value;
  if (const char* env = std::getenv("HMT_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("HMT_SEED must be an unsigned integer");
    return v;
  }
  return flag_value;
}

struct TrainFlags {
  std::string data;
  std::string labels;
  std::string variant = "hmt-4";
  bool frame_level = false;
  bool two_vector_fusion = false;
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t lr_drop_epoch = 150;
  double lr_drop_factor = 10.0;
  std::size_t batch_size = 16;
  double threshold = 0.1;
  std::size_t hidden = 256;
  std::uint64_t seed = 1;
  std::string out_dir = "runs";
  std::string config;

  void bind(CLI::App* app, Bindings& b) {
    b.option("data", data, "Dataset file (JSON Lines)");
    b.option("labels", labels, "Label-set file (JSON)");
    b.option("variant", variant, "Method: sep, joint-1l, hmt-3a, hmt-3b, hmt-4");
    b.flag("frame-level", frame_level, "Use only the middle frame of each sequence");
    b.flag("two-vector-fusion", two_vector_fusion, "HMT-3a: fuse face and body scores only");
    b.option("epochs", epochs, "Training epochs");
    b.option("lr", lr, "Initial learning rate (Adam)");
    b.option("lr-drop-epoch", lr_drop_epoch,
             "0-based epoch from which lr is divided by the drop factor (default: 3/4 of epochs)");
    b.option("lr-drop-factor", lr_drop_factor, "Learning-rate divisor at the drop epoch");
    b.option("batch-size", batch_size, "Samples per mini-batch");
    b.option("threshold", threshold, "Keypoint confidence threshold (0.1 BRED, 0.3 GEMEP)");
    b.option("hidden", hidden, "Body branch hidden units");
    b.option("seed", seed, "Random seed (falls back to $HMT_SEED)");
    b.option("out-dir", out_dir, "Output directory");
    app->add_option("--config", config, "JSON config file; command-line flags override its values");
  }

  TrainConfig to_config(const Bindings& b) const {
    TrainConfig c;
    c.epochs = epochs;
    c.lr = lr;
    c.lr_drop_epoch = lr_drop_epoch;
    if (!b.given("lr-drop-epoch")) {
      c.lr_drop_epoch = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.75 * epochs)));
    }
    c.lr_drop_factor = lr_drop_factor;
    c.batch_size = batch_size;
    c.variant.method = parse_method(variant);
    c.variant.frame_level = frame_level;
    c.variant.two_vector_fusion = two_vector_fusion;
    c.keypoint_threshold = threshold;
    c.body_hidden = hidden;
    c.seed.value = resolve_seed(b, seed);
    validate(c);
    return c;
  }

  Dataset load(LabelSet* labels_out) const {
    if (data.empty() || labels.empty()) throw ConfigError("--data and --labels are required");
    LabelSet ls = load_label_set(labels);
    if (labels_out) *labels_out = ls;
    return load_dataset(data, ls);
  }
};

std::string file_stem_for(const Pairing& p) {
  return std::string(branch_name(p.branch)) + "_" + std::string(label_kind_name(p.labels));
}

// ---------------------------------------------------------------- gen-data

struct GenDataCommand {
  SyntheticConfig synth;
  std::string out;
  std::string labels_out;
  std::uint64_t seed = 1;

  void bind(CLI::App*, Bindings& b) {
    b.option("out", out, "Output dataset file (JSON Lines)")->required();
    b.option("labels-out", labels_out, "Output label-set file (default: <out stem>.labels.json)");
    b.option("classes", synth.classes, "Emotion classes (6 uses the BRED label set)");
    b.option("subjects", synth.subjects, "Distinct subjects");
    b.option("samples-per-class", synth.samples_per_class, "Samples per subject and class");
    b.option("frames", synth.frames, "Frames per sample");
    b.option("face-dim", synth.face_dim, "Face feature dimension");
    b.option("face-noise", synth.face_noise, "Face feature noise relative to prototype scale");
    b.option("pose-noise", synth.pose_noise, "Keypoint jitter in pixels");
    b.option("pose-signal", synth.pose_signal, "Per-class keypoint displacement in pixels");
    b.option("subject-spread", synth.subject_spread, "Per-subject face offset relative to prototype scale");
    b.option("face-missing-rate", synth.face_missing_rate, "Probability a frame has no face feature");
    b.option("low-confidence-rate", synth.low_confidence_rate, "Probability a keypoint is low-confidence");
    b.option("seed", seed, "Random seed (falls back to $HMT_SEED)");
  }

  int run(const Bindings& b, std::ostream& out_stream) {
    const Dataset dataset = gen_synthetic(synth, RngSeed{resolve_seed(b, seed)});
    fs::path labels_path = labels_out;
    if (labels_path.empty()) {
      labels_path = fs::path(out).parent_path() / (fs::path(out).stem().string() + ".labels.json");
    }
    write_file_atomic(out, serialize_dataset(dataset));
    write_file_atomic(labels_path, label_set_to_json(dataset.labels));

    const LabelSet& ls = dataset.labels;
    out_stream << "wrote " << dataset.samples.size() << " samples from " << dataset.subjects().size()
               << " subjects to " << out << " (labels: " << labels_path.string() << ")\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s\n", "class", "samples", "face %", "body %");
    out_stream << buf;
    for (ClassId c = 0; c < ls.emotion_count(); ++c) {
      std::size_t n = 0, face = 0, body = 0;
      for (const auto& s : dataset.samples) {
        if (s.label.whole != c) continue;
        ++n;
        if (s.label.face == c) ++face;
        if (s.label.body == c) ++body;
      }
      std::snprintf(buf, sizeof buf, "%-12s %8zu %7.1f%% %7.1f%%\n", ls.emotions()[c].c_str(), n,
                    n ? 100.0 * static_cast<double>(face) / static_cast<double>(n) : 0.0,
                    n ? 100.0 * static_cast<double>(body) / static_cast<double>(n) : 0.0);
      out_stream << buf;
    }
    return 0;
  }
};

// ---------------------------------------------------------------- train

struct TrainCommand {
  TrainFlags flags;
  std::string name = "model";

  void bind(CLI::App* app, Bindings& b) {
    flags.bind(app, b);
    b.option("name", name, "Base name of the checkpoint and history files");
  }

  int run(const Bindings& b, std::ostream& out) {
    LabelSet labels;
    const Dataset dataset = flags.load(&labels);
    const TrainConfig config = flags.to_config(b);
    const fs::path root = flags.out_dir;

    Checkpoint ck;
    ck.labels = labels;
    ck.config = config;
    std::vector<std::pair<std::string, TrainHistory>> histories;
    if (config.variant.method == Method::Sep) {
      const SepTrainResult sep = train_sep(dataset.samples, labels, config, dataset.face_dim);
      ck.params = sep.merged();
      histories.emplace_back(name + "_face", sep.face.history);
      histories.emplace_back(name + "_body", sep.body.history);
    } else {
      TrainResult result = train(dataset.samples, labels, config, dataset.face_dim);
      ck.params = std::move(result.params);
      histories.emplace_back(name, std::move(result.history));
    }

    const fs::path ck_path = root / "checkpoints" / (name + ".json");
    write_file_atomic(ck_path, checkpoint_to_json(ck));
    for (const auto& [hist_name, hist] : histories) {
      write_file_atomic(root / "history" / (hist_name + ".csv"), history_to_csv(hist));
      const EpochRecord& first = hist.epochs.front();
      const EpochRecord& last = hist.epochs.back();
      out << hist_name << ": loss " << first.loss.total << " (epoch 0) -> " << last.loss.total << " (epoch "
          << last.epoch << ")\n";
    }
    out << "checkpoint: " << ck_path.string() << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------- eval

struct EvalCommand {
  std::string checkpoint;
  std::string data;
  std::string labels;
  std::string out_dir = "runs";
  std::string subjects;
  std::string name = "eval";
  bool skip_neutral = false;

  void bind(CLI::App*, Bindings& b) {
    b.option("checkpoint", checkpoint, "Checkpoint file written by `train`")->required();
    b.option("data", data, "Dataset file (JSON Lines)")->required();
    b.option("labels", labels, "Label-set file (JSON); defaults to the checkpoint's label set");
    b.option("subjects", subjects, "Comma-separated subject ids to evaluate (default: all)");
    b.option("out-dir", out_dir, "Output directory");
    b.option("name", name, "Base name of the report files");
    b.flag("skip-neutral-for-y", skip_neutral,
           "Score channel branches against y only where the channel label is not neutral");
  }

  int run(const Bindings&, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const LabelSet ls = labels.empty() ? ck.labels : load_label_set(labels);
    if (!(ls == ck.labels)) throw ConfigError("label set differs from the checkpoint's label set");
    const Dataset dataset = load_dataset(data, ls);
    std::vector<SampleSequence> selected;
    if (subjects.empty()) {
      selected = dataset.samples;
    } else {
      std::vector<std::string> wanted;
      std::stringstream ss(subjects);
      for (std::string id; std::getline(ss, id, ',');) {
        if (!id.empty()) wanted.push_back(id);
      }
      for (const auto& s : dataset.samples) {
        if (std::find(wanted.begin(), wanted.end(), s.subject) != wanted.end()) selected.push_back(s);
      }
      if (selected.empty()) throw ConfigError("no samples belong to the requested subjects");
    }
    EvalOptions options;
    options.keypoint_threshold = ck.config.keypoint_threshold;
    options.skip_neutral_channel_for_y = skip_neutral;
    const EvalReport report = evaluate_variant(ck.params, selected, ck.config.variant, ls, options);

    const fs::path root = out_dir;
    write_file_atomic(root / "reports" / (name + ".json"), eval_report_to_json(report, ls).dump(2) + "\n");
    for (const auto& p : report.pairings) {
      const auto names = class_names(ls, p.pairing.labels);
      const std::string stem = name + "_" + file_stem_for(p.pairing);
      write_file_atomic(root / "figures" / (stem + ".svg"),
                        confusion_svg(p.metrics.confusion, names, pairing_key(p.pairing)));
      write_file_atomic(root / "figures" / (stem + "_counts.csv"), confusion_csv(p.metrics.confusion, names));
      write_file_atomic(root / "figures" / (stem + "_normalized.csv"),
                        confusion_normalized_csv(p.metrics.confusion, names));
    }
    out << format_table(table_rows(report), ls);
    out << "samples: " << report.samples << ", face-absent: " << report.face_absent << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------- cv

struct CvCommand {
  TrainFlags flags;
  std::size_t folds = 10;
  std::size_t iterations = 10;
  std::size_t workers = 1;
  bool skip_neutral = false;
  bool quiet = false;

  void bind(CLI::App* app, Bindings& b) {
    flags.bind(app, b);
    b.option("folds", folds, "Subject-disjoint folds");
    b.option("iterations", iterations, "Repetitions with reshuffled folds (seed + i)");
    b.option("workers", workers, "Concurrent training jobs");
    b.flag("skip-neutral-for-y", skip_neutral,
           "Score channel branches against y only where the channel label is not neutral");
    b.flag("quiet", quiet, "Suppress per-fold progress lines");
  }

  int run(const Bindings& b, std::ostream& out) {
    LabelSet labels;
    const Dataset dataset = flags.load(&labels);
    const TrainConfig config = flags.to_config(b);
    CVOptions options;
    options.folds = folds;
    options.iterations = iterations;
    options.workers = workers;
    options.eval.skip_neutral_channel_for_y = skip_neutral;
    // Fail before any training if the folds cannot be built.
    make_folds(dataset, folds, config.seed);
    if (!quiet) {
      options.on_run_done = [&](const CVRun& run) {
        out << "iteration " << run.iteration << " fold " << run.fold << ": " << run.report.samples
            << " test samples\n";
      };
    }
    const auto started = std::chrono::steady_clock::now();
    const CVSummary summary = cross_validate(dataset, config, options);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    const fs::path root = flags.out_dir;
    json summary_doc = cv_summary_to_json(summary, labels);
    summary_doc["config"] = train_config_to_json(config);
    const std::string table = format_table(table_rows(summary), labels);
    write_file_atomic(root / "reports" / "cv_summary.json", summary_doc.dump(2) + "\n");
    write_file_atomic(root / "reports" / "cv_table.txt", table);
    json meta;
    meta["finished_unix"] = static_cast<long long>(std::time(nullptr));
    meta["wall_seconds"] = seconds;
    meta["training_runs"] = summary.runs.size();
    write_file_atomic(root / "reports" / "run_meta.json", meta.dump(2) + "\n");
    for (const auto& s : summary.pairings) {
      const auto names = class_names(labels, s.pairing.labels);
      const std::string stem = "cv_" + file_stem_for(s.pairing);
      write_file_atomic(root / "figures" / (stem + ".svg"),
                        confusion_svg(s.pooled_confusion, names,
                                      std::string(method_name(summary.method)) + " " + pairing_key(s.pairing)));
      write_file_atomic(root / "figures" / (stem + "_counts.csv"), confusion_csv(s.pooled_confusion, names));
      write_file_atomic(root / "figures" / (stem + "_normalized.csv"),
                        confusion_normalized_csv(s.pooled_confusion, names));
    }
    out << table;
    out << summary.runs.size() << " training runs; reports in " << (root / "reports").string() << "\n";
    return 0;
  }
};

// ---------------------------------------------------------------- gradcheck

struct GradcheckCommand {
  ModelGradCheckConfig config;
  std::string variant = "hmt-4";
  std::string sep_branch = "both";
  std::uint64_t seed = 7;

  void bind(CLI::App*, Bindings& b) {
    b.option("variant", variant, "Method: sep, joint-1l, hmt-3a, hmt-3b, hmt-4");
    b.option("sep-branch", sep_branch, "SEP only: both, face or body")
        ->check(CLI::IsMember({"both", "face", "body"}));
    b.flag("frame-level", config.variant.frame_level, "Check the middle-frame variant");
    b.flag("two-vector-fusion", config.variant.two_vector_fusion, "HMT-3a without s_whole in fusion");
    b.option("face-dim", config.face_dim, "Face feature dimension");
    b.option("hidden", config.body_hidden, "Body hidden units");
    b.option("frames", config.frames, "Frames per sample");
    b.option("classes", config.classes, "Whole-body classes (channel labels add neutral)");
    b.option("samples", config.samples, "Samples in the probe batch");
    b.option("probes", config.probes, "Probed coordinates per parameter block");
    b.option("epsilon", config.epsilon, "Central-difference step");
    b.option("seed", seed, "Random seed (falls back to $HMT_SEED)");
    b.flag("corrupt", config.corrupt, "Double the analytic gradient (checker self-test; must fail)");
  }

  int run(const Bindings& b, std::ostream& out) {
    config.variant.method = parse_method(variant);
    config.variant.sep_branch =
        sep_branch == "face" ? SepBranch::Face : (sep_branch == "body" ? SepBranch::Body : SepBranch::Both);
    config.seed.value = resolve_seed(b, seed);
    const ModelGradCheckReport report = check_model_gradients(config);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-20s %8s %7s %6s %14s\n", "block", "size", "probes", "used", "max rel err");
    out << buf;
    bool ok = true;
    for (const auto& blk : report.blocks) {
      const bool pass = blk.result.max_rel_error <= kGradTolerance;
      ok = ok && pass;
      std::snprintf(buf, sizeof buf, "%-20s %8zu %7zu %6s %14.3e %s\n", blk.name.c_str(), blk.size,
                    blk.result.probes, blk.used ? "yes" : "no", blk.result.max_rel_error, pass ? "ok" : "FAIL");
      out << buf;
    }
    out << method_name(config.variant.method) << ": max relative error " << report.max_rel_error()
        << (ok ? " <= " : " > ") << kGradTolerance << "\n";
    return ok ? 0 : 1;
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical multi-label training for whole-body affect recognition"};
  app.name("hmt");
  app.require_subcommand(1);

  GenDataCommand gen;
  TrainCommand train_cmd;
  EvalCommand eval_cmd;
  CvCommand cv;
  GradcheckCommand grad;

  CLI::App* gen_app = app.add_subcommand("gen-data", "Generate a synthetic dataset with hierarchical labels");
  CLI::App* train_app = app.add_subcommand("train", "Train one model and write a checkpoint and loss history");
  CLI::App* eval_app = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  CLI::App* cv_app = app.add_subcommand("cv", "Subject-disjoint cross-validation with repeated iterations");
  CLI::App* grad_app = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");

  Bindings gen_b(gen_app), train_b(train_app), eval_b(eval_app), cv_b(cv_app), grad_b(grad_app);
  std::string gen_config, eval_config, grad_config;
  gen.bind(gen_app, gen_b);
  gen_app->add_option("--config", gen_config, "JSON config file; command-line flags override its values");
  train_cmd.bind(train_app, train_b);
  eval_cmd.bind(eval_app, eval_b);
  eval_app->add_option("--config", eval_config, "JSON config file; command-line flags override its values");
  cv.bind(cv_app, cv_b);
  grad.bind(grad_app, grad_b);
  grad_app->add_option("--config", grad_config, "JSON config file; command-line flags override its values");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (gen_app->parsed()) {
      gen_b.apply_config(gen_config);
      return gen.run(gen_b, out);
    }
    if (train_app->parsed()) {
      train_b.apply_config(train_cmd.flags.config);
      return train_cmd.run(train_b, out);
    }
    if (eval_app->parsed()) {
      eval_b.apply_config(eval_config);
      return eval_cmd.run(eval_b, out);
    }
    if (cv_app->parsed()) {
      cv_b.apply_config(cv.flags.config);
      return cv.run(cv_b, out);
    }
    if (grad_app->parsed()) {
      grad_b.apply_config(grad_config);
      return grad.run(grad_b, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace hmt::cli
