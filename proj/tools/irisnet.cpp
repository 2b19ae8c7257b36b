// irisnet: synthetic data, two-stage training, signature extraction and
// verification from the command line.
//
// Exit codes: 0 success, 1 usage, 2 data/format, 3 training/evaluation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "irisnet/experiments.hpp"

namespace fs = std::filesystem;
using namespace irisnet;

namespace {

struct UsageError : Error {
  using Error::Error;
};

// JSON run configuration: protocol and training settings plus the synthetic
// data spec. Unknown keys are rejected.
struct RunConfig {
  WithinConfig protocol;
  SynthSpec synth;

  nlohmann::json to_json() const {
    nlohmann::json j = protocol;
    j["synth"] = synth;
    return j;
  }
};

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError("config " + path + " is not a JSON object");
  if (j.contains("synth")) {
    from_json(j.at("synth"), cfg.synth);
    j.erase("synth");
  }
  from_json(j, cfg.protocol);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

template <typename Fn>
void write_with(const fs::path& path, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_text(path, ss.str());
}

fs::path sibling(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

std::vector<int> ints_from(const nlohmann::json& meta, const char* key) {
  if (!meta.contains(key)) return {};
  return meta.at(key).get<std::vector<int>>();
}

Checkpoint with_split(Checkpoint ckpt, const ClassSplit& split, const WithinConfig& protocol) {
  ckpt.metadata["train_classes"] = split.train;
  ckpt.metadata["test_classes"] = split.test;
  ckpt.metadata["split_seed"] = protocol.seed;
  ckpt.metadata["test_fraction"] = protocol.test_fraction;
  return ckpt;
}

// Options shared by pretrain, train and ablation that override the config file.
struct TrainOverrides {
  std::optional<int> epochs;
  std::optional<int> batch;
  std::optional<float> lr;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app, const std::string& scope = "Training") {
    app->add_option("--epochs", epochs, scope + " epochs");
    app->add_option("--batch", batch, scope + " mini-batch size");
    app->add_option("--lr", lr, scope + " initial learning rate");
    app->add_option("--seed", seed, scope + " seed");
  }
  void apply(TrainConfig& c) const {
    if (epochs) c.epochs = *epochs;
    if (batch) c.batch_size = *batch;
    if (lr) c.learning_rate = *lr;
    if (seed) c.seed = *seed;
  }
};

struct Options {
  std::string spec, data, config, out, init = "random", pool, head = "tel", model, protocol = "within", scores,
                                       target;
  int classes = 227, hidden = 4096, width = 512, height = 64, folds = 5;
  std::optional<std::uint64_t> eval_seed;
  bool freeze = false;
  TrainOverrides overrides;
};

int cmd_gen_data(const Options& o) {
  RunConfig cfg = load_run_config("");
  if (!o.spec.empty()) {
    std::ifstream in(o.spec);
    if (!in) throw InputError("cannot open spec " + o.spec);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("spec " + o.spec + ": " + e.what());
    }
    from_json(j.contains("synth") ? j.at("synth") : j, cfg.synth);
  }
  const Dataset ds = generate_synthetic(cfg.synth);
  write_dataset(ds, o.out);
  write_text(fs::path(o.out) / "config.json", nlohmann::json(cfg.synth).dump(2) + "\n");
  std::cout << "wrote " << ds.images.size() << " images in " << ds.num_classes() << " classes to " << o.out << '\n';
  return 0;
}

int cmd_pretrain(const Options& o) {
  RunConfig cfg = load_run_config(o.config);
  TrainConfig& c1 = cfg.protocol.stage1;
  if (!o.pool.empty()) c1.pool = parse_pool_kind(o.pool);
  o.overrides.apply(c1);
  c1.stage = 1;
  c1.checkpoint_path.clear();
  const Dataset ds = load_dataset(o.data);
  const ClassSplit split = split_classes(ds.num_classes(), cfg.protocol.test_fraction, cfg.protocol.seed);
  const LabeledSubset pool = select_classes(ds, split.train);
  auto r = train_stage1(pool.images, c1, &std::cout);
  const Checkpoint ckpt = with_split(
      make_checkpoint(r.encoder.named_tensors(), checkpoint_metadata(r.encoder, c1, r.report.best_epoch)), split,
      cfg.protocol);
  save_checkpoint(ckpt, o.out);
  write_with(sibling(o.out, ".loss.csv"), [&](std::ostream& s) { write_loss_csv(r.report, s); });
  write_text(sibling(o.out, ".config.json"), cfg.to_json().dump(2) + "\n");
  std::cout << "best_epoch: " << r.report.best_epoch << "\nbest_ssim: " << r.report.best_metric
            << "\ncheckpoint: " << checkpoint_id(ckpt) << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  RunConfig cfg = load_run_config(o.config);
  TrainConfig& c2 = cfg.protocol.stage2;
  o.overrides.apply(c2);
  c2.stage = 2;
  c2.head = parse_head_kind(o.head);
  c2.freeze_encoder = c2.freeze_encoder || o.freeze;
  c2.checkpoint_path.clear();

  std::optional<Encoder> encoder;
  if (o.init != "random") {
    const Checkpoint init = load_checkpoint(o.init);
    encoder.emplace(encoder_from_checkpoint(init));
    if (!o.pool.empty() && parse_pool_kind(o.pool) != encoder->spec().pool) {
      throw StateError("--pool " + o.pool + " does not match the pretrained encoder's " +
                       std::string(to_string(encoder->spec().pool)) + " pooling");
    }
    c2.pool = encoder->spec().pool;
  } else if (!o.pool.empty()) {
    c2.pool = parse_pool_kind(o.pool);
  }

  const Dataset ds = load_dataset(o.data);
  const ClassSplit split = split_classes(ds.num_classes(), cfg.protocol.test_fraction, cfg.protocol.seed);
  const LabeledSubset pool = select_classes(ds, split.train);
  auto r = train_stage2(pool.images, pool.labels, encoder ? &*encoder : nullptr, c2, &std::cout);
  const Checkpoint ckpt = with_split(
      make_checkpoint(r.model.named_tensors(), checkpoint_metadata(r.model, c2, r.report.best_epoch)), split,
      cfg.protocol);
  save_checkpoint(ckpt, o.out);
  write_with(sibling(o.out, ".loss.csv"), [&](std::ostream& s) { write_loss_csv(r.report, s); });
  write_with(sibling(o.out, ".report.txt"), [&](std::ostream& s) {
    s << "variant: " << r.model.variant().name() << "\nbest_epoch: " << r.report.best_epoch
      << "\nbest_accuracy: " << r.report.best_metric << "\ninitial_accuracy: " << r.report.initial_metric
      << "\nwall_seconds: " << r.report.wall_seconds << "\ncheckpoint: " << checkpoint_id(ckpt) << '\n';
  });
  write_text(sibling(o.out, ".config.json"), cfg.to_json().dump(2) + "\n");
  std::cout << "best_epoch: " << r.report.best_epoch << "\nbest_accuracy: " << r.report.best_metric
            << "\ncheckpoint: " << checkpoint_id(ckpt) << '\n';
  return 0;
}

int cmd_extract(const Options& o) {
  CombNet model = model_from_checkpoint(load_checkpoint(o.model));
  const Dataset ds = load_dataset(o.data);
  std::vector<std::size_t> all(ds.images.size());
  std::iota(all.begin(), all.end(), 0);
  const auto sigs = extract_signatures(model, ds.images, all, ds.labels);
  write_with(o.out, [&](std::ostream& s) { write_signatures_csv(sigs, s); });
  std::cout << "wrote " << sigs.size() << " signatures of dimension "
            << (sigs.empty() ? 0 : sigs.front().values.size()) << " to " << o.out << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const fs::path out(o.out);
  nlohmann::json echo{{"protocol", o.protocol}, {"folds", o.folds}};
  if (!o.scores.empty()) {
    std::ifstream in(o.scores);
    if (!in) throw InputError("cannot open scores " + o.scores);
    VerificationReport r;
    r.scores = read_scores_csv(in);
    r.det = det_metrics(r.scores);
    echo["scores"] = o.scores;
    write_with(out / "det.csv", [&](std::ostream& s) { write_det_csv(r.det.curve, s); });
    write_with(out / "report.txt", [&](std::ostream& s) { write_report(r, s); });
    write_text(out / "config.json", echo.dump(2) + "\n");
    write_report(r, std::cout);
    return 0;
  }

  const Checkpoint ckpt = load_checkpoint(o.model);
  CombNet model = model_from_checkpoint(ckpt);
  const Dataset ds = load_dataset(o.data);
  const std::uint64_t seed = o.eval_seed.value_or(ckpt.metadata.value("split_seed", std::uint64_t(7)));
  echo["model"] = o.model;
  echo["data"] = o.data;
  echo["seed"] = seed;
  if (o.protocol == "within") {
    std::vector<int> classes = ints_from(ckpt.metadata, "test_classes");
    if (classes.empty()) throw ProtocolError("checkpoint records no held-out classes for the within protocol");
    for (int c : classes) {
      if (c >= ds.num_classes()) throw ProtocolError("held-out class " + std::to_string(c) + " missing from dataset");
    }
    const auto r = evaluate_verification(model, ds, classes, seed);
    write_with(out / "det.csv", [&](std::ostream& s) { write_det_csv(r.det.curve, s); });
    write_with(out / "scores.csv", [&](std::ostream& s) { write_scores_csv(r.scores, s); });
    write_with(out / "report.txt", [&](std::ostream& s) { write_report(r, s); });
    write_report(r, std::cout);
  } else if (o.protocol == "cross") {
    const auto r = cross_dataset_experiment(model, ds, o.folds, seed);
    write_with(out / "report.txt", [&](std::ostream& s) { write_report(r, s); });
    write_report(r, std::cout);
  } else {
    throw UsageError("--protocol must be 'within' or 'cross'");
  }
  write_text(out / "config.json", echo.dump(2) + "\n");
  return 0;
}

int cmd_params(const Options& o) {
  CombNetVariant v{o.pool.empty() ? PoolKind::Eap : parse_pool_kind(o.pool), parse_head_kind(o.head),
                   InitKind::Random};
  CombNetConfig c;
  c.num_classes = o.classes;
  c.hidden = o.hidden;
  c.width = o.width;
  c.height = o.height;
  const ParamReport r = count_params(v, c);
  std::cout << std::left << std::setw(20) << "layer" << std::setw(6) << "kind" << std::right << std::setw(14)
            << "params" << '\n';
  for (const auto& l : r.layers) {
    std::cout << std::left << std::setw(20) << l.name << std::setw(6) << l.kind << std::right << std::setw(14)
              << l.count << '\n';
  }
  std::cout << "conv: " << r.conv << "\nbn: " << r.bn << "\nfc: " << r.fc << "\ntotal: " << r.total << '\n';
  return 0;
}

int cmd_ablation(const Options& o) {
  RunConfig cfg = load_run_config(o.config);
  o.overrides.apply(cfg.protocol.stage2);
  const Dataset ds = load_dataset(o.data);
  const auto variants = ablation_variants();
  const auto r = within_dataset_experiment(ds, cfg.protocol, variants, &std::cout);
  const fs::path out(o.out);
  write_with(out / "report.txt", [&](std::ostream& s) { write_report(r, s); });
  for (const auto& [pool, rep] : r.stage1) {
    write_with(out / ("stage1_" + std::string(to_string(pool)) + ".loss.csv"),
               [&](std::ostream& s) { write_loss_csv(rep, s); });
  }
  for (std::size_t i = 0; i < r.variants.size(); ++i) {
    const auto& v = r.variants[i];
    const std::string stem = "variant" + std::to_string(i);
    write_with(out / (stem + ".loss.csv"), [&](std::ostream& s) { write_loss_csv(v.stage2, s); });
    if (v.verification) {
      write_with(out / (stem + ".det.csv"), [&](std::ostream& s) { write_det_csv(v.verification->det.curve, s); });
    }
  }
  write_text(out / "config.json", cfg.to_json().dump(2) + "\n");
  write_report(r, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Activation buffers are allocated and freed every step; keep them on the
  // heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Iris texture recognition: two-stage training and verification"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic texture dataset");
  gen->add_option("--spec", o.spec, "SynthSpec JSON (or run config with a 'synth' key)")->check(CLI::ExistingFile);
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Stage 1: autoencoder pre-training");
  pre->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  pre->add_option("--pool", o.pool, "Pooling: eap|max");
  pre->add_option("--out", o.out, "Checkpoint path")->required();
  o.overrides.add_to(pre);

  auto* train = app.add_subcommand("train", "Stage 2: supervised training");
  train->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  train->add_option("--init", o.init, "Stage-1 checkpoint path or 'random'");
  train->add_option("--pool", o.pool, "Pooling: eap|max");
  train->add_option("--head", o.head, "Head: tel|fc");
  train->add_flag("--freeze", o.freeze, "Keep encoder weights fixed");
  train->add_option("--out", o.out, "Checkpoint path")->required();
  o.overrides.add_to(train);

  auto* extract = app.add_subcommand("extract", "Write TEL signatures as CSV");
  extract->add_option("--model", o.model, "Stage-2 checkpoint")->required()->check(CLI::ExistingFile);
  extract->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  extract->add_option("--out", o.out, "Signature CSV path")->required();

  auto* eval = app.add_subcommand("eval", "Verification protocol: DET curve, EER and AUC");
  eval->add_option("--model", o.model, "Stage-2 checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--data", o.data, "Dataset directory")->check(CLI::ExistingDirectory);
  eval->add_option("--protocol", o.protocol, "within|cross")->check(CLI::IsMember({"within", "cross"}));
  eval->add_option("--folds", o.folds, "Cross-dataset folds");
  eval->add_option("--seed", o.eval_seed, "Gallery/probe seed");
  eval->add_option("--scores", o.scores, "Evaluate a kind,score CSV instead of a model")->check(CLI::ExistingFile);
  eval->add_option("--out", o.out, "Output directory")->required();

  auto* params = app.add_subcommand("params", "Learnable parameter counts");
  params->add_option("--pool", o.pool, "Pooling: eap|max");
  params->add_option("--head", o.head, "Head: tel|fc");
  params->add_option("--classes", o.classes, "Number of classes");
  params->add_option("--hidden", o.hidden, "Hidden width of the two-FC head");
  params->add_option("--width", o.width, "Input width");
  params->add_option("--height", o.height, "Input height");

  auto* ablation = app.add_subcommand("ablation", "Within-dataset ablation over the four CombNet variants");
  ablation->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ablation->add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  ablation->add_option("--out", o.out, "Output directory")->required();
  o.overrides.add_to(ablation, "Stage-2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(o);
    if (*pre) return cmd_pretrain(o);
    if (*train) return cmd_train(o);
    if (*extract) return cmd_extract(o);
    if (*eval) {
      if (o.scores.empty() && (o.model.empty() || o.data.empty())) {
        throw UsageError("eval needs --scores, or --model and --data");
      }
      return cmd_eval(o);
    }
    if (*params) return cmd_params(o);
    if (*ablation) return cmd_ablation(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
