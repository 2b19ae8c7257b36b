#include "irisnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

namespace irisnet {

TrainConfig TrainConfig::stage1_defaults() {
  TrainConfig c;
  c.stage = 1;
  c.learning_rate = 0.005f;
  return c;
}

TrainConfig TrainConfig::stage2_defaults() {
  TrainConfig c;
  c.stage = 2;
  c.learning_rate = 0.01f;
  return c;
}

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate >= 0.0f)) throw ConfigError("learning_rate must be non-negative");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 for batch normalization");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  if (momentum < 0.0f || momentum >= 1.0f) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0f) throw ConfigError("weight_decay must be non-negative");
  if (hidden < 1) throw ConfigError("hidden width must be positive");
  ssim.validate();
}

float TrainConfig::learning_rate_at(int epoch) const {
  const int decay_epoch = int(std::floor(lr_decay_at * epochs));
  return epoch >= decay_epoch && decay_epoch > 0 ? learning_rate * lr_decay : learning_rate;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"stage", c.stage},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay},
                     {"lr_decay", c.lr_decay},
                     {"lr_decay_at", c.lr_decay_at},
                     {"validation_fraction", c.validation_fraction},
                     {"seed", c.seed},
                     {"pool", std::string(to_string(c.pool))},
                     {"head", std::string(to_string(c.head))},
                     {"hidden", c.hidden},
                     {"freeze_encoder", c.freeze_encoder},
                     {"checkpoint_path", c.checkpoint_path},
                     {"ssim_window", c.ssim.window},
                     {"ssim_sigma", c.ssim.sigma}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  nlohmann::json defaults;
  to_json(defaults, c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown training key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("stage", c.stage);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("momentum", c.momentum);
  get("weight_decay", c.weight_decay);
  get("lr_decay", c.lr_decay);
  get("lr_decay_at", c.lr_decay_at);
  get("validation_fraction", c.validation_fraction);
  get("seed", c.seed);
  get("hidden", c.hidden);
  get("freeze_encoder", c.freeze_encoder);
  get("checkpoint_path", c.checkpoint_path);
  get("ssim_window", c.ssim.window);
  get("ssim_sigma", c.ssim.sigma);
  if (j.contains("pool")) c.pool = parse_pool_kind(j.at("pool").get<std::string>());
  if (j.contains("head")) c.head = parse_head_kind(j.at("head").get<std::string>());
}

void sgd_step(Tensorf& param, const Tensorf::Array& grad, Tensorf::Array& velocity, const SgdConfig& cfg) {
  if (grad.size() != param.numel()) throw DimensionError("gradient does not match parameter " + shape_string(param.shape()));
  if (velocity.size() != param.numel()) velocity = Tensorf::Array::Zero(param.numel());
  velocity = cfg.momentum * velocity + grad + cfg.weight_decay * param.data();
  param.mutable_data() -= cfg.learning_rate * velocity;
}

Sgd::Sgd(std::vector<Tensorf> params, SgdConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) velocity_.push_back(Tensorf::Array::Zero(p.numel()));
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensorf& p = params_[i];
    if (p.has_grad()) {
      sgd_step(p, p.grad(), velocity_[i], cfg_);
    } else {
      sgd_step(p, Tensorf::Array::Zero(p.numel()), velocity_[i], cfg_);
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Split stratified_split(const std::vector<int>& labels, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  Split split;
  for (auto& [label, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t nval = std::size_t(std::lround(fraction * double(idx.size())));
    if (idx.size() >= 2) nval = std::clamp<std::size_t>(nval, 1, idx.size() - 1);
    else nval = 0;
    split.validation.insert(split.validation.end(), idx.begin(), idx.begin() + std::ptrdiff_t(nval));
    split.train.insert(split.train.end(), idx.begin() + std::ptrdiff_t(nval), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

namespace {

using Clock = std::chrono::steady_clock;

// Shuffled mini-batches; a trailing singleton is folded into the previous
// batch so batch statistics stay defined.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, int batch_size,
                                                   std::mt19937_64& rng) {
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += std::size_t(batch_size)) {
    const std::size_t end = std::min(order.size(), i + std::size_t(batch_size));
    batches.emplace_back(order.begin() + std::ptrdiff_t(i), order.begin() + std::ptrdiff_t(end));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

std::vector<Tensorf::Array> snapshot(const NamedTensors& named) {
  std::vector<Tensorf::Array> out;
  for (const auto& t : named) out.push_back(t.tensor.data());
  return out;
}

void restore(const NamedTensors& named, const std::vector<Tensorf::Array>& values) {
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensorf t = named[i].tensor;
    t.mutable_data() = values[i];
  }
}

void log_epoch(std::ostream* log, int stage, int epoch, double loss, double metric, float lr) {
  if (!log) return;
  nlohmann::json line{{"stage", stage}, {"epoch", epoch}, {"loss", loss}, {"metric", metric}, {"lr", lr}};
  *log << line.dump() << '\n' << std::flush;
}

void check_images(const std::vector<IrisImage>& images) {
  if (images.empty()) throw InputError("training dataset is empty");
  for (const auto& img : images) {
    if (img.width != images.front().width || img.height != images.front().height) {
      throw InputError("training images have mixed resolutions");
    }
  }
}

// Runs part of an epoch (updates or validation), converting numeric failures
// into a training error that names the epoch.
template <typename Fn>
double guarded_epoch(int epoch, Fn&& fn) {
  double loss;
  try {
    loss = fn();
  } catch (const NumericError& e) {
    throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
  }
  if (!std::isfinite(loss)) throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": loss is not finite");
  return loss;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

double reconstruction_ssim(Autoencoder& model, const std::vector<IrisImage>& images,
                           const std::vector<std::size_t>& indices, const SsimConfig& cfg, int batch_size) {
  const bool was_training = model.encoder.training();
  model.encoder.set_training(false);
  double total = 0;
  for (std::size_t i = 0; i < indices.size(); i += std::size_t(batch_size)) {
    const std::size_t end = std::min(indices.size(), i + std::size_t(batch_size));
    std::vector<std::size_t> chunk(indices.begin() + std::ptrdiff_t(i), indices.begin() + std::ptrdiff_t(end));
    const Tensorf x = to_batch(images, chunk);
    const Tensorf recon = clamp(model.forward(x), 0.0f, 1.0f);
    total += double(ssim(x, recon, cfg).item()) * double(chunk.size());
  }
  model.encoder.set_training(was_training);
  return total / double(indices.size());
}

double classification_accuracy(CombNet& model, const std::vector<IrisImage>& images, const std::vector<int>& labels,
                               const std::vector<std::size_t>& indices, int batch_size) {
  if (indices.empty()) return 0.0;
  const bool was_training = model.training();
  model.set_training(false);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < indices.size(); i += std::size_t(batch_size)) {
    const std::size_t end = std::min(indices.size(), i + std::size_t(batch_size));
    std::vector<std::size_t> chunk(indices.begin() + std::ptrdiff_t(i), indices.begin() + std::ptrdiff_t(end));
    const Tensorf logits = model.logits(to_batch(images, chunk));
    const auto m = logits.matrix();
    for (Index r = 0; r < m.rows(); ++r) {
      Index arg;
      m.row(r).maxCoeff(&arg);
      if (int(arg) == labels[chunk[std::size_t(r)]]) ++correct;
    }
  }
  model.set_training(was_training);
  return double(correct) / double(indices.size());
}

Stage1Result train_stage1(const std::vector<IrisImage>& images, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.stage != 1) throw ConfigError("train_stage1 needs a stage-1 configuration");
  check_images(images);
  const auto start = Clock::now();

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order = iota_indices(images.size());
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t nval = std::size_t(std::floor(cfg.validation_fraction * double(images.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + std::ptrdiff_t(nval));
  std::vector<std::size_t> train(order.begin() + std::ptrdiff_t(nval), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  // Too few images to hold any out: validate on the training images.
  if (val.empty()) val = train;

  Autoencoder ae = build_autoencoder(cfg.pool, cfg.seed);
  Sgd opt(ae.encoder.parameters(), {cfg.learning_rate, cfg.momentum, cfg.weight_decay});

  TrainReport report;
  report.stage = 1;
  report.initial_metric = reconstruction_ssim(ae, images, val, cfg.ssim);
  report.best_metric = -std::numeric_limits<double>::infinity();
  std::vector<Tensorf::Array> best;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = cfg.learning_rate_at(epoch);
    opt.set_learning_rate(lr);
    ae.encoder.set_training(true);
    const double loss = guarded_epoch(epoch + 1, [&] {
      double sum = 0;
      for (const auto& batch : make_batches(train, cfg.batch_size, rng)) {
        const Tensorf x = to_batch(images, batch);
        Tape<float> tape;
        const Tensorf l = reconstruction_loss(x, ae.forward(x), cfg.ssim);
        tape.backward(l);
        opt.step();
        opt.zero_grad();
        sum += double(l.item()) * double(batch.size());
      }
      return sum / double(train.size());
    });
    const double metric = guarded_epoch(epoch + 1, [&] { return reconstruction_ssim(ae, images, val, cfg.ssim); });
    report.train_loss.push_back(loss);
    report.val_metric.push_back(metric);
    if (metric > report.best_metric) {
      report.best_metric = metric;
      report.best_epoch = epoch + 1;
      best = snapshot(ae.encoder.named_tensors());
    }
    log_epoch(log, 1, epoch + 1, loss, metric, lr);
  }

  restore(ae.encoder.named_tensors(), best);
  ae.encoder.set_training(false);
  if (!cfg.checkpoint_path.empty()) {
    const Checkpoint ckpt =
        make_checkpoint(ae.encoder.named_tensors(), checkpoint_metadata(ae.encoder, cfg, report.best_epoch));
    save_checkpoint(ckpt, cfg.checkpoint_path);
    report.checkpoint_id = checkpoint_id(ckpt);
  }
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return Stage1Result{std::move(ae.encoder), std::move(report)};
}

Stage2Result train_stage2(const std::vector<IrisImage>& images, const std::vector<int>& labels,
                          const Encoder* pretrained, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.stage != 2) throw ConfigError("train_stage2 needs a stage-2 configuration");
  check_images(images);
  if (labels.size() != images.size()) throw InputError("label count does not match image count");
  const int num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<bool> seen(std::size_t(std::max(num_classes, 0)), false);
  for (int l : labels) {
    if (l < 0) throw InputError("label " + std::to_string(l) + " out of range");
    seen[std::size_t(l)] = true;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw InputError("labels must be contiguous 0..K-1");
  }
  const auto start = Clock::now();

  CombNetConfig mc;
  mc.num_classes = std::max(num_classes, 2);
  mc.height = images.front().height;
  mc.width = images.front().width;
  mc.hidden = cfg.hidden;
  mc.seed = cfg.seed;
  const CombNetVariant variant{cfg.pool, cfg.head, pretrained ? InitKind::Pretrained : InitKind::Random};
  CombNet model = build_combnet(variant, mc, pretrained);

  const Split split = stratified_split(labels, cfg.validation_fraction, cfg.seed);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Sgd opt(cfg.freeze_encoder ? model.head_parameters() : model.parameters(),
          {cfg.learning_rate, cfg.momentum, cfg.weight_decay});

  const std::vector<std::size_t>& val = split.validation.empty() ? split.train : split.validation;
  TrainReport report;
  report.stage = 2;
  report.initial_metric = classification_accuracy(model, images, labels, val);
  report.best_metric = -1.0;
  std::vector<Tensorf::Array> best;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const float lr = cfg.learning_rate_at(epoch);
    opt.set_learning_rate(lr);
    model.set_training(true);
    if (cfg.freeze_encoder) model.encoder().set_training(false);
    const double loss = guarded_epoch(epoch + 1, [&] {
      double sum = 0;
      for (const auto& batch : make_batches(split.train, cfg.batch_size, rng)) {
        std::vector<int> y;
        for (std::size_t i : batch) y.push_back(labels[i]);
        Tape<float> tape;
        const Tensorf l = cross_entropy(model.logits(to_batch(images, batch)), y);
        tape.backward(l);
        opt.step();
        opt.zero_grad();
        sum += double(l.item()) * double(batch.size());
      }
      return sum / double(split.train.size());
    });
    const double metric = guarded_epoch(epoch + 1, [&] { return classification_accuracy(model, images, labels, val); });
    report.train_loss.push_back(loss);
    report.val_metric.push_back(metric);
    if (metric > report.best_metric) {
      report.best_metric = metric;
      report.best_epoch = epoch + 1;
      best = snapshot(model.named_tensors());
    }
    log_epoch(log, 2, epoch + 1, loss, metric, lr);
  }

  restore(model.named_tensors(), best);
  model.set_training(false);
  if (!cfg.checkpoint_path.empty()) {
    const Checkpoint ckpt = make_checkpoint(model.named_tensors(), checkpoint_metadata(model, cfg, report.best_epoch));
    save_checkpoint(ckpt, cfg.checkpoint_path);
    report.checkpoint_id = checkpoint_id(ckpt);
  }
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return Stage2Result{std::move(model), std::move(report)};
}

nlohmann::json checkpoint_metadata(const CombNet& model, const TrainConfig& cfg, int epoch) {
  const auto& c = model.config();
  return nlohmann::json{{"kind", "combnet"},
                        {"stage", 2},
                        {"pool", std::string(to_string(model.variant().pool))},
                        {"head", std::string(to_string(model.variant().head))},
                        {"init", std::string(to_string(model.variant().init))},
                        {"num_classes", c.num_classes},
                        {"height", c.height},
                        {"width", c.width},
                        {"hidden", c.hidden},
                        {"signature_width", c.signature_width},
                        {"seed", cfg.seed},
                        {"epoch", epoch}};
}

nlohmann::json checkpoint_metadata(const Encoder& encoder, const TrainConfig& cfg, int epoch) {
  return nlohmann::json{{"kind", "encoder"},
                        {"stage", 1},
                        {"pool", std::string(to_string(encoder.spec().pool))},
                        {"seed", cfg.seed},
                        {"epoch", epoch}};
}

CombNet model_from_checkpoint(const Checkpoint& checkpoint) {
  const auto& m = checkpoint.metadata;
  if (m.value("kind", "") != "combnet") throw StateError("checkpoint does not hold a CombNet model");
  try {
    const CombNetVariant variant{parse_pool_kind(m.at("pool").get<std::string>()),
                                 parse_head_kind(m.at("head").get<std::string>()), InitKind::Random};
    CombNetConfig c;
    c.num_classes = m.at("num_classes").get<int>();
    c.height = m.at("height").get<int>();
    c.width = m.at("width").get<int>();
    c.hidden = m.at("hidden").get<int>();
    c.signature_width = m.at("signature_width").get<int>();
    CombNet model = build_combnet(variant, c);
    apply_checkpoint(model.named_tensors(), checkpoint);
    model.set_training(false);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
}

Encoder encoder_from_checkpoint(const Checkpoint& checkpoint) {
  const auto& m = checkpoint.metadata;
  if (!m.contains("pool")) throw FormatError("checkpoint metadata lacks the pooling kind");
  EncoderSpec spec;
  spec.pool = parse_pool_kind(m.at("pool").get<std::string>());
  std::mt19937_64 rng(0);
  Encoder encoder(spec, rng);
  apply_checkpoint(encoder.named_tensors(), checkpoint);
  encoder.set_training(false);
  return encoder;
}

}  // namespace irisnet
