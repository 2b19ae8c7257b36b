#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "irisnet/data_io.hpp"
#include "irisnet/losses.hpp"
#include "irisnet/models.hpp"

namespace irisnet {

struct TrainConfig {
  int stage = 2;
  int epochs = 30;
  int batch_size = 16;
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  float lr_decay = 0.1f;          // multiplier applied once
  double lr_decay_at = 0.6;       // fraction of epochs after which it applies
  double validation_fraction = 0.2;
  std::uint64_t seed = 7;
  PoolKind pool = PoolKind::Eap;
  HeadKind head = HeadKind::Tel;
  int hidden = 4096;
  bool freeze_encoder = false;
  std::string checkpoint_path;  // written with the selected model when set
  SsimConfig ssim;

  static TrainConfig stage1_defaults();
  static TrainConfig stage2_defaults();

  void validate() const;
  float learning_rate_at(int epoch) const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
/// Rejects unknown keys.
void from_json(const nlohmann::json& j, TrainConfig& cfg);

struct TrainReport {
  int stage = 0;
  std::vector<double> train_loss;  // epoch means
  std::vector<double> val_metric;  // mean SSIM (stage 1) or accuracy (stage 2)
  double initial_metric = 0.0;     // validation metric before the first update
  int best_epoch = 0;              // 1-based
  double best_metric = 0.0;
  double wall_seconds = 0.0;
  std::string checkpoint_id;
};

struct SgdConfig {
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
};

/// velocity <- momentum * velocity + grad + weight_decay * param;
/// param <- param - learning_rate * velocity.
void sgd_step(Tensorf& param, const Tensorf::Array& grad, Tensorf::Array& velocity, const SgdConfig& cfg);

/// SGD with momentum over a fixed parameter list. Parameters without a
/// gradient are treated as having a zero gradient.
class Sgd {
 public:
  Sgd(std::vector<Tensorf> params, SgdConfig cfg);
  void step();
  void zero_grad();
  void set_learning_rate(float lr) { cfg_.learning_rate = lr; }
  const SgdConfig& config() const { return cfg_; }

 private:
  std::vector<Tensorf> params_;
  std::vector<Tensorf::Array> velocity_;
  SgdConfig cfg_;
};

struct Stage1Result {
  Encoder encoder;
  TrainReport report;
};

struct Stage2Result {
  CombNet model;
  TrainReport report;
};

/// Minimizes 1 - SSIM(I, D(E(I))) over `images`; returns the encoder from
/// the epoch with the best validation SSIM. Progress lines go to `log`.
Stage1Result train_stage1(const std::vector<IrisImage>& images, const TrainConfig& cfg, std::ostream* log = nullptr);

/// Trains encoder + head with cross-entropy on labels 0..K-1. `pretrained`
/// selects CombNet_Etheta-style initialisation; nullptr means random.
/// Returns the model from the epoch with the best validation accuracy.
Stage2Result train_stage2(const std::vector<IrisImage>& images, const std::vector<int>& labels,
                          const Encoder* pretrained, const TrainConfig& cfg, std::ostream* log = nullptr);

/// Stratified per-class split; `fraction` of each class goes to validation
/// (at least one sample from classes that have two or more).
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
Split stratified_split(const std::vector<int>& labels, double fraction, std::uint64_t seed);

/// Fraction of `indices` whose arg-max logit equals the label (inference mode).
double classification_accuracy(CombNet& model, const std::vector<IrisImage>& images, const std::vector<int>& labels,
                               const std::vector<std::size_t>& indices, int batch_size = 32);

/// Mean SSIM of reconstructions of `indices` (inference mode).
double reconstruction_ssim(Autoencoder& model, const std::vector<IrisImage>& images,
                           const std::vector<std::size_t>& indices, const SsimConfig& cfg, int batch_size = 32);

/// Metadata recorded with stage-1/stage-2 checkpoints.
nlohmann::json checkpoint_metadata(const CombNet& model, const TrainConfig& cfg, int epoch);
nlohmann::json checkpoint_metadata(const Encoder& encoder, const TrainConfig& cfg, int epoch);

/// Rebuilds a model from a stage-2 checkpoint written by train_stage2.
CombNet model_from_checkpoint(const Checkpoint& checkpoint);
/// Rebuilds an encoder from a stage-1 (or stage-2) checkpoint.
Encoder encoder_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace irisnet
