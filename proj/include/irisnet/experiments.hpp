#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irisnet/data_io.hpp"
#include "irisnet/matching.hpp"
#include "irisnet/training.hpp"

namespace irisnet {

/// Class-disjoint split of labels 0..K-1.
struct ClassSplit {
  std::vector<int> train;  // sorted
  std::vector<int> test;   // sorted
};

/// Holds out round(test_fraction * K) classes, at least one. Needs K >= 5.
ClassSplit split_classes(int num_classes, double test_fraction, std::uint64_t seed);

/// Train-pool images relabeled onto 0..K'-1 in class order.
struct LabeledSubset {
  std::vector<IrisImage> images;
  std::vector<int> labels;
};
LabeledSubset select_classes(const Dataset& dataset, std::span<const int> classes);

struct GalleryProbe {
  std::vector<Signature> gallery;
  std::vector<Probe> probes;
  std::vector<int> enrolled;   // sorted class ids
  std::vector<int> imposters;  // sorted class ids
};

/// Half of `classes` (rounded up) are enrolled: the first half of each
/// enrolled class's samples (by sample id) goes to the gallery and the rest
/// become genuine probes. Every sample of the other classes is an imposter
/// probe claiming a uniformly drawn enrolled class.
GalleryProbe build_gallery_probe(std::span<const Signature> signatures, std::span<const int> classes,
                                 std::uint64_t seed);

struct VerificationReport {
  ScoreSet scores;
  DetMetrics det;
  std::vector<int> enrolled;
  std::vector<int> imposters;
};

VerificationReport evaluate_verification(CombNet& model, const Dataset& dataset, std::span<const int> classes,
                                         std::uint64_t seed);

struct FoldResult {
  std::vector<int> classes;
  double eer = 0.0;
  double auc = 0.0;
};

struct CrossReport {
  std::vector<FoldResult> folds;
  double mean_eer = 0.0;
  double mean_auc = 0.0;
};

/// Partitions the target classes into `folds` disjoint groups (the last one
/// takes the remainder) and averages per-fold verification metrics. No
/// training happens here.
CrossReport cross_dataset_experiment(CombNet& model, const Dataset& target, int folds, std::uint64_t seed);

struct WithinConfig {
  TrainConfig stage1 = TrainConfig::stage1_defaults();
  TrainConfig stage2 = TrainConfig::stage2_defaults();
  double test_fraction = 0.2;
  std::uint64_t seed = 7;
};

void to_json(nlohmann::json& j, const WithinConfig& cfg);
void from_json(const nlohmann::json& j, WithinConfig& cfg);

struct VariantResult {
  CombNetVariant variant;
  TrainReport stage2;
  std::optional<VerificationReport> verification;  // TEL-head variants only
};

struct WithinReport {
  ClassSplit split;
  std::vector<std::pair<PoolKind, TrainReport>> stage1;
  std::vector<VariantResult> variants;
};

/// Trains each variant on the training classes (stage 1 once per pooling
/// kind that a pretrained variant needs) and evaluates TEL variants on the
/// held-out classes.
WithinReport within_dataset_experiment(const Dataset& dataset, const WithinConfig& cfg,
                                       std::span<const CombNetVariant> variants, std::ostream* log = nullptr);

/// CombNet_R, CombNet_Etheta, CombNet_Etheta^EAP, CombNet_Etheta^{EAP+TEL}.
std::vector<CombNetVariant> ablation_variants();

void write_report(const VerificationReport& report, std::ostream& out);
void write_report(const CrossReport& report, std::ostream& out);
void write_report(const WithinReport& report, std::ostream& out);
/// epoch,loss,metric
void write_loss_csv(const TrainReport& report, std::ostream& out);

}  // namespace irisnet
