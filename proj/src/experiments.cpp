#include "irisnet/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

namespace irisnet {

namespace {

std::vector<int> shuffled_classes(int num_classes, std::uint64_t seed) {
  std::vector<int> ids(static_cast<std::size_t>(num_classes));
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

void write_ids(std::ostream& out, const char* key, const std::vector<int>& ids) {
  out << key << ':';
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? "," : " ") << ids[i];
  out << '\n';
}

}  // namespace

ClassSplit split_classes(int num_classes, double test_fraction, std::uint64_t seed) {
  if (num_classes < 5) throw ProtocolError("class-disjoint split needs at least 5 classes, got " + std::to_string(num_classes));
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
  const auto ids = shuffled_classes(num_classes, seed);
  const std::size_t ntest =
      std::clamp<std::size_t>(std::size_t(std::lround(test_fraction * num_classes)), 1, std::size_t(num_classes - 1));
  ClassSplit split;
  split.test.assign(ids.begin(), ids.begin() + std::ptrdiff_t(ntest));
  split.train.assign(ids.begin() + std::ptrdiff_t(ntest), ids.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

LabeledSubset select_classes(const Dataset& dataset, std::span<const int> classes) {
  std::vector<int> sorted(classes.begin(), classes.end());
  std::sort(sorted.begin(), sorted.end());
  std::map<int, int> remap;
  for (std::size_t i = 0; i < sorted.size(); ++i) remap[sorted[i]] = int(i);
  LabeledSubset out;
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    const auto it = remap.find(dataset.labels[i]);
    if (it == remap.end()) continue;
    out.images.push_back(dataset.images[i]);
    out.labels.push_back(it->second);
  }
  return out;
}

GalleryProbe build_gallery_probe(std::span<const Signature> signatures, std::span<const int> classes,
                                 std::uint64_t seed) {
  if (classes.size() < 2) throw ProtocolError("verification needs at least one enrolled and one imposter class");
  std::vector<int> ids(classes.begin(), classes.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ProtocolError("duplicate class in verification set");
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  GalleryProbe gp;
  const std::size_t nenrolled = (ids.size() + 1) / 2;
  gp.enrolled.assign(ids.begin(), ids.begin() + std::ptrdiff_t(nenrolled));
  gp.imposters.assign(ids.begin() + std::ptrdiff_t(nenrolled), ids.end());
  std::sort(gp.enrolled.begin(), gp.enrolled.end());
  std::sort(gp.imposters.begin(), gp.imposters.end());

  std::map<int, std::vector<const Signature*>> by_class;
  for (const auto& s : signatures) by_class[s.class_id].push_back(&s);
  for (auto& [c, list] : by_class) {
    std::sort(list.begin(), list.end(), [](const Signature* a, const Signature* b) { return a->sample_id < b->sample_id; });
  }

  for (int c : gp.enrolled) {
    const auto& list = by_class[c];
    if (list.size() < 2) throw ProtocolError("enrolled class " + std::to_string(c) + " needs at least two samples");
    const std::size_t half = list.size() / 2;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i < half) gp.gallery.push_back(*list[i]);
      else gp.probes.push_back({*list[i], c});
    }
  }
  std::uniform_int_distribution<std::size_t> pick(0, gp.enrolled.size() - 1);
  for (int c : gp.imposters) {
    const auto& list = by_class[c];
    if (list.empty()) throw ProtocolError("imposter class " + std::to_string(c) + " has no samples");
    for (const Signature* s : list) gp.probes.push_back({*s, gp.enrolled[pick(rng)]});
  }
  return gp;
}

VerificationReport evaluate_verification(CombNet& model, const Dataset& dataset, std::span<const int> classes,
                                         std::uint64_t seed) {
  const auto indices = dataset.indices_of(classes);
  const bool was_training = model.training();
  model.set_training(false);
  const auto sigs = extract_signatures(model, dataset.images, indices, dataset.labels);
  model.set_training(was_training);
  const GalleryProbe gp = build_gallery_probe(sigs, classes, seed);
  VerificationReport r;
  r.scores = run_verification(gp.gallery, gp.probes);
  r.det = det_metrics(r.scores);
  r.enrolled = gp.enrolled;
  r.imposters = gp.imposters;
  return r;
}

CrossReport cross_dataset_experiment(CombNet& model, const Dataset& target, int folds, std::uint64_t seed) {
  if (folds < 1) throw ConfigError("fold count must be positive");
  const int k = target.num_classes();
  const int per_fold = k / folds;
  if (per_fold < 2) {
    throw ProtocolError(std::to_string(k) + " classes cannot fill " + std::to_string(folds) + " folds of two classes");
  }
  const auto ids = shuffled_classes(k, seed);
  CrossReport report;
  for (int f = 0; f < folds; ++f) {
    const auto begin = ids.begin() + std::ptrdiff_t(f * per_fold);
    const auto end = f + 1 == folds ? ids.end() : begin + per_fold;
    FoldResult fold;
    fold.classes.assign(begin, end);
    std::sort(fold.classes.begin(), fold.classes.end());
    const auto v = evaluate_verification(model, target, fold.classes, seed + std::uint64_t(f) + 1);
    fold.eer = v.det.eer;
    fold.auc = v.det.auc;
    report.mean_eer += fold.eer / folds;
    report.mean_auc += fold.auc / folds;
    report.folds.push_back(std::move(fold));
  }
  return report;
}

void to_json(nlohmann::json& j, const WithinConfig& cfg) {
  j = nlohmann::json{{"stage1", cfg.stage1}, {"stage2", cfg.stage2}, {"test_fraction", cfg.test_fraction}, {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, WithinConfig& cfg) {
  for (const auto& [key, value] : j.items()) {
    if (key != "stage1" && key != "stage2" && key != "test_fraction" && key != "seed") {
      throw ConfigError("unknown protocol key '" + key + "'");
    }
  }
  if (j.contains("stage1")) from_json(j.at("stage1"), cfg.stage1);
  if (j.contains("stage2")) from_json(j.at("stage2"), cfg.stage2);
  if (j.contains("test_fraction")) j.at("test_fraction").get_to(cfg.test_fraction);
  if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
}

std::vector<CombNetVariant> ablation_variants() {
  return {CombNetVariant::random_init(), CombNetVariant::pretrained(), CombNetVariant::pretrained_eap(),
          CombNetVariant::pretrained_eap_tel()};
}

WithinReport within_dataset_experiment(const Dataset& dataset, const WithinConfig& cfg,
                                       std::span<const CombNetVariant> variants, std::ostream* log) {
  WithinReport report;
  report.split = split_classes(dataset.num_classes(), cfg.test_fraction, cfg.seed);
  const LabeledSubset pool = select_classes(dataset, report.split.train);

  std::map<PoolKind, Encoder> encoders;
  for (const auto& v : variants) {
    if (v.init != InitKind::Pretrained || encoders.count(v.pool)) continue;
    TrainConfig c1 = cfg.stage1;
    c1.pool = v.pool;
    auto r1 = train_stage1(pool.images, c1, log);
    report.stage1.emplace_back(v.pool, std::move(r1.report));
    encoders.emplace(v.pool, std::move(r1.encoder));
  }

  for (const auto& v : variants) {
    TrainConfig c2 = cfg.stage2;
    c2.pool = v.pool;
    c2.head = v.head;
    const Encoder* init = v.init == InitKind::Pretrained ? &encoders.at(v.pool) : nullptr;
    auto r2 = train_stage2(pool.images, pool.labels, init, c2, log);
    VariantResult result{v, std::move(r2.report), std::nullopt};
    if (v.head == HeadKind::Tel) result.verification = evaluate_verification(r2.model, dataset, report.split.test, cfg.seed);
    report.variants.push_back(std::move(result));
  }
  return report;
}

void write_report(const VerificationReport& r, std::ostream& out) {
  out << std::setprecision(6);
  out << "eer: " << r.det.eer << '\n';
  out << "auc: " << r.det.auc << '\n';
  out << "genuine_scores: " << r.scores.genuine.size() << '\n';
  out << "imposter_scores: " << r.scores.imposter.size() << '\n';
  write_ids(out, "enrolled_classes", r.enrolled);
  write_ids(out, "imposter_classes", r.imposters);
}

void write_report(const CrossReport& r, std::ostream& out) {
  out << std::setprecision(6);
  out << "folds: " << r.folds.size() << '\n';
  out << "mean_eer: " << r.mean_eer << '\n';
  out << "mean_auc: " << r.mean_auc << '\n';
  out << "fold  classes  eer       auc\n";
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    out << std::left << std::setw(6) << i << std::setw(9) << r.folds[i].classes.size() << std::setw(10)
        << r.folds[i].eer << r.folds[i].auc << '\n';
  }
  out << std::right;
}

void write_report(const WithinReport& r, std::ostream& out) {
  out << std::setprecision(6);
  write_ids(out, "train_classes", r.split.train);
  write_ids(out, "test_classes", r.split.test);
  for (const auto& [pool, rep] : r.stage1) {
    out << "stage1_" << to_string(pool) << "_best_ssim: " << rep.best_metric << '\n';
    out << "stage1_" << to_string(pool) << "_best_epoch: " << rep.best_epoch << '\n';
  }
  out << "variant                    epoch1    accuracy  eer       auc\n";
  for (const auto& v : r.variants) {
    const double first = v.stage2.val_metric.empty() ? 0.0 : v.stage2.val_metric.front();
    out << std::left << std::setw(27) << v.variant.name() << std::setw(10) << first << std::setw(10)
        << v.stage2.best_metric;
    if (v.verification) out << std::setw(10) << v.verification->det.eer << v.verification->det.auc;
    else out << std::setw(10) << "-" << "-";
    out << '\n' << std::right;
  }
}

void write_loss_csv(const TrainReport& report, std::ostream& out) {
  out << "epoch,loss,metric\n" << std::setprecision(17);
  for (std::size_t i = 0; i < report.train_loss.size(); ++i) {
    out << i + 1 << ',' << report.train_loss[i] << ',' << report.val_metric[i] << '\n';
  }
}

}  // namespace irisnet
