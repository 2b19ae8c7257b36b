#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "irisnet/data_io.hpp"
#include "irisnet/models.hpp"

namespace irisnet {

struct Signature {
  Eigen::VectorXf values;
  int class_id = 0;
  int sample_id = 0;
};

/// TEL activations of a TEL-head model in inference mode.
Signature extract_signature(CombNet& model, const IrisImage& image, int class_id = 0, int sample_id = 0);
std::vector<Signature> extract_signatures(CombNet& model, const std::vector<IrisImage>& images,
                                          std::span<const std::size_t> indices, const std::vector<int>& labels,
                                          int batch_size = 32);

/// Euclidean distance between the unit-normalized vectors, in [0, 2].
double dissimilarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b);
inline double dissimilarity(const Signature& a, const Signature& b) { return dissimilarity(a.values, b.values); }

struct Probe {
  Signature signature;
  int claimed_class = 0;
};

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> imposter;
  bool operator==(const ScoreSet&) const = default;
};

/// Each probe scores the minimum dissimilarity over the gallery samples of
/// its claimed class; genuine when the claim is the probe's true class.
ScoreSet run_verification(std::span<const Signature> gallery, std::span<const Probe> probes);

struct DetPoint {
  double threshold;
  double far;
  double frr;
};

struct DetMetrics {
  std::vector<DetPoint> curve;  // starts at (far 0, frr 1), threshold -inf
  double eer = 0.0;
  double auc = 0.0;
};

/// Sweeps every distinct score as a threshold (accept iff score <= t).
DetMetrics det_metrics(const ScoreSet& scores);

void write_det_csv(const std::vector<DetPoint>& curve, std::ostream& out);
void write_scores_csv(const ScoreSet& scores, std::ostream& out);
ScoreSet read_scores_csv(std::istream& in);
void write_signatures_csv(std::span<const Signature> signatures, std::ostream& out);

}  // namespace irisnet
