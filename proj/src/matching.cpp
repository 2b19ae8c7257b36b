#include "irisnet/matching.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace irisnet {

namespace {

void require_signature_model(const CombNet& model) {
  if (model.variant().head != HeadKind::Tel) {
    throw CapabilityError("signatures come from the TEL layer; model " + model.variant().name() + " has none");
  }
  if (model.training()) throw StateError("signature extraction needs the model in inference mode");
}

std::vector<Signature> rows_to_signatures(const Tensorf& sig, std::span<const std::size_t> chunk,
                                          const std::vector<int>& labels) {
  std::vector<Signature> out;
  const auto m = sig.matrix();
  for (Index r = 0; r < m.rows(); ++r) {
    const std::size_t idx = chunk[std::size_t(r)];
    out.push_back({m.row(r).transpose(), labels.empty() ? 0 : labels[idx], int(idx)});
  }
  return out;
}

}  // namespace

Signature extract_signature(CombNet& model, const IrisImage& image, int class_id, int sample_id) {
  require_signature_model(model);
  const auto out = model.forward(to_batch(std::span<const IrisImage>(&image, 1)));
  Signature s;
  s.values = out.signature->matrix().row(0).transpose();
  s.class_id = class_id;
  s.sample_id = sample_id;
  return s;
}

std::vector<Signature> extract_signatures(CombNet& model, const std::vector<IrisImage>& images,
                                          std::span<const std::size_t> indices, const std::vector<int>& labels,
                                          int batch_size) {
  require_signature_model(model);
  std::vector<Signature> out;
  for (std::size_t i = 0; i < indices.size(); i += std::size_t(batch_size)) {
    const auto chunk = indices.subspan(i, std::min(indices.size() - i, std::size_t(batch_size)));
    const auto res = model.forward(to_batch(images, chunk));
    auto part = rows_to_signatures(*res.signature, chunk, labels);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double dissimilarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  if (a.size() != b.size()) {
    throw DimensionError("signature dimensions differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const Eigen::VectorXd da = a.cast<double>();
  const Eigen::VectorXd db = b.cast<double>();
  const double na = da.norm();
  const double nb = db.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateSignatureError("signature has zero norm");
  return (da / na - db / nb).norm();
}

ScoreSet run_verification(std::span<const Signature> gallery, std::span<const Probe> probes) {
  std::map<int, std::vector<const Signature*>> enrolled;
  for (const auto& g : gallery) enrolled[g.class_id].push_back(&g);
  ScoreSet scores;
  for (const auto& p : probes) {
    const auto it = enrolled.find(p.claimed_class);
    if (it == enrolled.end()) throw ProtocolError("probe claims class " + std::to_string(p.claimed_class) + " which is not enrolled");
    double best = std::numeric_limits<double>::infinity();
    for (const Signature* g : it->second) best = std::min(best, dissimilarity(p.signature, *g));
    (p.signature.class_id == p.claimed_class ? scores.genuine : scores.imposter).push_back(best);
  }
  return scores;
}

DetMetrics det_metrics(const ScoreSet& scores) {
  if (scores.genuine.empty() || scores.imposter.empty()) throw InputError("DET metrics need genuine and imposter scores");
  for (const auto* list : {&scores.genuine, &scores.imposter}) {
    for (double s : *list) {
      if (!std::isfinite(s)) throw InputError("scores must be finite");
    }
  }
  std::vector<double> gen = scores.genuine;
  std::vector<double> imp = scores.imposter;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  std::vector<double> thresholds = gen;
  thresholds.insert(thresholds.end(), imp.begin(), imp.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double ng = double(gen.size());
  const double ni = double(imp.size());
  DetMetrics m;
  m.curve.push_back({-std::numeric_limits<double>::infinity(), 0.0, 1.0});
  std::size_t gi = 0, ii = 0;
  for (double t : thresholds) {
    while (gi < gen.size() && gen[gi] <= t) ++gi;
    while (ii < imp.size() && imp[ii] <= t) ++ii;
    m.curve.push_back({t, double(ii) / ni, double(gen.size() - gi) / ng});
  }

  for (std::size_t i = 1; i < m.curve.size(); ++i) {
    const auto& a = m.curve[i - 1];
    const auto& b = m.curve[i];
    m.auc += (b.far - a.far) * (a.frr + b.frr) / 2.0;
  }
  for (std::size_t i = 1; i < m.curve.size(); ++i) {
    const double d1 = m.curve[i].frr - m.curve[i].far;
    if (d1 <= 0.0) {
      const auto& a = m.curve[i - 1];
      const auto& b = m.curve[i];
      const double d0 = a.frr - a.far;
      const double w = d0 / (d0 - d1);
      m.eer = a.far + w * (b.far - a.far);
      break;
    }
  }
  return m;
}

void write_det_csv(const std::vector<DetPoint>& curve, std::ostream& out) {
  out << "threshold,far,frr\n" << std::setprecision(17);
  for (const auto& p : curve) out << p.threshold << ',' << p.far << ',' << p.frr << '\n';
}

void write_scores_csv(const ScoreSet& scores, std::ostream& out) {
  out << "kind,score\n" << std::setprecision(17);
  for (double s : scores.genuine) out << "genuine," << s << '\n';
  for (double s : scores.imposter) out << "imposter," << s << '\n';
}

ScoreSet read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "kind,score") throw FormatError("scores CSV must start with 'kind,score'");
  ScoreSet scores;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("scores CSV line " + std::to_string(lineno) + ": missing comma");
    const std::string kind = line.substr(0, comma);
    double value;
    std::istringstream ss(line.substr(comma + 1));
    if (!(ss >> value) || !std::isfinite(value) || value < 0.0) {
      throw FormatError("scores CSV line " + std::to_string(lineno) + ": bad score");
    }
    if (kind == "genuine") scores.genuine.push_back(value);
    else if (kind == "imposter") scores.imposter.push_back(value);
    else throw FormatError("scores CSV line " + std::to_string(lineno) + ": unknown kind '" + kind + "'");
  }
  return scores;
}

void write_signatures_csv(std::span<const Signature> signatures, std::ostream& out) {
  out << "class_id,sample_id";
  const Index dim = signatures.empty() ? 0 : signatures.front().values.size();
  for (Index i = 0; i < dim; ++i) out << ",v" << i;
  out << '\n' << std::setprecision(9);
  for (const auto& s : signatures) {
    out << s.class_id << ',' << s.sample_id;
    for (Index i = 0; i < s.values.size(); ++i) out << ',' << s.values[i];
    out << '\n';
  }
}

}  // namespace irisnet
