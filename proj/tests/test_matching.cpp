#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "irisnet/experiments.hpp"
#include "oracles.hpp"

using namespace irisnet;

namespace {

Signature sig(std::vector<float> v, int cls, int id = 0) {
  Signature s;
  s.values = Eigen::Map<Eigen::VectorXf>(v.data(), Eigen::Index(v.size()));
  s.class_id = cls;
  s.sample_id = id;
  return s;
}

ScoreSet random_scores(std::mt19937_64& rng, int max_each) {
  std::uniform_int_distribution<int> count(1, max_each);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  // Coarse grid so ties between and within lists are common.
  std::uniform_int_distribution<int> grid(0, 20);
  const bool coarse = rng() % 2;
  ScoreSet s;
  const int ng = count(rng), ni = count(rng);
  for (int i = 0; i < ng; ++i) s.genuine.push_back(coarse ? grid(rng) / 10.0 : u(rng) * 0.8);
  for (int i = 0; i < ni; ++i) s.imposter.push_back(coarse ? grid(rng) / 10.0 : u(rng) * 0.8 + 0.4);
  return s;
}

}  // namespace

TEST_SUITE("matching") {

TEST_CASE("dissimilarity examples") {
  const Eigen::VectorXf a = Eigen::VectorXf::Unit(4, 0) + Eigen::VectorXf::Unit(4, 2) * 0.5f;
  const Eigen::VectorXf b = Eigen::VectorXf::Unit(4, 1);
  CHECK(dissimilarity(a, a) == 0.0);
  CHECK(dissimilarity(Eigen::VectorXf::Unit(4, 0), b) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(dissimilarity(Eigen::VectorXf(2 * a), b) == doctest::Approx(dissimilarity(a, b)).epsilon(1e-12));
  CHECK(dissimilarity(a, -a) == doctest::Approx(2.0));
  CHECK_THROWS_AS(dissimilarity(a, Eigen::VectorXf::Zero(4)), DegenerateSignatureError);
  CHECK_THROWS_AS(dissimilarity(a, Eigen::VectorXf::Ones(3)), DimensionError);
}

TEST_CASE("verification examples") {
  const std::vector<Signature> gallery{sig({1, 0}, 0), sig({0, 1}, 1)};
  SUBCASE("identical genuine probe scores zero") {
    const std::vector<Probe> probes{{sig({1, 0}, 0), 0}};
    const auto s = run_verification(gallery, probes);
    REQUIRE(s.genuine.size() == 1);
    CHECK(s.genuine[0] == 0.0);
    CHECK(s.imposter.empty());
  }
  SUBCASE("orthogonal cross claims score sqrt 2") {
    const std::vector<Probe> probes{{sig({1, 0}, 0), 1}, {sig({0, 1}, 1), 0}};
    const auto s = run_verification(gallery, probes);
    REQUIRE(s.imposter.size() == 2);
    for (double v : s.imposter) CHECK(v == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("unenrolled claim") {
    const std::vector<Probe> probes{{sig({1, 0}, 0), 7}};
    CHECK_THROWS_AS(run_verification(gallery, probes), ProtocolError);
  }
}

TEST_CASE("verification matches the all-pairs reference") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0, 1);
    std::uniform_int_distribution<int> cls(0, 4);
    std::vector<Signature> gallery, pool;
    for (int i = 0; i < 20; ++i) {
      Signature s;
      s.values = Eigen::VectorXf::NullaryExpr(8, [&] { return n(rng); });
      s.class_id = cls(rng);
      s.sample_id = i;
      (i < 12 ? gallery : pool).push_back(s);
    }
    std::vector<int> enrolled;
    for (const auto& g : gallery) enrolled.push_back(g.class_id);
    std::vector<Probe> probes;
    for (const auto& p : pool) probes.push_back({p, enrolled[std::size_t(rng() % enrolled.size())]});
    CHECK(run_verification(gallery, probes) == oracle::brute_force_verification(gallery, probes));
  }
}

TEST_CASE("DET examples") {
  SUBCASE("separated") {
    const auto m = det_metrics({{0.1, 0.2}, {0.3, 0.4}});
    CHECK(m.eer == 0.0);
    CHECK(m.auc == 0.0);
  }
  SUBCASE("overlapping") {
    const auto m = det_metrics({{0.1, 0.2, 0.3}, {0.25, 0.35, 0.45}});
    CHECK(m.eer == doctest::Approx(1.0 / 3).epsilon(1e-12));
    bool found = false;
    for (const auto& p : m.curve) {
      if (p.threshold == 0.25) {
        found = true;
        CHECK(p.far == doctest::Approx(1.0 / 3));
        CHECK(p.frr == doctest::Approx(1.0 / 3));
      }
    }
    CHECK(found);
  }
  SUBCASE("inverted") {
    const auto m = det_metrics({{0.3, 0.4}, {0.1, 0.2}});
    CHECK(m.eer == 1.0);
    CHECK(m.auc == doctest::Approx(1.0));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(det_metrics({{}, {0.1}}), InputError);
    CHECK_THROWS_AS(det_metrics({{0.1}, {}}), InputError);
    CHECK_THROWS_AS(det_metrics({{std::nan("")}, {0.1}}), InputError);
  }
}

TEST_CASE("DET curve is monotone and matches the exhaustive sweep") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto s = random_scores(rng, 40);
    const auto m = det_metrics(s);
    const auto ref = oracle::det_sweep(s);
    REQUIRE(m.curve.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(m.curve[i].far == ref[i].far);
      CHECK(m.curve[i].frr == ref[i].frr);
      if (i > 0) {
        CHECK(m.curve[i].far >= m.curve[i - 1].far);
        CHECK(m.curve[i].frr <= m.curve[i - 1].frr);
      }
    }
    CHECK(std::abs(m.auc - oracle::trapezoid_auc(ref)) < 1e-9);
    CHECK(m.eer >= 0.0);
    CHECK(m.eer <= 1.0);
  }
}

TEST_CASE("DET metrics are invariant under monotone transforms") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    auto s = random_scores(rng, 30);
    const auto m = det_metrics(s);
    for (auto* list : {&s.genuine, &s.imposter})
      for (double& v : *list) v = std::exp(3 * v) + 1;
    const auto m2 = det_metrics(s);
    CHECK(std::abs(m.eer - m2.eer) < 1e-9);
    CHECK(std::abs(m.auc - m2.auc) < 1e-9);
  }
}

TEST_CASE("CSV round trips") {
  const ScoreSet s{{0.125, 1.0 / 3}, {0.7, 1.9999999999}};
  std::stringstream io;
  write_scores_csv(s, io);
  CHECK(io.str().rfind("kind,score\n", 0) == 0);
  CHECK(read_scores_csv(io) == s);

  std::istringstream bad("kind,score\nfriend,0.1\n");
  CHECK_THROWS_AS(read_scores_csv(bad), FormatError);

  std::ostringstream det;
  write_det_csv(det_metrics(s).curve, det);
  CHECK(det.str().rfind("threshold,far,frr\n", 0) == 0);

  std::ostringstream sigs;
  const std::vector<Signature> v{sig({1, 2}, 3, 4)};
  write_signatures_csv(v, sigs);
  CHECK(sigs.str().rfind("class_id,sample_id,v0,v1\n3,4,", 0) == 0);
}

TEST_CASE("signature extraction") {
  CombNetConfig c;
  c.num_classes = 3;
  c.height = 32;
  c.width = 128;
  c.hidden = 8;
  CombNet tel = build_combnet({PoolKind::Eap, HeadKind::Tel, InitKind::Random}, c);
  const IrisImage zero(128, 32, std::vector<float>(128 * 32, 0.0f));
  CHECK_THROWS_AS(extract_signature(tel, zero), StateError);
  tel.set_training(false);
  const auto a = extract_signature(tel, zero);
  CHECK(a.values.size() == 1024);
  CHECK(a.values.allFinite());
  CHECK((extract_signature(tel, zero).values.array() == a.values.array()).all());

  CombNet fc = build_combnet(CombNetVariant::random_init(), c);
  fc.set_training(false);
  CHECK_THROWS_AS(extract_signature(fc, zero), CapabilityError);
}

TEST_CASE("class splits and folds") {
  CHECK_THROWS_AS(split_classes(4, 0.2, 1), ProtocolError);
  const auto s = split_classes(20, 0.2, 1);
  CHECK(s.test.size() == 4);
  CHECK(s.train.size() == 16);
  std::vector<int> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 20; ++i) CHECK(all[std::size_t(i)] == i);
  CHECK(split_classes(20, 0.2, 1).test == s.test);
}

TEST_CASE("gallery and probe construction") {
  std::vector<Signature> sigs;
  std::mt19937_64 rng(1);
  std::normal_distribution<float> n(0, 1);
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 4; ++i) {
      Signature s;
      s.values = Eigen::VectorXf::NullaryExpr(6, [&] { return n(rng); });
      s.class_id = c;
      s.sample_id = c * 4 + i;
      sigs.push_back(s);
    }
  const std::vector<int> classes{0, 1, 2, 3};
  const auto gp = build_gallery_probe(sigs, classes, 5);
  CHECK(gp.enrolled.size() == 2);
  CHECK(gp.imposters.size() == 2);
  CHECK(gp.gallery.size() == 4);
  int genuine = 0, imposter = 0;
  for (const auto& p : gp.probes) {
    CHECK(std::binary_search(gp.enrolled.begin(), gp.enrolled.end(), p.claimed_class));
    (p.signature.class_id == p.claimed_class ? genuine : imposter)++;
  }
  CHECK(genuine == 4);
  CHECK(imposter == 8);
  const auto scores = run_verification(gp.gallery, gp.probes);
  CHECK(scores.genuine.size() == 4);
  CHECK(scores.imposter.size() == 8);
}

}  // TEST_SUITE
