#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace irisnet;

namespace {

Eigen::MatrixXd as_matrix(const Tensor<double>& t) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      t.data().data(), t.dim(t.rank() - 2), t.dim(t.rank() - 1));
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("ssim identities") {
  std::mt19937_64 rng(1);
  auto a = oracle::random_tensor<float>({20, 24}, rng, 0, 1);
  auto b = oracle::random_tensor<float>({20, 24}, rng, 0, 1);
  CHECK(ssim(a, a).item() == 1.0f);
  CHECK(ssim(a, b).item() == ssim(b, a).item());
  CHECK(ssim(a, b).item() < 1.0f);
  CHECK(reconstruction_loss(a, a).item() == 0.0f);
}

TEST_CASE("ssim of constant images has the closed form") {
  const double c1 = 1e-4;
  const auto s = ssim(Tensor<double>::zeros({16, 16}), Tensor<double>::ones({16, 16})).item();
  CHECK(std::abs(s - c1 / (1 + c1)) < 1e-9);
  const auto l = reconstruction_loss(Tensor<float>::zeros({16, 16}), Tensor<float>::ones({16, 16})).item();
  CHECK(l == doctest::Approx(1 - 9.999e-5).epsilon(1e-6));
}

TEST_CASE("ssim matches a direct windowed computation") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = oracle::random_tensor<double>({17, 21}, rng, 0, 1);
    auto b = oracle::random_tensor<double>({17, 21}, rng, 0, 1);
    const double ref = oracle::ssim(as_matrix(a), as_matrix(b), 11, 1.5, 1.0);
    CHECK(ssim(a, b).item() == doctest::Approx(ref).epsilon(1e-10));
  }
}

TEST_CASE("ssim equals one only for equal images") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    auto a = oracle::random_tensor<double>({2, 1, 12, 12}, rng, 0, 1);
    auto b = a.clone();
    b.mutable_data()[Index(i * 7)] += 0.01;
    CHECK(ssim(a, b).item() < 1.0);
    const double lr = reconstruction_loss(a, b).item();
    CHECK(lr > 0.0);
    CHECK(lr < 2.0);
  }
}

TEST_CASE("ssim errors") {
  CHECK_THROWS_AS(ssim(Tensor<float>({8, 8}), Tensor<float>({8, 8})), ConfigError);
  CHECK_THROWS_AS(ssim(Tensor<float>({12, 12}), Tensor<float>({12, 13})), DimensionError);
  SsimConfig even;
  even.window = 4;
  CHECK_THROWS_AS(ssim(Tensor<float>({12, 12}), Tensor<float>({12, 12}), even), ConfigError);
}

TEST_CASE("ssim loss gradient on 16x16 images, 10 pixels, 32-bit") {
  // Analytic gradient from the float build; central differences in double.
  std::mt19937_64 rng(3);
  auto a = oracle::random_tensor<double>({16, 16}, rng, 0, 1);
  auto b = oracle::random_tensor<double>({16, 16}, rng, 0.05, 0.95);
  Tensor<float> bf = b.cast<float>();
  bf.set_requires_grad(true);
  {
    Tape<float> tape;
    tape.backward(reconstruction_loss(a.cast<float>(), bf));
  }
  std::uniform_int_distribution<Index> pick(0, 255);
  const double eps = 1e-6;
  std::vector<std::pair<double, double>> pairs;
  double scale = 0;
  for (int i = 0; i < 10; ++i) {
    const Index j = pick(rng);
    auto p = b.clone(), m = b.clone();
    p.mutable_data()[j] += eps;
    m.mutable_data()[j] -= eps;
    const double numeric = (reconstruction_loss(a, p).item() - reconstruction_loss(a, m).item()) / (2 * eps);
    pairs.emplace_back(bf.grad()[j], numeric);
    scale = std::max(scale, std::abs(numeric));
  }
  double worst = 0;
  for (auto [an, nu] : pairs) worst = std::max(worst, gradcheck::rel_error(an, nu, 1e-3 * scale));
  CHECK(worst < 1e-2);
}

TEST_CASE("cross entropy") {
  const std::vector<int> zero{0};
  CHECK(cross_entropy(Tensor<float>({1, 4}), zero).item() == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  CHECK(cross_entropy(Tensor<float>({1, 3}, {50, 0, 0}), zero).item() < 1e-6f);
  CHECK_THROWS_AS(cross_entropy(Tensor<float>({1, 3}), std::vector<int>{3}), ContractError);
  CHECK_THROWS_AS(cross_entropy(Tensor<float>({2, 3}), zero), ContractError);

  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    auto z = oracle::random_tensor<double>({5, 7}, rng, -4, 4);
    std::vector<int> labels;
    std::uniform_int_distribution<int> lab(0, 6);
    double ref = 0;
    for (Index r = 0; r < 5; ++r) {
      labels.push_back(lab(rng));
      double s = 0;
      for (Index k = 0; k < 7; ++k) s += std::exp(z.data()[r * 7 + k]);
      ref += std::log(s) - z.data()[r * 7 + labels.back()];
    }
    ref /= 5;
    const double got = cross_entropy(z.cast<float>(), labels).item();
    CHECK(std::abs(got - ref) < 1e-5);
    CHECK(got >= 0);
  }
}

}  // TEST_SUITE
