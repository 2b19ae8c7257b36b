#include <doctest.h>

#include <random>

#include "irisnet/models.hpp"
#include "oracles.hpp"

using namespace irisnet;

namespace {

CombNetConfig small_config(int classes = 10) {
  CombNetConfig c;
  c.num_classes = classes;
  c.height = 32;
  c.width = 128;
  c.hidden = 64;
  return c;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("autoencoder shapes at both resolutions") {
  Autoencoder ae = build_autoencoder(PoolKind::Eap, 1);
  ae.encoder.set_training(false);
  for (auto [h, w] : {std::pair<Index, Index>{64, 512}, {32, 128}}) {
    Tensorf x({1, 1, h, w}, 0.5f);
    const auto z = ae.encoder.forward(x);
    CHECK(z.shape() == Shape{1, 256, h / 16, w / 16});
    CHECK(ae.decoder.forward(z).shape() == x.shape());
  }
  CHECK(count_params(ae.decoder).total == 0);
  CHECK_THROWS_AS(ae.encoder.forward(Tensorf({1, 1, 40, 128})), DimensionError);
}

TEST_CASE("CombNet TEL at full scale: 227 logits and a 1024-D signature") {
  CombNetConfig c;
  CombNet m = build_combnet({PoolKind::Eap, HeadKind::Tel, InitKind::Random}, c);
  m.set_training(false);
  const auto out = m.forward(Tensorf({1, 1, 64, 512}, 0.3f));
  CHECK(out.logits.shape() == Shape{1, 227});
  REQUIRE(out.signature);
  CHECK(out.signature->shape() == Shape{1, 1024});
  const auto p = softmax(out.logits);
  CHECK(p.matrix().row(0).sum() == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(count_params(m).total == 2'984'355);
}

TEST_CASE("parameter accounting") {
  const auto tel = count_params(CombNetVariant::pretrained_eap_tel(), CombNetConfig{});
  CHECK(tel.conv == 2'748'672);
  CHECK(tel.bn == 3'008);
  CHECK(tel.fc == 232'675);
  CHECK(tel.total == 2'984'355);
  CHECK(tel.total == tel.conv + tel.bn + tel.fc);

  const auto fc = count_params(CombNetVariant::pretrained(), CombNetConfig{});
  CHECK(fc.total == 135'541'155);
  CHECK(fc.total == fc.conv + fc.bn + fc.fc);
  bool saw_fc1 = false;
  for (const auto& l : fc.layers) {
    if (l.name == "head.fc1") {
      saw_fc1 = true;
      CHECK(l.count == 32768 * 4096 + 4096);
    }
  }
  CHECK(saw_fc1);
  const double ratio = double(fc.total) / double(tel.total);
  CHECK(ratio >= 44.0);
  CHECK(ratio <= 47.0);

  // Pooling kind and init do not change the count.
  CHECK(count_params(CombNetVariant::random_init(), CombNetConfig{}).total == fc.total);
}

TEST_CASE("analytic count equals the built model") {
  for (const auto& v : {CombNetVariant::random_init(), CombNetVariant::pretrained_eap_tel()}) {
    const auto c = small_config();
    std::optional<Encoder> enc;
    if (v.init == InitKind::Pretrained) {
      EncoderSpec spec;
      spec.pool = v.pool;
      std::mt19937_64 rng(3);
      enc.emplace(spec, rng);
    }
    CombNet m = build_combnet(v, c, enc ? &*enc : nullptr);
    CHECK(count_params(m).total == count_params(v, c).total);
    Index learnable = 0;
    for (const auto& t : m.parameters()) learnable += t.numel();
    CHECK(learnable == count_params(v, c).total);
  }
}

TEST_CASE("TwoFC head flattens the bottleneck") {
  CombNet m = build_combnet(CombNetVariant::random_init(), small_config(5));
  m.set_training(false);
  const auto out = m.forward(Tensorf({2, 1, 32, 128}, 0.1f));
  CHECK(out.logits.shape() == Shape{2, 5});
  CHECK_FALSE(out.signature);
  CHECK(count_params(m).layers.back().count == 64 * 5 + 5);
}

TEST_CASE("construction errors") {
  CHECK_THROWS_AS(build_combnet(CombNetVariant::pretrained(), small_config()), StateError);
  CHECK_THROWS_AS(build_combnet(CombNetVariant::random_init(), small_config(1)), ConfigError);
  EncoderSpec spec;
  spec.pool = PoolKind::Max;
  std::mt19937_64 rng(1);
  Encoder enc(spec, rng);
  CHECK_THROWS_AS(build_combnet(CombNetVariant::pretrained_eap(), small_config(), &enc), StateError);
  CombNet m = build_combnet(CombNetVariant::pretrained(), small_config(), &enc);
  CHECK_THROWS_AS(m.forward(Tensorf({1, 1, 32, 64})), DimensionError);
  CHECK(parse_head_kind("fc") == HeadKind::TwoFc);
  CHECK_THROWS_AS(parse_head_kind("gap"), ConfigError);
}

TEST_CASE("pretrained init copies the encoder") {
  EncoderSpec spec;
  spec.pool = PoolKind::Eap;
  std::mt19937_64 rng(5);
  Encoder enc(spec, rng);
  enc.named_tensors()[4].tensor.mutable_data().setConstant(0.25f);  // a running mean
  CombNet m = build_combnet(CombNetVariant::pretrained_eap_tel(), small_config(), &enc);
  const auto src = enc.named_tensors();
  const auto dst = m.encoder().named_tensors();
  REQUIRE(src.size() == dst.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    CHECK(src[i].name == dst[i].name);
    CHECK((src[i].tensor.data() == dst[i].tensor.data()).all());
    CHECK_FALSE(src[i].tensor.same_storage(dst[i].tensor));
  }
}

TEST_CASE("variant names") {
  CHECK(CombNetVariant::random_init().name() == "CombNet_R");
  CHECK(CombNetVariant::pretrained().name() == "CombNet_Etheta");
  CHECK(CombNetVariant::pretrained_eap().name() == "CombNet_Etheta^{EAP}");
  CHECK(CombNetVariant::pretrained_eap_tel().name() == "CombNet_Etheta^{EAP+TEL}");
}

TEST_CASE("TEL logits ignore the position of a texture patch") {
  // Zero padding in the convolutions makes wrap-around shifts inexact at the
  // borders, so the patch sits on a blank canvas wide enough that its
  // receptive-field footprint never reaches the edge.
  CombNetConfig c = small_config();
  c.width = 256;
  CombNet m = build_combnet({PoolKind::Eap, HeadKind::Tel, InitKind::Random}, c);
  m.set_training(false);
  std::mt19937_64 rng(9);
  const auto patch = oracle::random_tensor<float>({32, 16}, rng, 0, 1);
  auto place = [&](Index x0) {
    Tensorf img({1, 1, 32, 256});
    for (Index y = 0; y < 32; ++y)
      for (Index x = 0; x < 16; ++x) img.mutable_data()[y * 256 + x0 + x] = patch.data()[y * 16 + x];
    return img;
  };
  const auto a = m.forward(place(96)).logits;
  for (Index shift : {16, 32}) {
    const auto b = m.forward(place(96 + shift)).logits;
    CHECK((a.data() - b.data()).abs().maxCoeff() < 1e-4f);
  }
}

}  // TEST_SUITE
