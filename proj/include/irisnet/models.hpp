#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "irisnet/layers.hpp"

namespace irisnet {

using Tensorf = Tensor<float>;

enum class HeadKind { TwoFc, Tel };
enum class InitKind { Random, Pretrained };

std::string_view to_string(HeadKind kind);
std::string_view to_string(InitKind kind);
HeadKind parse_head_kind(std::string_view s);
InitKind parse_init_kind(std::string_view s);

struct ConvBlockSpec {
  int kernel;
  int stride;
  int padding;
  int out_channels;
};

/// Four Conv -> BatchNorm -> ReLU -> Pool(2x2, s2) blocks; 16x spatial
/// reduction, 256 output channels.
struct EncoderSpec {
  std::array<ConvBlockSpec, 4> blocks{{{5, 1, 2, 32}, {3, 1, 1, 64}, {3, 1, 1, 128}, {3, 1, 1, 256}}};
  PoolKind pool = PoolKind::Max;
  int in_channels = 1;

  static constexpr int kDownsample = 16;
  int out_channels() const { return blocks.back().out_channels; }
};

/// Four parameterless pixel-shuffle stages (r = 2): 256 -> 64 -> 16 -> 4 -> 1.
struct DecoderSpec {
  int stages = 4;
  int factor = 2;
};

struct CombNetVariant {
  PoolKind pool = PoolKind::Eap;
  HeadKind head = HeadKind::Tel;
  InitKind init = InitKind::Pretrained;

  /// CombNet_R: random init, two FC layers, max pooling.
  static CombNetVariant random_init() { return {PoolKind::Max, HeadKind::TwoFc, InitKind::Random}; }
  /// CombNet_Etheta: pretrained encoder, two FC layers, max pooling.
  static CombNetVariant pretrained() { return {PoolKind::Max, HeadKind::TwoFc, InitKind::Pretrained}; }
  /// CombNet_Etheta^EAP.
  static CombNetVariant pretrained_eap() { return {PoolKind::Eap, HeadKind::TwoFc, InitKind::Pretrained}; }
  /// CombNet_Etheta^{EAP+TEL}.
  static CombNetVariant pretrained_eap_tel() { return {PoolKind::Eap, HeadKind::Tel, InitKind::Pretrained}; }

  std::string name() const;
  bool operator==(const CombNetVariant&) const = default;
};

struct CombNetConfig {
  int num_classes = 227;
  int height = 64;   // normalized iris images are 512 wide by 64 tall
  int width = 512;
  int hidden = 4096;          // penultimate FC width of the two-FC head
  int signature_width = 1024;  // TEL head conv channels
  std::uint64_t seed = 0;
};

struct NamedTensor {
  std::string name;
  Tensorf tensor;
  bool learnable;
};
using NamedTensors = std::vector<NamedTensor>;

/// Conv -> BatchNorm -> ReLU, optionally followed by pooling.
struct ConvBlock {
  Conv2d<float> conv;
  BatchNorm<float> bn;
  std::optional<PoolSpec> pool;

  Tensorf forward(const Tensorf& x);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

class Encoder {
 public:
  Encoder(const EncoderSpec& spec, std::mt19937_64& rng);

  /// [N x 1 x H x W] -> [N x 256 x H/16 x W/16]; H and W must be multiples of 16.
  Tensorf forward(const Tensorf& x);
  void set_training(bool training);
  bool training() const { return blocks_.front().bn.training; }

  const EncoderSpec& spec() const { return spec_; }
  NamedTensors named_tensors(const std::string& prefix = "encoder.") const;
  std::vector<Tensorf> parameters() const;

 private:
  EncoderSpec spec_;
  std::vector<ConvBlock> blocks_;
};

class Decoder {
 public:
  explicit Decoder(DecoderSpec spec = {}) : spec_(spec) {}
  Tensorf forward(const Tensorf& z) const;
  const DecoderSpec& spec() const { return spec_; }

 private:
  DecoderSpec spec_;
};

struct Autoencoder {
  Encoder encoder;
  Decoder decoder;

  Tensorf forward(const Tensorf& x) { return decoder.forward(encoder.forward(x)); }
};

Autoencoder build_autoencoder(PoolKind pool, std::uint64_t seed);

/// Encoder plus classification head.
class CombNet {
 public:
  struct Output {
    Tensorf logits;
    std::optional<Tensorf> signature;  // TEL activation [N x 1024], TEL head only
  };

  CombNet(const CombNetVariant& variant, const CombNetConfig& config, const Encoder* pretrained);

  Output forward(const Tensorf& x);
  Tensorf logits(const Tensorf& x) { return forward(x).logits; }

  void set_training(bool training);
  bool training() const { return encoder_.training(); }
  const CombNetVariant& variant() const { return variant_; }
  const CombNetConfig& config() const { return config_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }

  NamedTensors named_tensors() const;
  std::vector<Tensorf> parameters() const;
  std::vector<Tensorf> head_parameters() const;

 private:
  CombNet(const CombNetVariant& variant, const CombNetConfig& config, const Encoder* pretrained,
          std::mt19937_64&& rng);

  CombNetVariant variant_;
  CombNetConfig config_;
  Encoder encoder_;
  std::optional<ConvBlock> tel_conv_;
  std::optional<Linear<float>> fc_hidden_;
  Linear<float> fc_out_;
};

/// Builds a CombNet. A pretrained variant copies the given encoder's
/// parameters and running statistics; passing none is a StateError.
CombNet build_combnet(const CombNetVariant& variant, const CombNetConfig& config,
                      const Encoder* pretrained = nullptr);

struct LayerParams {
  std::string name;
  std::string kind;  // conv | bn | fc
  Index count;
};

struct ParamReport {
  std::vector<LayerParams> layers;
  Index conv = 0;
  Index bn = 0;
  Index fc = 0;
  Index total = 0;

  void add(std::string name, std::string kind, Index count);
};

/// Learnable parameters of a built model (BatchNorm running stats excluded).
ParamReport count_params(const CombNet& model);
ParamReport count_params(const Encoder& encoder);
ParamReport count_params(const Decoder& decoder);

/// Same accounting from the architecture description alone, without
/// allocating weights.
ParamReport count_params(const CombNetVariant& variant, const CombNetConfig& config);

}  // namespace irisnet
