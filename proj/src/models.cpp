#include "irisnet/models.hpp"

namespace irisnet {

std::string_view to_string(HeadKind kind) { return kind == HeadKind::Tel ? "tel" : "fc"; }
std::string_view to_string(InitKind kind) { return kind == InitKind::Random ? "random" : "pretrained"; }

HeadKind parse_head_kind(std::string_view s) {
  if (s == "tel") return HeadKind::Tel;
  if (s == "fc") return HeadKind::TwoFc;
  throw ConfigError("unknown head kind '" + std::string(s) + "' (expected tel|fc)");
}

InitKind parse_init_kind(std::string_view s) {
  if (s == "random") return InitKind::Random;
  if (s == "pretrained") return InitKind::Pretrained;
  throw ConfigError("unknown init kind '" + std::string(s) + "' (expected random|pretrained)");
}

std::string CombNetVariant::name() const {
  std::string n = init == InitKind::Random ? "CombNet_R" : "CombNet_Etheta";
  if (pool == PoolKind::Eap && head == HeadKind::Tel) return n + "^{EAP+TEL}";
  if (pool == PoolKind::Eap) return n + "^{EAP}";
  if (head == HeadKind::Tel) return n + "^{TEL}";
  return n;
}

Tensorf ConvBlock::forward(const Tensorf& x) {
  Tensorf y = relu(bn.forward(conv.forward(x)));
  return pool ? pool2d(y, *pool) : y;
}

void ConvBlock::collect(const std::string& prefix, NamedTensors& out) const {
  out.push_back({prefix + "conv.weight", conv.weight, true});
  out.push_back({prefix + "conv.bias", conv.bias, true});
  out.push_back({prefix + "bn.gamma", bn.gamma, true});
  out.push_back({prefix + "bn.beta", bn.beta, true});
  out.push_back({prefix + "bn.running_mean", bn.running_mean, false});
  out.push_back({prefix + "bn.running_var", bn.running_var, false});
}

namespace {

ConvBlock make_block(Index in, const ConvBlockSpec& s, std::optional<PoolSpec> pool, std::mt19937_64& rng) {
  return ConvBlock{Conv2d<float>::create(in, s.out_channels, s.kernel, s.stride, s.padding, rng),
                   BatchNorm<float>::create(s.out_channels), pool};
}

std::vector<Tensorf> learnable(const NamedTensors& named) {
  std::vector<Tensorf> out;
  for (const auto& t : named)
    if (t.learnable) out.push_back(t.tensor);
  return out;
}

void copy_into(const NamedTensors& dst, const NamedTensors& src) {
  if (dst.size() != src.size()) throw ShapeMismatchError("encoder layouts differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].tensor.shape() != src[i].tensor.shape()) {
      throw ShapeMismatchError("tensor " + dst[i].name + " expects " + shape_string(dst[i].tensor.shape()) +
                               ", got " + shape_string(src[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    Tensorf t = dst[i].tensor;
    t.mutable_data() = src[i].tensor.data();
  }
}

Index conv_count(Index in, Index out, Index k) { return out * in * k * k + out; }

}  // namespace

Encoder::Encoder(const EncoderSpec& spec, std::mt19937_64& rng) : spec_(spec) {
  Index in = spec.in_channels;
  for (const auto& b : spec.blocks) {
    blocks_.push_back(make_block(in, b, PoolSpec{spec.pool, 2, 2}, rng));
    in = b.out_channels;
  }
}

Tensorf Encoder::forward(const Tensorf& x) {
  detail::require_rank(x.shape(), 4, "encoder input");
  if (x.dim(1) != spec_.in_channels || x.dim(2) % EncoderSpec::kDownsample != 0 ||
      x.dim(3) % EncoderSpec::kDownsample != 0) {
    throw DimensionError("encoder input " + shape_string(x.shape()) + " needs " +
                         std::to_string(spec_.in_channels) + " channel(s) and extents divisible by 16");
  }
  Tensorf h = x;
  for (auto& b : blocks_) h = b.forward(h);
  return h;
}

void Encoder::set_training(bool training) {
  for (auto& b : blocks_) b.bn.training = training;
}

NamedTensors Encoder::named_tensors(const std::string& prefix) const {
  NamedTensors out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + std::to_string(i) + ".", out);
  return out;
}

std::vector<Tensorf> Encoder::parameters() const { return learnable(named_tensors()); }

Tensorf Decoder::forward(const Tensorf& z) const {
  Tensorf h = z;
  for (int i = 0; i < spec_.stages; ++i) h = pixel_shuffle(h, spec_.factor);
  return h;
}

Autoencoder build_autoencoder(PoolKind pool, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EncoderSpec spec;
  spec.pool = pool;
  return Autoencoder{Encoder(spec, rng), Decoder{}};
}

namespace {

std::mt19937_64 validated_rng(const CombNetVariant& variant, const CombNetConfig& config, const Encoder* pretrained) {
  if (config.num_classes < 2) throw ConfigError("CombNet needs at least 2 classes");
  if (variant.init == InitKind::Pretrained && pretrained == nullptr) {
    throw StateError("pretrained initialisation requested but no encoder weights were loaded");
  }
  if (pretrained && pretrained->spec().pool != variant.pool) {
    throw StateError("pretrained encoder pooling '" + std::string(to_string(pretrained->spec().pool)) +
                     "' does not match variant pooling '" + std::string(to_string(variant.pool)) + "'");
  }
  if (config.height <= 0 || config.width <= 0 || config.height % EncoderSpec::kDownsample != 0 ||
      config.width % EncoderSpec::kDownsample != 0) {
    throw ConfigError("input extents must be positive multiples of 16");
  }
  return std::mt19937_64(config.seed);
}

EncoderSpec encoder_spec(PoolKind pool) {
  EncoderSpec spec;
  spec.pool = pool;
  return spec;
}

}  // namespace

CombNet::CombNet(const CombNetVariant& variant, const CombNetConfig& config, const Encoder* pretrained)
    : CombNet(variant, config, pretrained, validated_rng(variant, config, pretrained)) {}

CombNet::CombNet(const CombNetVariant& variant, const CombNetConfig& config, const Encoder* pretrained,
                 std::mt19937_64&& rng)
    : variant_(variant), config_(config), encoder_(encoder_spec(variant.pool), rng) {
  if (pretrained) copy_into(encoder_.named_tensors(), pretrained->named_tensors());
  const Index feat = encoder_.spec().out_channels();
  if (variant.head == HeadKind::Tel) {
    tel_conv_ = make_block(feat, ConvBlockSpec{3, 1, 1, config.signature_width}, std::nullopt, rng);
    fc_out_ = Linear<float>::create(config.signature_width, config.num_classes, rng);
  } else {
    const Index flat = feat * (config.height / EncoderSpec::kDownsample) * (config.width / EncoderSpec::kDownsample);
    fc_hidden_ = Linear<float>::create(flat, config.hidden, rng);
    fc_out_ = Linear<float>::create(config.hidden, config.num_classes, rng);
  }
}

CombNet::Output CombNet::forward(const Tensorf& x) {
  Tensorf features = encoder_.forward(x);
  if (tel_conv_) {
    Tensorf signature = texture_energy(tel_conv_->forward(features));
    return Output{fc_out_.forward(signature), signature};
  }
  Tensorf flat = flatten(features);
  if (flat.dim(1) != fc_hidden_->weight.dim(0)) {
    throw DimensionError("input " + shape_string(x.shape()) + " does not match the " +
                         std::to_string(config_.height) + "x" + std::to_string(config_.width) +
                         " resolution this two-FC head was built for");
  }
  return Output{fc_out_.forward(relu(fc_hidden_->forward(flat))), std::nullopt};
}

void CombNet::set_training(bool training) {
  encoder_.set_training(training);
  if (tel_conv_) tel_conv_->bn.training = training;
}

NamedTensors CombNet::named_tensors() const {
  NamedTensors out = encoder_.named_tensors();
  if (tel_conv_) {
    tel_conv_->collect("head.", out);
    out.push_back({"head.fc.weight", fc_out_.weight, true});
    out.push_back({"head.fc.bias", fc_out_.bias, true});
  } else {
    out.push_back({"head.fc1.weight", fc_hidden_->weight, true});
    out.push_back({"head.fc1.bias", fc_hidden_->bias, true});
    out.push_back({"head.fc2.weight", fc_out_.weight, true});
    out.push_back({"head.fc2.bias", fc_out_.bias, true});
  }
  return out;
}

std::vector<Tensorf> CombNet::parameters() const { return learnable(named_tensors()); }

std::vector<Tensorf> CombNet::head_parameters() const {
  std::vector<Tensorf> out;
  for (const auto& t : named_tensors())
    if (t.learnable && t.name.rfind("head.", 0) == 0) out.push_back(t.tensor);
  return out;
}

CombNet build_combnet(const CombNetVariant& variant, const CombNetConfig& config, const Encoder* pretrained) {
  return CombNet(variant, config, pretrained);
}

void ParamReport::add(std::string name, std::string kind, Index count) {
  if (kind == "conv") conv += count;
  else if (kind == "bn") bn += count;
  else fc += count;
  total += count;
  layers.push_back({std::move(name), std::move(kind), count});
}

namespace {

// Groups learnable tensors by layer name ("encoder.0.conv") and kind.
ParamReport report_from(const NamedTensors& named) {
  ParamReport report;
  for (const auto& t : named) {
    if (!t.learnable) continue;
    const std::string layer = t.name.substr(0, t.name.rfind('.'));
    const std::string leaf = layer.substr(layer.rfind('.') + 1);
    const std::string kind = leaf == "conv" ? "conv" : leaf == "bn" ? "bn" : "fc";
    if (!report.layers.empty() && report.layers.back().name == layer) {
      report.layers.back().count += t.tensor.numel();
      report.total += t.tensor.numel();
      (kind == "conv" ? report.conv : kind == "bn" ? report.bn : report.fc) += t.tensor.numel();
    } else {
      report.add(layer, kind, t.tensor.numel());
    }
  }
  return report;
}

}  // namespace

ParamReport count_params(const CombNet& model) { return report_from(model.named_tensors()); }
ParamReport count_params(const Encoder& encoder) { return report_from(encoder.named_tensors()); }
ParamReport count_params(const Decoder&) { return ParamReport{}; }

ParamReport count_params(const CombNetVariant& variant, const CombNetConfig& config) {
  validated_rng({variant.pool, variant.head, InitKind::Random}, config, nullptr);
  ParamReport report;
  const EncoderSpec spec = encoder_spec(variant.pool);
  Index in = spec.in_channels;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const auto& b = spec.blocks[i];
    const std::string prefix = "encoder." + std::to_string(i) + ".";
    report.add(prefix + "conv", "conv", conv_count(in, b.out_channels, b.kernel));
    report.add(prefix + "bn", "bn", 2 * Index(b.out_channels));
    in = b.out_channels;
  }
  if (variant.head == HeadKind::Tel) {
    report.add("head.conv", "conv", conv_count(in, config.signature_width, 3));
    report.add("head.bn", "bn", 2 * Index(config.signature_width));
    report.add("head.fc", "fc", Index(config.signature_width) * config.num_classes + config.num_classes);
  } else {
    const Index flat = in * (config.height / EncoderSpec::kDownsample) * (config.width / EncoderSpec::kDownsample);
    report.add("head.fc1", "fc", flat * config.hidden + config.hidden);
    report.add("head.fc2", "fc", Index(config.hidden) * config.num_classes + config.num_classes);
  }
  return report;
}

}  // namespace irisnet
