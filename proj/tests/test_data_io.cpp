#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "irisnet/data_io.hpp"
#include "irisnet/losses.hpp"

using namespace irisnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

CombNet small_model(int classes, int hidden, HeadKind head = HeadKind::TwoFc) {
  CombNetConfig c;
  c.num_classes = classes;
  c.height = 32;
  c.width = 128;
  c.hidden = hidden;
  return build_combnet({PoolKind::Max, head, InitKind::Random}, c);
}

double image_ssim(const IrisImage& a, const IrisImage& b) {
  Tensorf ta({a.height, a.width}, Tensorf::Array(Eigen::Map<const Tensorf::Array>(a.pixels.data(), Index(a.pixels.size()))));
  Tensorf tb({b.height, b.width}, Tensorf::Array(Eigen::Map<const Tensorf::Array>(b.pixels.data(), Index(b.pixels.size()))));
  return ssim(ta, tb).item();
}

}  // namespace

TEST_SUITE("data-io") {

TEST_CASE("PGM decoding scales by 1/255") {
  auto b = bytes_of("P5\n2 2\n255\n");
  for (int v : {0, 128, 255, 64}) b.push_back(std::uint8_t(v));
  const auto img = decode_image(b);
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  const float expected[] = {0.0f, 0.50196f, 1.0f, 0.25098f};
  for (int i = 0; i < 4; ++i) CHECK(img.pixels[std::size_t(i)] == doctest::Approx(expected[i]).epsilon(1e-4));
}

TEST_CASE("PGM comments and round trip") {
  auto b = bytes_of("P5 # comment\n1 1\n# another\n255\n");
  b.push_back(51);
  CHECK(decode_image(b).pixels[0] == doctest::Approx(0.2f));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<float> px(16 * 8);
  for (auto& v : px) v = u(rng);
  const IrisImage img(16, 8, px);
  TempDir dir("irisnet_test_pgm");
  save_pgm(img, dir.path / "a.pgm");
  const auto back = load_image(dir.path / "a.pgm");
  CHECK(back.width == 16);
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(std::abs(back.pixels[i] - px[i]) <= 1.0f / 255);

  save_raw(img, dir.path / "a.raw");
  CHECK(load_image(dir.path / "a.raw") == img);
}

TEST_CASE("malformed images") {
  try {
    decode_image(bytes_of("GIF89a"));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_image(bytes_of("P5\n2 2\n255\n\x01\x02")), FormatError);
  CHECK_THROWS_AS(decode_image(bytes_of("P5\n2 2\n65535\n")), FormatError);
  CHECK_THROWS_AS(decode_image(bytes_of("IRRF\x02")), FormatError);
  CHECK_THROWS_AS(load_image("/nonexistent/irisnet.pgm"), FormatError);
}

TEST_CASE("raw images clamp to the unit interval") {
  std::vector<std::uint8_t> b = bytes_of("IRRF");
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(std::uint8_t(v >> (8 * i)));
  };
  put32(2);
  put32(1);
  for (float f : {-0.5f, 1.5f}) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put32(u);
  }
  const auto img = decode_image(b);
  CHECK(img.pixels == std::vector<float>{0.0f, 1.0f});
}

TEST_CASE("manifest round trip and class compaction") {
  DatasetManifest m;
  m.width = 128;
  m.height = 32;
  m.records = {{"a.pgm", class_of(3, Eye::Left), 3, Eye::Left},
               {"b.pgm", class_of(3, Eye::Right), 3, Eye::Right},
               {"c.pgm", class_of(10, Eye::Right), 10, Eye::Right}};
  TempDir dir("irisnet_test_manifest");
  write_manifest(m, dir.path / "manifest.csv");
  const auto back = read_manifest(dir.path / "manifest.csv");
  CHECK(back.records == m.records);

  const auto cc = m.compaction();
  CHECK(cc.size() == 3);
  for (int k = 0; k < cc.size(); ++k) {
    CHECK(cc.compact(cc.raw(k)) == k);
    const auto [subject, eye] = cc.subject_eye(k);
    CHECK(class_of(subject, eye) == cc.raw(k));
  }
  CHECK(cc.subject_eye(2) == std::pair<int, Eye>{10, Eye::Right});

  std::ofstream(dir.path / "bad.csv") << "path,class_id,subject_id,eye\nx.pgm,5,1,left\n";
  CHECK_THROWS_AS(read_manifest(dir.path / "bad.csv"), FormatError);
}

TEST_CASE("synthetic generator is deterministic and round trips through disk") {
  SynthSpec s;
  s.num_classes = 4;
  s.samples_per_class = 3;
  const auto a = generate_synthetic(s);
  const auto b = generate_synthetic(s);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK(a.num_classes() == 4);
  for (const auto& img : a.images)
    for (float v : img.pixels) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }

  TempDir dir("irisnet_test_synth");
  write_dataset(a, dir.path);
  const auto c = load_dataset(dir.path);
  CHECK(c.labels == a.labels);
  REQUIRE(c.images.size() == a.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i)
    for (std::size_t p = 0; p < a.images[i].pixels.size(); ++p)
      CHECK(std::abs(c.images[i].pixels[p] - a.images[i].pixels[p]) <= 0.5f / 255 + 1e-6f);

  s.seed = 8;
  CHECK_FALSE(generate_synthetic(s).images == a.images);
}

TEST_CASE("synthetic spec validation") {
  SynthSpec s;
  s.width = 100;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SynthSpec{};
  s.noise_sigma = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  nlohmann::json j = SynthSpec{};
  j["colour"] = 1;
  CHECK_THROWS_AS(j.get<SynthSpec>(), ConfigError);
}

TEST_CASE("zero jitter and noise make every sample of a class identical") {
  SynthSpec s;
  s.num_classes = 3;
  s.samples_per_class = 4;
  s.phase_jitter = 0;
  s.noise_sigma = 0;
  const auto d = generate_synthetic(s);
  for (std::size_t i = 1; i < d.images.size(); ++i) {
    if (d.labels[i] == d.labels[i - 1]) CHECK(d.images[i] == d.images[i - 1]);
  }
}

TEST_CASE("default synthetic classes are separable") {
  const auto d = generate_synthetic(SynthSpec{});
  CHECK(d.images.size() == 400);

  // Leave-one-out nearest neighbour on raw pixels.
  const std::size_t n = d.images.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = 1e300;
    int pred = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double dist = 0;
      for (std::size_t p = 0; p < d.images[i].pixels.size(); ++p) {
        const double e = d.images[i].pixels[p] - d.images[j].pixels[p];
        dist += e * e;
      }
      if (dist < best) {
        best = dist;
        pred = d.labels[j];
      }
    }
    correct += pred == d.labels[i];
  }
  const double acc = double(correct) / double(n);
  MESSAGE("nearest-neighbour accuracy " << acc);
  CHECK(acc > 0.05);

  double intra = 0, inter = 0;
  int ni = 0, ne = 0;
  for (std::size_t i = 0; i < n; i += 7)
    for (std::size_t j = i + 1; j < n; j += 5) {
      const double s = image_ssim(d.images[i], d.images[j]);
      if (d.labels[i] == d.labels[j]) {
        intra += s;
        ++ni;
      } else {
        inter += s;
        ++ne;
      }
    }
  REQUIRE(ni > 0);
  MESSAGE("mean SSIM intra " << intra / ni << " inter " << inter / ne);
  CHECK(inter / ne < intra / ni);
}

TEST_CASE("checkpoint round trip is bit exact") {
  CombNet m = small_model(3, 8);
  const auto meta = nlohmann::json{{"stage", 2}, {"note", "x"}};
  const Checkpoint ck = make_checkpoint(m.named_tensors(), meta);
  const auto bytes = encode_checkpoint(ck);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "IRNF");
  const auto back = decode_checkpoint(bytes);
  CHECK(back.metadata == meta);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    CHECK(back.tensors[i].second.shape() == ck.tensors[i].second.shape());
    CHECK(std::memcmp(back.tensors[i].second.data().data(), ck.tensors[i].second.data().data(),
                      std::size_t(ck.tensors[i].second.numel()) * sizeof(float)) == 0);
  }
  CHECK(encode_checkpoint(back) == bytes);

  TempDir dir("irisnet_test_ckpt");
  save_checkpoint(ck, dir.path / "m.irnf");
  CHECK(read_file(dir.path / "m.irnf") == bytes);
  CHECK(checkpoint_id(load_checkpoint(dir.path / "m.irnf")) == checkpoint_id(ck));
  Checkpoint changed = back;
  changed.tensors.front().second = changed.tensors.front().second.clone();
  changed.tensors.front().second.mutable_data()[0] += 1.0f;
  CHECK(checkpoint_id(changed) != checkpoint_id(ck));

  CombNet other = small_model(3, 8);
  apply_checkpoint(other.named_tensors(), back);
  const auto a = m.named_tensors(), b = other.named_tensors();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i].tensor.data() == b[i].tensor.data()).all());
}

TEST_CASE("checkpoint error kinds") {
  const auto bytes = encode_checkpoint(make_checkpoint(small_model(3, 8).named_tensors(), {}));
  SUBCASE("version") {
    auto b = bytes;
    b[4] = 99;
    CHECK_THROWS_AS(decode_checkpoint(b), VersionError);
  }
  SUBCASE("checksum") {
    auto b = bytes;
    b[b.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_checkpoint(b), FormatError);
    b = bytes;
    b.back() ^= 0x01;
    CHECK_THROWS_AS(decode_checkpoint(b), ChecksumError);
  }
  SUBCASE("wrong variant names the tensor") {
    CombNet target = small_model(3, 16);
    try {
      apply_checkpoint(target.named_tensors(), decode_checkpoint(bytes));
      FAIL("expected ShapeMismatchError");
    } catch (const ShapeMismatchError& e) {
      CHECK(std::string(e.what()).find("head.fc1") != std::string::npos);
    }
    CombNet tel = small_model(3, 8, HeadKind::Tel);
    CHECK_THROWS_AS(apply_checkpoint(tel.named_tensors(), decode_checkpoint(bytes)), ShapeMismatchError);
  }
}

TEST_CASE("truncated checkpoints never apply partial state") {
  CombNet src = small_model(2, 4);
  const auto bytes = encode_checkpoint(make_checkpoint(src.named_tensors(), {{"stage", 2}}));
  CombNet target = small_model(2, 4);
  const auto before = target.named_tensors();
  std::vector<Tensorf::Array> snapshot;
  for (const auto& t : before) snapshot.push_back(t.tensor.data());

  std::mt19937_64 rng(2);
  std::vector<std::size_t> cuts{0, 1, 3, 4, 8, 12, bytes.size() - 5, bytes.size() - 4, bytes.size() - 1};
  std::uniform_int_distribution<std::size_t> any(0, bytes.size() - 1);
  for (int i = 0; i < 200; ++i) cuts.push_back(any(rng));
  for (std::size_t cut : cuts) {
    const std::span<const std::uint8_t> prefix(bytes.data(), cut);
    CHECK_THROWS_AS(apply_checkpoint(target.named_tensors(), decode_checkpoint(prefix)), FormatError);
  }
  const auto after = target.named_tensors();
  for (std::size_t i = 0; i < after.size(); ++i) CHECK((after[i].tensor.data() == snapshot[i]).all());
}

}  // TEST_SUITE
