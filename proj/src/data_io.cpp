#include "irisnet/data_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace irisnet {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

IrisImage::IrisImage(int w, int h, std::vector<float> values) : width(w), height(h), pixels(std::move(values)) {
  if (w <= 0 || h <= 0 || pixels.size() != std::size_t(w) * std::size_t(h)) {
    throw DimensionError("image " + std::to_string(w) + "x" + std::to_string(h) + " with " +
                         std::to_string(pixels.size()) + " pixels");
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated ") + what + " at byte offset " + std::to_string(pos_));
    }
  }

  template <typename T>
  T read(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return std::uint32_t(::crc32(0L, bytes.data(), uInt(bytes.size())));
}

// PGM header tokenizer: whitespace separated, '#' comments to end of line.
std::size_t pgm_token(std::span<const std::uint8_t> b, std::size_t& pos, const char* what) {
  for (;;) {
    while (pos < b.size() && std::isspace(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  std::size_t value = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    value = value * 10 + std::size_t(b[pos] - '0');
    if (value > (1u << 24)) throw FormatError(std::string("PGM ") + what + " too large at byte offset " + std::to_string(start));
    ++pos;
  }
  if (pos == start) throw FormatError(std::string("PGM: expected ") + what + " at byte offset " + std::to_string(start));
  return value;
}

IrisImage decode_pgm(std::span<const std::uint8_t> b) {
  std::size_t pos = 2;
  const std::size_t width = pgm_token(b, pos, "width");
  const std::size_t height = pgm_token(b, pos, "height");
  const std::size_t maxval = pgm_token(b, pos, "maxval");
  if (width == 0 || height == 0) throw FormatError("PGM: zero extent");
  if (maxval == 0 || maxval > 255) {
    throw FormatError("PGM: only 8-bit maxval (1..255) supported, got " + std::to_string(maxval));
  }
  if (pos >= b.size() || !std::isspace(b[pos])) {
    throw FormatError("PGM: missing separator before pixel data at byte offset " + std::to_string(pos));
  }
  ++pos;
  const std::size_t n = width * height;
  if (b.size() - pos < n) {
    throw FormatError("PGM: truncated pixel data at byte offset " + std::to_string(b.size()) + " (expected " +
                      std::to_string(pos + n) + " bytes)");
  }
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = std::min(1.0f, float(b[pos + i]) / float(maxval));
  return IrisImage(int(width), int(height), std::move(px));
}

IrisImage decode_raw(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.take(4, "magic");
  const auto width = r.read<std::uint32_t>("width");
  const auto height = r.read<std::uint32_t>("height");
  if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
    throw FormatError("raw image: bad extents " + std::to_string(width) + "x" + std::to_string(height));
  }
  const std::size_t n = std::size_t(width) * height;
  auto data = r.take(n * sizeof(float), "raw pixel data");
  std::vector<float> px(n);
  std::memcpy(px.data(), data.data(), data.size());
  for (float& v : px) {
    if (!std::isfinite(v)) throw FormatError("raw image: non-finite pixel");
    v = std::clamp(v, 0.0f, 1.0f);
  }
  return IrisImage(int(width), int(height), std::move(px));
}

}  // namespace

IrisImage decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "IRRF", 4) == 0) return decode_raw(bytes);
  throw FormatError("unrecognised image magic at byte offset 0 (expected P5 or IRRF)");
}

IrisImage load_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_pgm(const IrisImage& image) {
  const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels.size());
  for (float v : image.pixels) out.push_back(std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  return out;
}

void save_pgm(const IrisImage& image, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pgm(image));
}

void save_raw(const IrisImage& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out{'I', 'R', 'R', 'F'};
  put(out, std::uint32_t(image.width));
  put(out, std::uint32_t(image.height));
  for (float v : image.pixels) put(out, v);
  write_file_atomic(path, out);
}

Tensorf to_batch(std::span<const IrisImage> images) {
  std::vector<std::size_t> idx(images.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return to_batch(std::vector<IrisImage>(images.begin(), images.end()), idx);
}

Tensorf to_batch(const std::vector<IrisImage>& images, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("empty image batch");
  const IrisImage& first = images.at(indices.front());
  const std::size_t plane = first.pixels.size();
  Tensorf out({Index(indices.size()), 1, first.height, first.width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const IrisImage& img = images.at(indices[i]);
    if (img.width != first.width || img.height != first.height) {
      throw DimensionError("mixed image sizes in batch");
    }
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data().data() + i * plane);
  }
  return out;
}

std::string_view to_string(Eye eye) { return eye == Eye::Left ? "left" : "right"; }

Eye parse_eye(std::string_view s) {
  if (s == "left" || s == "L" || s == "0") return Eye::Left;
  if (s == "right" || s == "R" || s == "1") return Eye::Right;
  throw FormatError("unknown eye '" + std::string(s) + "'");
}

ClassCompaction::ClassCompaction(std::vector<int> raw_ids) : raw_ids_(std::move(raw_ids)) {
  std::sort(raw_ids_.begin(), raw_ids_.end());
  raw_ids_.erase(std::unique(raw_ids_.begin(), raw_ids_.end()), raw_ids_.end());
}

int ClassCompaction::compact(int raw_id) const {
  auto it = std::lower_bound(raw_ids_.begin(), raw_ids_.end(), raw_id);
  if (it == raw_ids_.end() || *it != raw_id) throw InputError("unknown class id " + std::to_string(raw_id));
  return int(it - raw_ids_.begin());
}

int ClassCompaction::raw(int compact_id) const {
  if (compact_id < 0 || compact_id >= size()) throw InputError("compact class " + std::to_string(compact_id) + " out of range");
  return raw_ids_[std::size_t(compact_id)];
}

std::pair<int, Eye> ClassCompaction::subject_eye(int compact_id) const {
  const int r = raw(compact_id);
  return {r / 2, r % 2 ? Eye::Right : Eye::Left};
}

ClassCompaction DatasetManifest::compaction() const {
  std::vector<int> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.class_id);
  return ClassCompaction(std::move(ids));
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path) {
  std::ostringstream os;
  os << "path,class_id,subject_id,eye\n";
  for (const auto& r : manifest.records) {
    os << r.path << ',' << r.class_id << ',' << r.subject_id << ',' << to_string(r.eye) << '\n';
  }
  const std::string s = os.str();
  write_file_atomic(csv_path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

DatasetManifest read_manifest(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw FormatError("cannot open manifest " + csv_path.string());
  DatasetManifest m;
  m.root = csv_path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line != "path,class_id,subject_id,eye") {
    throw FormatError(csv_path.string() + ": expected header 'path,class_id,subject_id,eye'");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 4) throw FormatError(csv_path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    ManifestRecord r;
    r.path = f[0];
    try {
      r.class_id = std::stoi(f[1]);
      r.subject_id = std::stoi(f[2]);
    } catch (const std::exception&) {
      throw FormatError(csv_path.string() + ":" + std::to_string(lineno) + ": bad integer field");
    }
    r.eye = parse_eye(f[3]);
    if (r.class_id != class_of(r.subject_id, r.eye)) {
      throw FormatError(csv_path.string() + ":" + std::to_string(lineno) + ": class_id must equal 2*subject_id + eye");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

int Dataset::num_classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

std::vector<std::size_t> Dataset::indices_of(std::span<const int> classes) const {
  const std::set<int> wanted(classes.begin(), classes.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (wanted.count(labels[i])) out.push_back(i);
  return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    const auto path = dir / dataset.manifest.records.at(i).path;
    std::filesystem::create_directories(path.parent_path());
    save_pgm(dataset.images[i], path);
  }
  write_manifest(dataset.manifest, dir / "manifest.csv");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.manifest = read_manifest(dir / "manifest.csv");
  if (d.manifest.records.empty()) throw InputError("dataset " + dir.string() + " is empty");
  const ClassCompaction compaction = d.manifest.compaction();
  for (const auto& r : d.manifest.records) {
    d.images.push_back(load_image(dir / r.path));
    d.labels.push_back(compaction.compact(r.class_id));
    if (d.images.back().width != d.images.front().width || d.images.back().height != d.images.front().height) {
      throw FormatError(r.path + ": resolution differs from the rest of the dataset");
    }
  }
  d.manifest.width = d.images.front().width;
  d.manifest.height = d.images.front().height;
  return d;
}

void SynthSpec::validate() const {
  if (num_classes < 2 || samples_per_class < 1) throw ConfigError("synthetic data needs >= 2 classes and >= 1 sample");
  if (width <= 0 || height <= 0 || width % EncoderSpec::kDownsample || height % EncoderSpec::kDownsample) {
    throw ConfigError("synthetic resolution " + std::to_string(width) + "x" + std::to_string(height) +
                      " must be divisible by 16");
  }
  if (min_components < 1 || max_components < min_components) throw ConfigError("bad component count range");
  if (!(min_frequency > 0.0) || max_frequency < min_frequency) throw ConfigError("frequencies must be positive");
  if (max_orientation < min_orientation) throw ConfigError("bad orientation range");
  if (noise_sigma < 0.0 || phase_jitter < 0.0 || total_amplitude < 0.0) {
    throw ConfigError("noise, jitter and amplitude must be non-negative");
  }
  if (min_class_distance < 0.0) throw ConfigError("min_class_distance must be non-negative");
}

void to_json(nlohmann::json& j, const SynthSpec& s) {
  j = nlohmann::json{{"num_classes", s.num_classes},
                     {"samples_per_class", s.samples_per_class},
                     {"width", s.width},
                     {"height", s.height},
                     {"min_components", s.min_components},
                     {"max_components", s.max_components},
                     {"min_frequency", s.min_frequency},
                     {"max_frequency", s.max_frequency},
                     {"min_orientation", s.min_orientation},
                     {"max_orientation", s.max_orientation},
                     {"total_amplitude", s.total_amplitude},
                     {"phase_jitter", s.phase_jitter},
                     {"noise_sigma", s.noise_sigma},
                     {"min_class_distance", s.min_class_distance},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& s) {
  nlohmann::json defaults;
  to_json(defaults, s);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ConfigError("unknown synthetic-data key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("num_classes", s.num_classes);
  get("samples_per_class", s.samples_per_class);
  get("width", s.width);
  get("height", s.height);
  get("min_components", s.min_components);
  get("max_components", s.max_components);
  get("min_frequency", s.min_frequency);
  get("max_frequency", s.max_frequency);
  get("min_orientation", s.min_orientation);
  get("max_orientation", s.max_orientation);
  get("total_amplitude", s.total_amplitude);
  get("phase_jitter", s.phase_jitter);
  get("noise_sigma", s.noise_sigma);
  get("min_class_distance", s.min_class_distance);
  get("seed", s.seed);
}

namespace {

struct Component {
  double frequency;
  double orientation;
  double amplitude;
  double phase;
};

// Distance between the dominant components of two classes in a normalized
// (frequency, orientation) plane; orientation wraps at pi.
double class_distance(const std::vector<Component>& a, const std::vector<Component>& b, const SynthSpec& spec) {
  auto dominant = [](const std::vector<Component>& c) {
    return *std::max_element(c.begin(), c.end(),
                             [](const Component& x, const Component& y) { return x.amplitude < y.amplitude; });
  };
  const Component p = dominant(a), q = dominant(b);
  const double df = (p.frequency - q.frequency) / std::max(1e-12, spec.max_frequency - spec.min_frequency);
  double dtheta = std::fabs(p.orientation - q.orientation);
  dtheta = std::min(dtheta, std::numbers::pi - dtheta) / std::numbers::pi;
  return std::hypot(df, dtheta);
}

}  // namespace

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(spec.min_components, spec.max_components);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<std::vector<Component>> classes;
  constexpr int kMaxTries = 10000;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxTries) {
        throw ConfigError("cannot place " + std::to_string(spec.num_classes) +
                          " classes with min_class_distance " + std::to_string(spec.min_class_distance));
      }
      std::vector<Component> comps(std::size_t(count(rng)));
      double amp_sum = 0;
      for (auto& k : comps) {
        k.frequency = uniform(spec.min_frequency, spec.max_frequency);
        k.orientation = uniform(spec.min_orientation, spec.max_orientation);
        k.amplitude = uniform(0.5, 1.0);
        k.phase = uniform(0.0, 2.0 * std::numbers::pi);
        amp_sum += k.amplitude;
      }
      for (auto& k : comps) k.amplitude *= spec.total_amplitude / amp_sum;
      const bool separated = std::all_of(classes.begin(), classes.end(), [&](const auto& other) {
        return class_distance(comps, other, spec) >= spec.min_class_distance;
      });
      if (separated) {
        classes.push_back(std::move(comps));
        break;
      }
    }
  }

  Dataset d;
  d.manifest.width = spec.width;
  d.manifest.height = spec.height;
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      std::vector<double> phase;
      for (const auto& k : classes[std::size_t(c)]) phase.push_back(k.phase + spec.phase_jitter * jitter(rng));
      std::vector<float> px(std::size_t(spec.width) * std::size_t(spec.height));
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          double v = 0.5;
          for (std::size_t i = 0; i < phase.size(); ++i) {
            const auto& k = classes[std::size_t(c)][i];
            const double u = x * std::cos(k.orientation) + y * std::sin(k.orientation);
            v += k.amplitude * std::sin(2.0 * std::numbers::pi * k.frequency * u + phase[i]);
          }
          v += spec.noise_sigma * jitter(rng);
          // Quantize to 8 bits so in-memory samples equal their PGM files.
          px[std::size_t(y) * std::size_t(spec.width) + std::size_t(x)] =
              float(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
        }
      }
      d.images.emplace_back(spec.width, spec.height, std::move(px));
      d.labels.push_back(c);
      std::ostringstream path;
      path << "class_" << std::setw(4) << std::setfill('0') << c << "/sample_" << std::setw(4) << s << ".pgm";
      const Eye eye = c % 2 ? Eye::Right : Eye::Left;
      d.manifest.records.push_back({path.str(), class_of(c / 2, eye), c / 2, eye});
    }
  }
  return d;
}

const Tensorf* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

Checkpoint make_checkpoint(const NamedTensors& named, nlohmann::json metadata) {
  Checkpoint c;
  for (const auto& t : named) c.tensors.emplace_back(t.name, t.tensor.clone());
  c.metadata = std::move(metadata);
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  std::vector<std::uint8_t> out{'I', 'R', 'N', 'F'};
  put(out, Checkpoint::kVersion);
  put(out, std::uint32_t(checkpoint.tensors.size()));
  for (const auto& [name, t] : checkpoint.tensors) {
    put(out, std::uint32_t(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put(out, std::uint32_t(t.rank()));
    for (Index e : t.shape()) put(out, std::uint64_t(e));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
    out.insert(out.end(), p, p + t.numel() * Index(sizeof(float)));
  }
  const std::string meta = checkpoint.metadata.dump();
  put(out, std::uint64_t(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  put(out, crc32_of(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), "IRNF", 4) != 0) throw FormatError("not a checkpoint: bad magic at byte offset 0");
  const auto version = r.read<std::uint32_t>("version");
  if (version != Checkpoint::kVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(Checkpoint::kVersion) + ")");
  }
  const auto count = r.read<std::uint32_t>("tensor count");
  Checkpoint c;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.read<std::uint32_t>("name length");
    auto name = r.take(name_len, "tensor name");
    const auto rank = r.read<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank) + " at byte offset " + std::to_string(r.offset()));
    Shape shape;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto e = r.read<std::uint64_t>("extent");
      if (e == 0 || e > (std::uint64_t(1) << 40) || numel > (std::uint64_t(1) << 40) / e) {
        throw FormatError("implausible extent at byte offset " + std::to_string(r.offset()));
      }
      numel *= e;
      shape.push_back(Index(e));
    }
    auto raw = r.take(std::size_t(numel) * sizeof(float), "tensor data");
    Tensorf::Array data(static_cast<Index>(numel));
    std::memcpy(data.data(), raw.data(), raw.size());
    c.tensors.emplace_back(std::string(name.begin(), name.end()), Tensorf(std::move(shape), std::move(data)));
  }
  const auto meta_len = r.read<std::uint64_t>("metadata length");
  auto meta = r.take(std::size_t(meta_len), "metadata");
  const std::size_t payload = r.offset();
  const auto stored_crc = r.read<std::uint32_t>("checksum");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checksum at byte offset " + std::to_string(r.offset()));
  if (crc32_of(bytes.first(payload)) != stored_crc) throw ChecksumError("checkpoint checksum mismatch");
  try {
    c.metadata = nlohmann::json::parse(meta.begin(), meta.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const ChecksumError& e) {
    throw ChecksumError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void apply_checkpoint(const NamedTensors& target, const Checkpoint& checkpoint, const std::string& prefix) {
  std::vector<const Tensorf*> sources;
  for (const auto& t : target) {
    const Tensorf* src = checkpoint.find(prefix + t.name);
    if (!src) throw ShapeMismatchError("checkpoint has no tensor '" + prefix + t.name + "'");
    if (src->shape() != t.tensor.shape()) {
      throw ShapeMismatchError("tensor '" + t.name + "' expects " + shape_string(t.tensor.shape()) +
                               " but checkpoint holds " + shape_string(src->shape()));
    }
    sources.push_back(src);
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    Tensorf dst = target[i].tensor;
    dst.mutable_data() = sources[i]->data();
  }
}

std::string checkpoint_id(const Checkpoint& checkpoint) {
  std::ostringstream os;
  const auto bytes = encode_checkpoint(checkpoint);
  // The CRC over the payload plus its own trailer is a constant residue, so hash the payload only.
  const std::span<const std::uint8_t> payload(bytes.data(), bytes.size() - 4);
  os << std::hex << std::setw(8) << std::setfill('0') << crc32_of(payload);
  return os.str();
}

}  // namespace irisnet
