#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "irisnet/models.hpp"

namespace irisnet {

/// Single-channel normalized iris image, row-major, values in [0, 1].
struct IrisImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  IrisImage() = default;
  IrisImage(int w, int h, std::vector<float> values);

  float at(int x, int y) const { return pixels[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
  bool operator==(const IrisImage&) const = default;
};

/// Reads 8-bit binary PGM ("P5") or the raw float format ("IRRF": magic,
/// u32 width, u32 height, little-endian float32 pixels). Values are mapped
/// to [0, 1] and clamped.
IrisImage load_image(const std::filesystem::path& path);
IrisImage decode_image(std::span<const std::uint8_t> bytes);

void save_pgm(const IrisImage& image, const std::filesystem::path& path);
void save_raw(const IrisImage& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pgm(const IrisImage& image);

/// Stacks images into an [N x 1 x H x W] tensor.
Tensorf to_batch(std::span<const IrisImage> images);
Tensorf to_batch(const std::vector<IrisImage>& images, std::span<const std::size_t> indices);

enum class Eye { Left, Right };
std::string_view to_string(Eye eye);
Eye parse_eye(std::string_view s);

/// Left and right irises of one subject are distinct classes.
constexpr int class_of(int subject, Eye eye) { return 2 * subject + (eye == Eye::Right ? 1 : 0); }

struct ManifestRecord {
  std::string path;  // relative to the manifest root
  int class_id = 0;
  int subject_id = 0;
  Eye eye = Eye::Left;
  bool operator==(const ManifestRecord&) const = default;
};

/// Maps sparse class ids (2*subject + eye) onto 0..K-1 and back.
class ClassCompaction {
 public:
  explicit ClassCompaction(std::vector<int> raw_ids);
  int compact(int raw_id) const;
  int raw(int compact_id) const;
  std::pair<int, Eye> subject_eye(int compact_id) const;
  int size() const { return int(raw_ids_.size()); }

 private:
  std::vector<int> raw_ids_;  // sorted, unique
};

struct DatasetManifest {
  std::filesystem::path root;
  int width = 0;
  int height = 0;
  std::vector<ManifestRecord> records;

  ClassCompaction compaction() const;
};

/// CSV with header `path,class_id,subject_id,eye`.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& csv_path);
DatasetManifest read_manifest(const std::filesystem::path& csv_path);

/// Images with compacted, contiguous labels.
struct Dataset {
  DatasetManifest manifest;
  std::vector<IrisImage> images;
  std::vector<int> labels;

  int num_classes() const;
  int width() const { return images.empty() ? 0 : images.front().width; }
  int height() const { return images.empty() ? 0 : images.front().height; }
  /// Indices of samples whose label is in `classes`, in dataset order.
  std::vector<std::size_t> indices_of(std::span<const int> classes) const;
};

/// Writes every image as PGM plus manifest.csv under `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Reads `dir`/manifest.csv and the images it lists.
Dataset load_dataset(const std::filesystem::path& dir);

/// Procedural texture classes: each class is a fixed mixture of oriented
/// sinusoids; samples differ by per-component phase jitter and pixel noise.
struct SynthSpec {
  int num_classes = 20;
  int samples_per_class = 20;
  int width = 128;
  int height = 32;
  int min_components = 2;
  int max_components = 4;
  double min_frequency = 0.04;  // cycles per pixel
  double max_frequency = 0.22;
  double min_orientation = 0.0;  // radians
  double max_orientation = 3.14159265358979323846;
  double total_amplitude = 0.35;
  double phase_jitter = 0.3;  // std-dev, radians
  double noise_sigma = 0.05;
  double min_class_distance = 0.08;
  std::uint64_t seed = 7;

  void validate() const;
};

void to_json(nlohmann::json& j, const SynthSpec& spec);
/// Rejects unknown keys.
void from_json(const nlohmann::json& j, SynthSpec& spec);

Dataset generate_synthetic(const SynthSpec& spec);

/// Named float tensors plus JSON metadata.
///
/// Layout: "IRNF", u32 version, u32 tensor count, then per tensor u32 name
/// length, UTF-8 name, u32 rank, u64 extents, little-endian float32 values;
/// then u64 metadata length and UTF-8 JSON text; then a u32 CRC-32 of every
/// preceding byte.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<std::pair<std::string, Tensorf>> tensors;
  nlohmann::json metadata = nlohmann::json::object();

  const Tensorf* find(const std::string& name) const;
};

Checkpoint make_checkpoint(const NamedTensors& named, nlohmann::json metadata);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
/// Writes to a temporary file then renames over `path`.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors named `prefix` + target name into `target`.
/// Validates every tensor before writing any.
void apply_checkpoint(const NamedTensors& target, const Checkpoint& checkpoint, const std::string& prefix = "");

/// Hex CRC-32 of the encoded checkpoint; stable across runs.
std::string checkpoint_id(const Checkpoint& checkpoint);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace irisnet
