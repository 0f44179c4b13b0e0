#ifndef SDCN_DATASYNTH_HPP_
#define SDCN_DATASYNTH_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdcn/geometry.hpp"
#include "sdcn/tensor.hpp"

// Synthetic scenes: every object is a faint class-tinted body carrying a
// small, strongly coloured part. Image-level labels are enough to find the
// part; finding the body takes more than the most discriminative evidence.
namespace sdcn {

using Rgb = std::array<double, 3>;

struct ClassAppearance {
  Rgb body{};  // offset added to the background inside the body
  Rgb part{};  // absolute colour of the part
  bool ellipse = true;
};

struct SceneSpec {
  int width = 32;
  int height = 32;
  int num_classes = 3;
  std::vector<ClassAppearance> classes;  // empty -> default_appearance()
  int min_objects = 1;
  int max_objects = 2;
  int min_body = 14;
  int max_body = 20;
  int min_part = 4;
  int max_part = 5;
  double min_part_ratio = 0.04;  // part area / body area lower bound
  double max_overlap_iou = 0.0;  // between object boxes; 0 means disjoint
  double background = 0.5;
  double background_noise = 0.03;  // std of per-pixel Gaussian noise
  double body_noise = 0.03;
  int placement_retries = 200;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument when the spec cannot be realised.
  void validate() const;
  ClassAppearance appearance(int cls) const;
};

std::vector<ClassAppearance> default_appearance(int num_classes);

struct GtObject {
  int cls = 0;
  BBox box;   // tight box of the body
  BBox part;  // square part region, inside the body
};

struct SyntheticSample {
  int index = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major
  Tensor labels;                  // N entries in {0, 1}
  std::vector<GtObject> objects;
  std::vector<BinaryMask> masks;  // one per class: union of bodies

  // 3 x H x W, values byte / 255.
  Tensor image() const;
};

// Pure in (spec.seed, index). Throws std::runtime_error when objects cannot
// be placed within spec.placement_retries attempts.
SyntheticSample generate_sample(const SceneSpec& spec, int index);

enum class Split { kTrain, kTest };
std::string split_name(Split s);

struct Dataset {
  SceneSpec spec;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
};

// Indices [0, train) are training images, [train, train + test) test images.
Dataset generate_dataset(const SceneSpec& spec, int train, int test);

nlohmann::json spec_to_json(const SceneSpec& spec);
// Rejects unknown keys.
SceneSpec spec_from_json(const nlohmann::json& j);

// Writes images/, masks/ and manifest.json under dir and returns the
// manifest path. Mask pixels carry bit k for class k.
std::filesystem::path write_dataset(const Dataset& data,
                                    const std::filesystem::path& dir);

// Reads a manifest and every image and mask it lists.
Dataset load_dataset(const std::filesystem::path& manifest);

// SHA-256 over the manifest bytes followed by every listed file, hex.
std::string dataset_digest(const std::filesystem::path& manifest);

// 8-bit PNG helpers; channels is 1 or 3.
void write_png(const std::filesystem::path& path, int width, int height,
               int channels, const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> read_png(const std::filesystem::path& path,
                                   int channels, int* width, int* height);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

}  // namespace sdcn

#endif  // SDCN_DATASYNTH_HPP_
