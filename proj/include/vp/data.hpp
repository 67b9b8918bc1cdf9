#pragma once

// Dataset ingestion plus a deterministic synthetic scene generator
// (procedural shapes + templated captions) used in place of real corpora.

#include "vp/image.hpp"
#include "vp/rng.hpp"

#include <array>
#include <string>
#include <vector>

namespace vp {

struct PaletteColor {
  const char* name;
  uint8_t r, g, b;
};

// 8-color palette; names bound the caption vocabulary.
const std::array<PaletteColor, 8>& palette();

enum class ShapeKind { Square = 0, Circle = 1, Triangle = 2 };
enum class SizeClass { Small = 0, Large = 1 };
enum class CaptionStyle { Short, Dense };

struct SceneShape {
  ShapeKind kind;
  int color;      // palette index
  int cell;       // 0..8 on a 3x3 grid, row-major
  SizeClass size;

  bool operator==(const SceneShape&) const = default;
};

struct SceneSpec {
  std::vector<SceneShape> shapes;  // 1..4, distinct cells
  int background;                  // palette index
  uint64_t seed = 0;

  bool operator==(const SceneSpec&) const = default;
};

struct InstructionSample {
  std::string image_ref;
  std::string instruction;
  std::string response;
  std::string source_tag;  // alignment | sft | dense_caption
};

struct DatasetManifest {
  std::vector<InstructionSample> samples;
  int version = 1;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

RawImage load_ppm(const std::string& path);
void save_ppm(const RawImage& img, const std::string& path);

SceneSpec random_scene(Rng& rng);
RawImage render_scene(const SceneSpec& spec, int resolution);
std::string describe_scene(const SceneSpec& spec, CaptionStyle style);

InstructionSample format_single_turn(const std::string& image_ref,
                                     const std::string& caption,
                                     const std::string& source_tag);
const std::vector<std::string>& prompt_pool();

struct SynthesizedDataset {
  DatasetManifest manifest;
  std::vector<SceneSpec> specs;
};

// Renders n distinct scenes into `out_dir` (img_NNNNN.ppm) and returns the
// manifest; fully deterministic per seed.
SynthesizedDataset synthesize_dataset(uint64_t seed, int n, CaptionStyle style,
                                      const std::string& out_dir, int resolution);

}  // namespace vp
