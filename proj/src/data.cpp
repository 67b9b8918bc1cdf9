#include "vp/data.hpp"

#include "vp/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace vp {

namespace {

const char* kKindNames[] = {"square", "circle", "triangle"};
const char* kSizeNames[] = {"small", "large"};
const char* kCellNames[] = {"top left",    "top center",    "top right",
                            "middle left", "center",        "middle right",
                            "bottom left", "bottom center", "bottom right"};

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string relation(const SceneShape& a, const SceneShape& b) {
  const int ra = a.cell / 3, rb = b.cell / 3;
  const int ca = a.cell % 3, cb = b.cell % 3;
  if (ra < rb) return "above";
  if (ra > rb) return "below";
  return ca < cb ? "left of" : "right of";
}

void validate_spec(const SceneSpec& spec) {
  if (spec.background < 0 || spec.background >= int(palette().size()))
    throw input_error("scene: background color index out of range");
  if (spec.shapes.size() > 4)
    throw input_error("scene: at most 4 shapes supported");
  std::set<int> cells;
  for (const SceneShape& s : spec.shapes) {
    if (s.cell < 0 || s.cell > 8) throw input_error("scene: cell index out of range");
    if (s.color < 0 || s.color >= int(palette().size()))
      throw input_error("scene: shape color index out of range");
    if (!cells.insert(s.cell).second)
      throw input_error("scene: overlapping shapes (two shapes in cell " +
                        std::to_string(s.cell) + ")");
  }
}

}  // namespace

const std::array<PaletteColor, 8>& palette() {
  static const std::array<PaletteColor, 8> p = {{
      {"red", 255, 0, 0},
      {"green", 0, 200, 0},
      {"blue", 0, 0, 255},
      {"yellow", 255, 255, 0},
      {"orange", 255, 128, 0},
      {"purple", 128, 0, 200},
      {"white", 255, 255, 255},
      {"black", 0, 0, 0},
  }};
  return p;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("load_manifest: cannot open " + path);
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw parse_error("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    for (const char* key : {"image", "instruction", "response", "source"})
      if (!j.contains(key) || !j[key].is_string())
        throw parse_error("manifest line " + std::to_string(lineno) +
                          ": missing string field \"" + key + "\"");
    InstructionSample s;
    s.image_ref = j["image"];
    // relative image paths are taken relative to the manifest's directory
    if (std::filesystem::path(s.image_ref).is_relative())
      s.image_ref = (std::filesystem::path(path).parent_path() / s.image_ref).string();
    s.instruction = j["instruction"];
    s.response = j["response"];
    s.source_tag = j["source"];
    if (s.response.empty())
      throw parse_error("manifest line " + std::to_string(lineno) + ": empty response");
    m.samples.push_back(std::move(s));
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("save_manifest: cannot open " + path);
  for (const InstructionSample& s : m.samples) {
    nlohmann::json j = {{"image", s.image_ref},
                        {"instruction", s.instruction},
                        {"response", s.response},
                        {"source", s.source_tag}};
    out << j.dump() << "\n";
  }
  if (!out) throw io_error("save_manifest: write failed for " + path);
}

RawImage load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_ppm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw parse_error("load_ppm: " + path + ": expected magic P6, got " + magic);
  auto next_value = [&]() -> int {
    // skip whitespace and '#' comments
    int c;
    while ((c = in.peek()) != EOF) {
      if (c == '#') {
        std::string dummy;
        std::getline(in, dummy);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int v;
    if (!(in >> v)) throw parse_error("load_ppm: " + path + ": truncated header");
    return v;
  };
  RawImage img;
  img.width = next_value();
  img.height = next_value();
  const int maxval = next_value();
  if (maxval != 255)
    throw parse_error("load_ppm: " + path + ": unsupported maxval " + std::to_string(maxval));
  in.get();  // single whitespace after maxval
  if (img.width <= 0 || img.height <= 0)
    throw parse_error("load_ppm: " + path + ": non-positive dimensions");
  img.rgb.resize(std::size_t(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (in.gcount() != std::streamsize(img.rgb.size()))
    throw parse_error("load_ppm: " + path + ": truncated pixel payload");
  return img;
}

void save_ppm(const RawImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("save_ppm: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (!out) throw io_error("save_ppm: write failed for " + path);
}

SceneSpec random_scene(Rng& rng) {
  SceneSpec spec;
  spec.background = int(rng.uniform_int(palette().size()));
  const int count = 1 + int(rng.uniform_int(4));
  std::vector<int> cells{0, 1, 2, 3, 4, 5, 6, 7, 8};
  rng.shuffle(cells);
  for (int i = 0; i < count; ++i) {
    SceneShape s;
    s.kind = ShapeKind(rng.uniform_int(3));
    // shape color must differ from the background to stay visible
    s.color = int(rng.uniform_int(palette().size() - 1));
    if (s.color >= spec.background) ++s.color;
    s.cell = cells[i];
    s.size = SizeClass(rng.uniform_int(2));
    spec.shapes.push_back(s);
  }
  return spec;
}

RawImage render_scene(const SceneSpec& spec, int resolution) {
  validate_spec(spec);
  if (resolution < 9) throw input_error("render_scene: resolution too small");
  RawImage img;
  img.width = img.height = resolution;
  img.rgb.resize(std::size_t(resolution) * resolution * 3);
  const PaletteColor& bg = palette()[spec.background];
  for (int i = 0; i < resolution * resolution; ++i) {
    img.rgb[i * 3 + 0] = bg.r;
    img.rgb[i * 3 + 1] = bg.g;
    img.rgb[i * 3 + 2] = bg.b;
  }
  const double cell = resolution / 3.0;
  for (const SceneShape& s : spec.shapes) {
    const PaletteColor& col = palette()[s.color];
    const double cx = (s.cell % 3 + 0.5) * cell;
    const double cy = (s.cell / 3 + 0.5) * cell;
    const double half = (s.size == SizeClass::Large ? 0.42 : 0.26) * cell;
    const int x0 = std::max(0, int(std::floor(cx - half)));
    const int x1 = std::min(resolution - 1, int(std::ceil(cx + half)));
    const int y0 = std::max(0, int(std::floor(cy - half)));
    const int y1 = std::min(resolution - 1, int(std::ceil(cy + half)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        bool inside = false;
        switch (s.kind) {
          case ShapeKind::Square:
            inside = std::abs(dx) <= half && std::abs(dy) <= half;
            break;
          case ShapeKind::Circle:
            inside = dx * dx + dy * dy <= half * half;
            break;
          case ShapeKind::Triangle:
            // upward triangle: apex at (cx, cy-half), base at cy+half
            inside = dy >= -half && dy <= half &&
                     std::abs(dx) <= (dy + half) / 2.0;
            break;
        }
        if (inside) {
          uint8_t* px = img.pixel(x, y);
          px[0] = col.r;
          px[1] = col.g;
          px[2] = col.b;
        }
      }
  }
  return img;
}

std::string describe_scene(const SceneSpec& spec, CaptionStyle style) {
  validate_spec(spec);
  const std::string bg = palette()[spec.background].name;
  std::ostringstream os;
  if (style == CaptionStyle::Short) {
    if (spec.shapes.empty()) {
      os << "a plain " << bg << " background";
    } else {
      for (std::size_t i = 0; i < spec.shapes.size(); ++i) {
        if (i) os << " and ";
        os << "a " << palette()[spec.shapes[i].color].name << " "
           << kKindNames[int(spec.shapes[i].kind)];
      }
      os << " on a " << bg << " background";
    }
    return os.str();
  }
  os << "the background of the image is " << bg << " .";
  if (spec.shapes.empty()) {
    os << " there are no shapes in this scene .";
    return os.str();
  }
  for (const SceneShape& s : spec.shapes) {
    os << " there is a " << kSizeNames[int(s.size)] << " "
       << palette()[s.color].name << " " << kKindNames[int(s.kind)]
       << " in the " << kCellNames[s.cell] << " of the image .";
  }
  for (std::size_t i = 0; i < spec.shapes.size(); ++i)
    for (std::size_t j = i + 1; j < spec.shapes.size(); ++j)
      os << " the " << kKindNames[int(spec.shapes[i].kind)] << " is "
         << relation(spec.shapes[i], spec.shapes[j]) << " the "
         << kKindNames[int(spec.shapes[j].kind)] << " .";
  return os.str();
}

const std::vector<std::string>& prompt_pool() {
  static const std::vector<std::string> pool = {
      "describe this image .",
      "describe this image in detail .",
      "what does this image show ?",
      "give a description of the picture .",
      "what is in this image ?",
  };
  return pool;
}

InstructionSample format_single_turn(const std::string& image_ref,
                                     const std::string& caption,
                                     const std::string& source_tag) {
  if (caption.empty()) throw input_error("format_single_turn: empty caption");
  InstructionSample s;
  s.image_ref = image_ref;
  s.instruction = prompt_pool()[fnv1a(image_ref + "\x1f" + caption) % prompt_pool().size()];
  s.response = caption;
  s.source_tag = source_tag;
  return s;
}

SynthesizedDataset synthesize_dataset(uint64_t seed, int n, CaptionStyle style,
                                      const std::string& out_dir, int resolution) {
  if (n <= 0) throw input_error("synthesize_dataset: n must be positive");
  std::filesystem::create_directories(out_dir);
  Rng rng(seed);
  SynthesizedDataset ds;
  std::set<std::string> seen;
  const std::string tag = style == CaptionStyle::Dense ? "dense_caption" : "alignment";
  for (int i = 0; i < int(n); ++i) {
    SceneSpec spec;
    std::string key;
    do {  // redraw on duplicate specs so the dataset has no repeats
      spec = random_scene(rng);
      key = describe_scene(spec, CaptionStyle::Dense);
    } while (!seen.insert(key).second);
    spec.seed = seed;
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.ppm", i);
    const std::string path = (std::filesystem::path(out_dir) / name).string();
    save_ppm(render_scene(spec, resolution), path);
    ds.manifest.samples.push_back(
        format_single_turn(name, describe_scene(spec, style), tag));
    ds.specs.push_back(spec);
  }
  save_manifest(ds.manifest, (std::filesystem::path(out_dir) / "manifest.jsonl").string());
  // the written manifest holds bare filenames; the returned copy is usable as is
  for (InstructionSample& s : ds.manifest.samples)
    s.image_ref = (std::filesystem::path(out_dir) / s.image_ref).string();
  return ds;
}

}  // namespace vp
