#include "vp/inference.hpp"

#include "vp/errors.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace vp {

namespace {

constexpr char kMagic[4] = {'V', 'P', 'C', 'K'};
constexpr uint32_t kVersion = 1;

uint64_t fnv1a(const uint8_t* data, std::size_t n) {
  uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(const uint8_t* data, std::size_t n) : data_(data), n_(n) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > n_) throw checkpoint_error("checkpoint: unexpected end of data");
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_bytes(std::size_t len) {
    if (pos_ + len > n_) throw checkpoint_error("checkpoint: unexpected end of data");
    std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
    pos_ += len;
    return s;
  }

 private:
  const uint8_t* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

nlohmann::json config_header(const ModelBundle& m) {
  return {
      {"vit",
       {{"image_size", m.vit_cfg.image_size},
        {"patch_size", m.vit_cfg.patch_size},
        {"embed_dim", m.vit_cfg.embed_dim},
        {"depth", m.vit_cfg.depth},
        {"heads", m.vit_cfg.heads},
        {"mlp_ratio", m.vit_cfg.mlp_ratio}}},
      {"proj",
       {{"in_dim", m.proj_cfg.in_dim},
        {"hidden_dim", m.proj_cfg.hidden_dim},
        {"out_dim", m.proj_cfg.out_dim},
        {"num_layers", m.proj_cfg.num_layers}}},
      {"lm",
       {{"vocab_size", m.lm_cfg.vocab_size},
        {"embed_dim", m.lm_cfg.embed_dim},
        {"depth", m.lm_cfg.depth},
        {"heads", m.lm_cfg.heads},
        {"max_seq_len", m.lm_cfg.max_seq_len},
        {"mlp_ratio", m.lm_cfg.mlp_ratio}}},
      {"vocab", m.tokenizer.vocab()},
  };
}

}  // namespace

void save_checkpoint(ModelBundle& model, const std::string& path) {
  std::string buf;
  buf.append(kMagic, 4);
  put<uint32_t>(buf, kVersion);

  const std::string header = config_header(model).dump();
  put<uint64_t>(buf, header.size());
  buf += header;

  auto params = model.named_params();
  put<uint64_t>(buf, params.size());
  for (auto& [name, t] : params) {
    put<uint32_t>(buf, uint32_t(name.size()));
    buf += name;
    put<uint32_t>(buf, uint32_t(sizeof(real)));
    put<uint32_t>(buf, uint32_t(t->shape.size()));
    for (int64_t e : t->shape) put<int64_t>(buf, e);
    buf.append(reinterpret_cast<const char*>(t->data->data()), t->numel() * sizeof(real));
  }
  put<uint64_t>(buf, fnv1a(reinterpret_cast<const uint8_t*>(buf.data()), buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("save_checkpoint: cannot open " + path);
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw io_error("save_checkpoint: write failed for " + path);
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_checkpoint: cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw checkpoint_error("checkpoint: file too short");

  uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  if (stored != fnv1a(buf.data(), buf.size() - 8))
    throw checkpoint_error("checkpoint: checksum mismatch (truncated or corrupted file)");

  Reader r(buf.data(), buf.size() - 8);
  if (r.get_bytes(4) != std::string(kMagic, 4))
    throw checkpoint_error("checkpoint: bad magic");
  const uint32_t version = r.get<uint32_t>();
  if (version != kVersion)
    throw checkpoint_error("checkpoint: unknown version " + std::to_string(version));

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.get_bytes(r.get<uint64_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(std::string("checkpoint: bad header: ") + e.what());
  }

  ViTConfig vit{h["vit"]["image_size"].get<int>(), h["vit"]["patch_size"].get<int>(),
                h["vit"]["embed_dim"].get<int>(),  h["vit"]["depth"].get<int>(),
                h["vit"]["heads"].get<int>(),      h["vit"]["mlp_ratio"].get<double>()};
  ProjectorConfig proj{h["proj"]["in_dim"].get<int>(), h["proj"]["hidden_dim"].get<int>(),
                       h["proj"]["out_dim"].get<int>(), h["proj"]["num_layers"].get<int>()};
  LMConfig lm{h["lm"]["vocab_size"].get<int>(), h["lm"]["embed_dim"].get<int>(),
              h["lm"]["depth"].get<int>(),      h["lm"]["heads"].get<int>(),
              h["lm"]["max_seq_len"].get<int>(), h["lm"]["mlp_ratio"].get<double>()};
  Tokenizer tokenizer(h["vocab"].get<std::vector<std::string>>());
  ModelBundle model = init_model(vit, proj, lm, tokenizer, 0);

  struct Stored {
    std::vector<int64_t> shape;
    std::vector<real> values;
  };
  std::unordered_map<std::string, Stored> table;
  const uint64_t count = r.get<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = r.get_bytes(r.get<uint32_t>());
    const uint32_t elem_size = r.get<uint32_t>();
    if (elem_size != 4 && elem_size != 8)
      throw checkpoint_error("checkpoint: tensor " + name + ": bad element size");
    const uint32_t ndim = r.get<uint32_t>();
    Stored s;
    std::size_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      s.shape.push_back(r.get<int64_t>());
      numel *= std::size_t(s.shape.back());
    }
    s.values.resize(numel);
    for (std::size_t e = 0; e < numel; ++e)
      s.values[e] = elem_size == 8 ? real(r.get<double>()) : real(r.get<float>());
    if (!table.emplace(name, std::move(s)).second)
      throw checkpoint_error("checkpoint: duplicate tensor " + name);
  }

  model.visit_params([&](const std::string& name, Tensor& t) {
    auto it = table.find(name);
    if (it == table.end())
      throw checkpoint_error("checkpoint: missing tensor " + name);
    if (it->second.shape != t.shape)
      throw checkpoint_error("checkpoint: tensor " + name + " has shape " +
                             shape_str(it->second.shape) + ", expected " + shape_str(t.shape));
    *t.data = std::move(it->second.values);
  });
  return model;
}

std::string generate_caption(ModelBundle& model, const ImageTensor& image,
                             const std::string& prompt, int max_new_tokens) {
  if (max_new_tokens < 1)
    throw input_error("generate_caption: max_new_tokens must be >= 1");
  const std::vector<int> instr = model.tokenizer.tokenize(prompt);
  const int64_t reserve = 2;  // BOS and EOS rows
  const int64_t budget = model.lm_cfg.max_seq_len - model.vit_cfg.num_patches() -
                         int64_t(instr.size()) - reserve;
  if (budget < 1)
    throw sequence_length_error("generate_caption: prompt leaves no room for response");

  Tensor h_v = visual_tokens(model, image);
  std::vector<int> response;
  const int limit = int(std::min<int64_t>(max_new_tokens, budget));
  for (int step = 0; step < limit; ++step) {
    // the trailing EOS row cannot influence earlier positions (causal mask),
    // so the training-time assembly is reused as the decoding prefix
    MultimodalSequence seq =
        assemble_sequence(h_v, instr, response, model.lm_cfg, model.lm);
    Tensor logits = forward_logits(seq, model.lm_cfg, model.lm);
    const int64_t row = seq.resp_offset + int64_t(response.size()) - 1;
    // logit columns past the tokenizer's vocabulary are padding slots
    const int64_t live = std::min<int64_t>(logits.cols(), model.tokenizer.size());
    int best = 0;
    real best_v = logits.at(row, 0);
    for (int64_t v = 1; v < live; ++v)
      if (logits.at(row, v) > best_v) {  // strict: ties keep the lowest id
        best_v = logits.at(row, v);
        best = int(v);
      }
    if (best == Tokenizer::kEos) break;
    response.push_back(best);
  }
  return model.tokenizer.detokenize(response);
}

}  // namespace vp
