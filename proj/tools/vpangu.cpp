// vpangu: synthesize data, train the two-stage captioner, generate captions,
// and score caption files. Exit codes: 0 success, 1 usage/config, 2 I/O,
// 3 numerical abort.

#include "vp/data.hpp"
#include "vp/errors.hpp"
#include "vp/inference.hpp"
#include "vp/metrics.hpp"
#include "vp/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw vp::config_error("config: unknown key \"" + key + "\" in " + where);
  }
}

struct TrainFileConfig {
  vp::TrainConfig train;
  std::vector<std::pair<std::string, double>> sources;  // manifest path, weight
  vp::ViTConfig vit;
  vp::ProjectorConfig proj;
  vp::LMConfig lm;
  std::string resume;
};

TrainFileConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vp::io_error("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw vp::parse_error("config: " + path + ": " + e.what());
  }
  reject_unknown_keys(j,
                      {"stage", "base_lr", "min_lr", "warmup_steps", "total_steps",
                       "clip_norm", "batch_size", "seed", "sources", "model", "resume"},
                      "top level");
  TrainFileConfig cfg;
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j[key].get<std::decay_t<decltype(slot)>>();
  };
  get("stage", cfg.train.stage);
  get("base_lr", cfg.train.base_lr);
  get("min_lr", cfg.train.min_lr);
  get("warmup_steps", cfg.train.warmup_steps);
  get("total_steps", cfg.train.total_steps);
  get("clip_norm", cfg.train.clip_norm);
  get("batch_size", cfg.train.batch_size);
  get("seed", cfg.train.seed);
  get("resume", cfg.resume);
  if (!j.contains("sources") || !j["sources"].is_array() || j["sources"].empty())
    throw vp::config_error("config: \"sources\" must be a nonempty array");
  for (const json& s : j["sources"]) {
    reject_unknown_keys(s, {"manifest", "weight"}, "sources entry");
    if (!s.contains("manifest")) throw vp::config_error("config: source without manifest");
    cfg.sources.emplace_back(s["manifest"].get<std::string>(),
                             s.value("weight", 1.0));
    cfg.train.mixture_weights.push_back(cfg.sources.back().second);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown_keys(m, {"vit", "proj", "lm"}, "model");
    if (m.contains("vit")) {
      const json& v = m["vit"];
      reject_unknown_keys(v, {"image_size", "patch_size", "embed_dim", "depth", "heads", "mlp_ratio"}, "model.vit");
      cfg.vit.image_size = v.value("image_size", cfg.vit.image_size);
      cfg.vit.patch_size = v.value("patch_size", cfg.vit.patch_size);
      cfg.vit.embed_dim = v.value("embed_dim", cfg.vit.embed_dim);
      cfg.vit.depth = v.value("depth", cfg.vit.depth);
      cfg.vit.heads = v.value("heads", cfg.vit.heads);
      cfg.vit.mlp_ratio = v.value("mlp_ratio", cfg.vit.mlp_ratio);
    }
    if (m.contains("proj")) {
      const json& v = m["proj"];
      reject_unknown_keys(v, {"hidden_dim", "out_dim", "num_layers"}, "model.proj");
      cfg.proj.hidden_dim = v.value("hidden_dim", cfg.proj.hidden_dim);
      cfg.proj.out_dim = v.value("out_dim", cfg.proj.out_dim);
      cfg.proj.num_layers = v.value("num_layers", cfg.proj.num_layers);
    }
    if (m.contains("lm")) {
      const json& v = m["lm"];
      reject_unknown_keys(v, {"vocab_size", "embed_dim", "depth", "heads", "max_seq_len", "mlp_ratio"}, "model.lm");
      cfg.lm.vocab_size = v.value("vocab_size", cfg.lm.vocab_size);
      cfg.lm.embed_dim = v.value("embed_dim", cfg.lm.embed_dim);
      cfg.lm.depth = v.value("depth", cfg.lm.depth);
      cfg.lm.heads = v.value("heads", cfg.lm.heads);
      cfg.lm.max_seq_len = v.value("max_seq_len", cfg.lm.max_seq_len);
      cfg.lm.mlp_ratio = v.value("mlp_ratio", cfg.lm.mlp_ratio);
    }
  }
  // keep the projector consistent with the configured encoder/LM dims
  cfg.proj.in_dim = cfg.vit.embed_dim;
  return cfg;
}

void print_report(const vp::MetricsReport& r) {
  std::printf("metric    value\n");
  std::printf("BLEU      %.6f\n", r.bleu);
  std::printf("METEOR    %.6f\n", r.meteor);
  std::printf("ROUGE-L   %.6f\n", r.rouge_l);
  std::printf("---\n");
  std::printf("bleu=%.17g\nmeteor=%.17g\nrouge_l=%.17g\ncorpus_size=%zu\n",
              r.bleu, r.meteor, r.rouge_l, r.corpus_size);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vp::io_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

int cmd_synth(uint64_t seed, int count, const std::string& style,
              const std::string& out, int resolution) {
  if (style != "short" && style != "dense")
    throw vp::config_error("synth: style must be short or dense");
  auto ds = vp::synthesize_dataset(
      seed, count, style == "dense" ? vp::CaptionStyle::Dense : vp::CaptionStyle::Short,
      out, resolution);
  std::cout << "wrote " << ds.manifest.samples.size() << " samples to " << out
            << " (manifest.jsonl + PPM images)\n";
  return 0;
}

int cmd_train(const std::string& config_path, int stage_override, int steps_override,
              long long seed_override, const std::string& resume_flag,
              const std::string& out) {
  TrainFileConfig cfg = load_train_config(config_path);
  if (stage_override > 0) cfg.train.stage = stage_override;
  if (steps_override >= 0) cfg.train.total_steps = steps_override;
  if (seed_override >= 0) cfg.train.seed = uint64_t(seed_override);
  if (!resume_flag.empty()) cfg.resume = resume_flag;

  std::vector<vp::DatasetManifest> manifests;
  for (const auto& [path, _] : cfg.sources) manifests.push_back(vp::load_manifest(path));

  vp::ModelBundle model;
  if (cfg.train.stage == 2 && cfg.resume.empty())
    throw vp::config_error("train: stage 2 requires --resume with a stage-1 checkpoint");
  if (!cfg.resume.empty()) {
    model = vp::load_checkpoint(cfg.resume);
  } else {
    vp::Tokenizer tokenizer;
    for (const auto& m : manifests)
      for (const auto& s : m.samples) {
        tokenizer.add_corpus_text(s.instruction);
        tokenizer.add_corpus_text(s.response);
      }
    model = vp::init_model(cfg.vit, cfg.proj, cfg.lm, tokenizer, cfg.train.seed);
  }

  std::vector<std::vector<vp::TrainSample>> sources;
  for (const auto& m : manifests)
    sources.push_back(vp::prepare_samples(m, model.tokenizer, model.vit_cfg.image_size));

  vp::LossTrace trace = vp::run_stage(model, sources, cfg.train);

  std::filesystem::create_directories(out);
  vp::save_checkpoint(model, (std::filesystem::path(out) / "checkpoint.vpck").string());
  vp::write_loss_trace_csv(trace, (std::filesystem::path(out) / "loss.csv").string());
  std::cout << "stage " << cfg.train.stage << ": " << trace.size() << " steps";
  if (!trace.empty()) std::cout << ", final loss " << trace.back().loss;
  std::cout << "\ncheckpoint: " << (std::filesystem::path(out) / "checkpoint.vpck").string()
            << "\n";
  return 0;
}

int cmd_caption(const std::string& checkpoint, const std::string& image,
                const std::string& prompt, int max_new_tokens) {
  vp::ModelBundle model = vp::load_checkpoint(checkpoint);
  const vp::ImageTensor img =
      vp::preprocess_image(vp::load_ppm(image), model.vit_cfg.image_size);
  std::cout << vp::generate_caption(model, img, prompt, max_new_tokens) << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest, int samples,
             uint64_t seed, bool sentence_bleu) {
  vp::ModelBundle model = vp::load_checkpoint(checkpoint);
  vp::DatasetManifest m = vp::load_manifest(manifest);
  print_report(vp::evaluate_corpus(model, m, samples, seed, 96, sentence_bleu));
  return 0;
}

int cmd_metrics(const std::string& hyp_path, const std::string& ref_path,
                bool sentence_bleu) {
  const auto hyp = read_lines(hyp_path);
  const auto ref = read_lines(ref_path);
  if (hyp.size() != ref.size())
    throw vp::input_error("metrics: line count mismatch (" + std::to_string(hyp.size()) +
                          " hypotheses vs " + std::to_string(ref.size()) + " references)");
  std::vector<vp::CaptionPair> pairs;
  for (std::size_t i = 0; i < hyp.size(); ++i)
    pairs.push_back({vp::metric_tokenize(hyp[i]), {vp::metric_tokenize(ref[i])}});
  print_report(vp::score_pairs(pairs, sentence_bleu));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vpangu: train and evaluate a small multimodal image captioner"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene dataset");
  uint64_t synth_seed = 0;
  int synth_count = 16, synth_res = 32;
  std::string synth_style = "dense", synth_out = "data";
  synth->add_option("--seed", synth_seed);
  synth->add_option("--count", synth_count);
  synth->add_option("--style", synth_style, "short|dense");
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--resolution", synth_res);

  auto* train = app.add_subcommand("train", "run one training stage");
  std::string train_config, train_resume, train_out = "run";
  int train_stage = 0, train_steps = -1;
  long long train_seed = -1;
  train->add_option("--config", train_config)->required();
  train->add_option("--stage", train_stage, "override config stage (1 or 2)");
  train->add_option("--steps", train_steps, "override total_steps");
  train->add_option("--seed", train_seed, "override seed");
  train->add_option("--resume", train_resume, "checkpoint to continue from");
  train->add_option("--out", train_out);

  auto* caption = app.add_subcommand("caption", "caption one image");
  std::string cap_ckpt, cap_image, cap_prompt = "describe this image in detail .";
  int cap_max = 96;
  caption->add_option("--checkpoint", cap_ckpt)->required();
  caption->add_option("--image", cap_image)->required();
  caption->add_option("--prompt", cap_prompt);
  caption->add_option("--max-new-tokens", cap_max);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  std::string eval_ckpt, eval_manifest;
  int eval_samples = 600;
  uint64_t eval_seed = 0;
  bool eval_sentence = false;
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--manifest", eval_manifest)->required();
  eval->add_option("--samples", eval_samples);
  eval->add_option("--seed", eval_seed);
  eval->add_flag("--sentence-bleu", eval_sentence, "mean of per-sentence BLEU");

  auto* metrics = app.add_subcommand("metrics", "score aligned hyp/ref text files");
  std::string met_hyp, met_ref;
  bool met_sentence = false;
  metrics->add_option("--hyp", met_hyp)->required();
  metrics->add_option("--ref", met_ref)->required();
  metrics->add_flag("--sentence-bleu", met_sentence);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_seed, synth_count, synth_style, synth_out, synth_res);
    if (train->parsed())
      return cmd_train(train_config, train_stage, train_steps, train_seed, train_resume,
                       train_out);
    if (caption->parsed()) return cmd_caption(cap_ckpt, cap_image, cap_prompt, cap_max);
    if (eval->parsed())
      return cmd_eval(eval_ckpt, eval_manifest, eval_samples, eval_seed, eval_sentence);
    if (metrics->parsed()) return cmd_metrics(met_hyp, met_ref, met_sentence);
  } catch (const vp::numeric_error& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const vp::io_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const vp::parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vp::checkpoint_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
