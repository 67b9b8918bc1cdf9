#include "vp/train.hpp"

#include "vp/errors.hpp"
#include "vp/vision.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace vp {

FreezePolicy policy_for_stage(int stage) {
  if (stage == 1) return {false, false, true};
  if (stage == 2) return {true, true, true};
  throw config_error("stage must be 1 or 2, got " + std::to_string(stage));
}

void apply_freeze(ModelBundle& model, const FreezePolicy& policy) {
  model.visit_params([&](const std::string& name, Tensor& t) {
    if (name.rfind("enc.", 0) == 0)
      t.requires_grad = policy.encoder_trainable;
    else if (name.rfind("proj.", 0) == 0)
      t.requires_grad = policy.projector_trainable;
    else
      t.requires_grad = policy.lm_trainable;
  });
}

void TrainConfig::normalize() {
  if (stage != 1 && stage != 2) throw config_error("train: stage must be 1 or 2");
  if (base_lr <= 0) throw config_error("train: base_lr must be positive");
  if (min_lr <= 0) min_lr = base_lr / 10.0;
  if (min_lr > base_lr) throw config_error("train: min_lr must not exceed base_lr");
  if (total_steps < 0) throw config_error("train: total_steps must be nonnegative");
  if (warmup_steps <= 0) warmup_steps = std::max(1, total_steps * 3 / 100);
  if (total_steps > 0 && warmup_steps >= total_steps)
    throw config_error("train: warmup_steps must be below total_steps");
  if (clip_norm <= 0) throw config_error("train: clip_norm must be positive");
  if (batch_size <= 0) throw config_error("train: batch_size must be positive");
}

double cosine_lr(int step, const TrainConfig& cfg) {
  if (step < 0) throw config_error("cosine_lr: negative step");
  if (step >= cfg.total_steps) return cfg.min_lr;
  if (step <= cfg.warmup_steps)
    return cfg.base_lr * double(step) / double(cfg.warmup_steps);
  const double t = double(step - cfg.warmup_steps) /
                   double(cfg.total_steps - cfg.warmup_steps);
  return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + std::cos(3.141592653589793 * t));
}

real clip_gradients(const std::vector<std::vector<real>*>& grads, real max_norm) {
  if (max_norm <= 0) throw config_error("clip_gradients: max_norm must be positive");
  double sq = 0;
  for (const std::vector<real>* g : grads)
    for (real v : *g) sq += double(v) * double(v);
  const real norm = real(std::sqrt(sq));
  if (norm > max_norm) {
    const real s = max_norm / norm;
    for (std::vector<real>* g : grads)
      for (real& v : *g) v *= s;
  }
  return norm;
}

void AdamW::step(const std::vector<std::pair<std::string, Tensor*>>& params, double lr) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(hyper_.beta1, step_count_);
  const double bc2 = 1.0 - std::pow(hyper_.beta2, step_count_);
  for (const auto& [name, t] : params) {
    if (!t->requires_grad) continue;  // frozen parameters stay untouched
    t->ensure_grad();
    Slot& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m.assign(t->numel(), real(0));
      slot.v.assign(t->numel(), real(0));
    }
    if (slot.m.size() != t->numel())
      throw config_error("adamw: state size mismatch for " + name);
    for (std::size_t i = 0; i < t->numel(); ++i) {
      const double g = (*t->grad)[i];
      slot.m[i] = real(hyper_.beta1 * slot.m[i] + (1.0 - hyper_.beta1) * g);
      slot.v[i] = real(hyper_.beta2 * slot.v[i] + (1.0 - hyper_.beta2) * g * g);
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      double p = (*t->data)[i];
      p -= lr * (mhat / (std::sqrt(vhat) + hyper_.eps) + hyper_.weight_decay * p);
      (*t->data)[i] = real(p);
    }
  }
}

BatchMixer::BatchMixer(std::vector<std::size_t> source_sizes, std::vector<double> weights,
                       uint64_t seed)
    : sizes_(std::move(source_sizes)), rng_(seed) {
  if (sizes_.empty()) throw config_error("mixer: no sources");
  if (weights.empty()) weights.assign(sizes_.size(), 1.0);
  if (weights.size() != sizes_.size())
    throw config_error("mixer: weight count does not match source count");
  double total = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0) throw config_error("mixer: negative mixture weight");
    if (weights[i] > 0 && sizes_[i] == 0)
      throw config_error("mixer: source " + std::to_string(i) +
                         " is empty but has positive weight");
    total += weights[i];
  }
  if (total <= 0) throw config_error("mixer: mixture weights are all zero");
  double acc = 0;
  for (double w : weights) {
    acc += w / total;
    cumulative_.push_back(acc);
  }
  cumulative_.back() = 1.0;
  queues_.resize(sizes_.size());
}

void BatchMixer::refill(int source) {
  std::vector<std::size_t>& q = queues_[source];
  q.resize(sizes_[source]);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = i;
  rng_.shuffle(q);
}

std::pair<int, std::size_t> BatchMixer::next() {
  const double u = rng_.uniform();
  int source = 0;
  while (u >= cumulative_[source]) ++source;
  if (queues_[source].empty()) refill(source);
  const std::size_t idx = queues_[source].back();
  queues_[source].pop_back();
  return {source, idx};
}

std::vector<std::pair<int, std::size_t>> BatchMixer::next_batch(int batch_size) {
  // whole batch from one source
  const double u = rng_.uniform();
  int source = 0;
  while (u >= cumulative_[source]) ++source;
  std::vector<std::pair<int, std::size_t>> batch;
  for (int i = 0; i < batch_size; ++i) {
    if (queues_[source].empty()) refill(source);
    batch.emplace_back(source, queues_[source].back());
    queues_[source].pop_back();
  }
  return batch;
}

std::vector<TrainSample> prepare_samples(const DatasetManifest& manifest,
                                         const Tokenizer& tokenizer, int image_size) {
  std::vector<TrainSample> out;
  out.reserve(manifest.samples.size());
  for (const InstructionSample& s : manifest.samples) {
    TrainSample ts;
    ts.image = preprocess_image(load_ppm(s.image_ref), image_size);
    ts.instruction = tokenizer.tokenize(s.instruction);
    ts.response = tokenizer.tokenize(s.response);
    out.push_back(std::move(ts));
  }
  return out;
}

void write_loss_trace_csv(const LossTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("loss trace: cannot open " + path);
  out << "step,lr,loss\n";
  out.precision(17);
  for (const LossTracePoint& p : trace)
    out << p.step << "," << p.lr << "," << p.loss << "\n";
}

LossTrace run_stage(ModelBundle& model, const std::vector<std::vector<TrainSample>>& sources,
                    TrainConfig cfg) {
  cfg.normalize();
  apply_freeze(model, policy_for_stage(cfg.stage));

  std::vector<std::size_t> sizes;
  for (const auto& s : sources) sizes.push_back(s.size());
  BatchMixer mixer(sizes, cfg.mixture_weights, cfg.seed);

  auto params = model.named_params();
  std::vector<std::pair<std::string, Tensor*>> trainable;
  for (auto& p : params)
    if (p.second->requires_grad) trainable.push_back(p);

  AdamW opt;
  LossTrace trace;
  for (int step = 1; step <= cfg.total_steps; ++step) {
    const auto batch = mixer.next_batch(cfg.batch_size);
    model.zero_grads();

    Tensor total;
    for (const auto& [si, xi] : batch) {
      const TrainSample& sample = sources[si][xi];
      Tensor h_v = visual_tokens(model, sample.image);
      MultimodalSequence seq =
          assemble_sequence(h_v, sample.instruction, sample.response, model.lm_cfg, model.lm);
      Tensor loss = caption_loss(seq, model.lm_cfg, model.lm);
      total = total.data ? add(total, loss) : loss;
    }
    total = scale(total, real(1) / real(batch.size()));

    const double lr = cosine_lr(step, cfg);
    if (!std::isfinite(total.item())) {
      std::ostringstream os;
      os << "run_stage: non-finite loss at step " << step << " (lr " << lr << ", batch ids";
      for (const auto& [si, xi] : batch) os << " " << si << ":" << xi;
      os << ")";
      throw numeric_error(os.str());
    }

    backward(total);
    std::vector<std::vector<real>*> grads;
    for (auto& [name, t] : trainable) {
      t->ensure_grad();
      grads.push_back(t->grad.get());
    }
    clip_gradients(grads, real(cfg.clip_norm));
    opt.step(trainable, lr);

    trace.push_back({step, lr, total.item()});
  }
  return trace;
}

}  // namespace vp
