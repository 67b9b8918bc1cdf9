#pragma once

// Two-stage optimization: Stage 1 trains the projector with encoder and
// language model frozen, Stage 2 fine-tunes all parameters. AdamW with
// linear warmup, cosine decay and global-norm gradient clipping.

#include "vp/data.hpp"
#include "vp/model.hpp"

#include <unordered_map>

namespace vp {

struct FreezePolicy {
  bool encoder_trainable = true;
  bool lm_trainable = true;
  bool projector_trainable = true;
};

FreezePolicy policy_for_stage(int stage);
void apply_freeze(ModelBundle& model, const FreezePolicy& policy);

struct TrainConfig {
  int stage = 1;
  double base_lr = 2e-5;
  double min_lr = 2e-6;  // base_lr / 10
  int warmup_steps = 0;  // default: 3% of total, see normalize()
  int total_steps = 100;
  double clip_norm = 1.0;
  int batch_size = 8;
  uint64_t seed = 0;
  std::vector<double> mixture_weights;

  // Fills derived defaults and checks invariants.
  void normalize();
};

// Linear warmup from 0 to base_lr, then cosine decay to min_lr; steps past
// total_steps clamp to min_lr.
double cosine_lr(int step, const TrainConfig& cfg);

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
real clip_gradients(const std::vector<std::vector<real>*>& grads, real max_norm);

class AdamW {
 public:
  struct Hyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  explicit AdamW(Hyper hyper) : hyper_(hyper) {}

  // Applies one update to every (name, tensor) with requires_grad set;
  // moment buffers exist only for those parameters.
  void step(const std::vector<std::pair<std::string, Tensor*>>& params, double lr);

  int step_count() const { return step_count_; }
  bool has_state_for(const std::string& name) const { return slots_.count(name) > 0; }

 private:
  struct Slot {
    std::vector<real> m, v;
  };
  Hyper hyper_;
  std::unordered_map<std::string, Slot> slots_;
  int step_count_ = 0;
};

// Deterministic batch stream over several sources: each batch is drawn from
// source i with probability weight_i / sum(weights); samples within a source
// are drawn uniformly without replacement per epoch.
class BatchMixer {
 public:
  BatchMixer(std::vector<std::size_t> source_sizes, std::vector<double> weights,
             uint64_t seed);

  // (source index, sample index)
  std::pair<int, std::size_t> next();
  std::vector<std::pair<int, std::size_t>> next_batch(int batch_size);

 private:
  void refill(int source);
  std::vector<std::size_t> sizes_;
  std::vector<double> cumulative_;
  std::vector<std::vector<std::size_t>> queues_;
  Rng rng_;
};

struct TrainSample {
  ImageTensor image;
  std::vector<int> instruction;
  std::vector<int> response;
};

std::vector<TrainSample> prepare_samples(const DatasetManifest& manifest,
                                         const Tokenizer& tokenizer, int image_size);

struct LossTracePoint {
  int step;
  double lr;
  double loss;
};
using LossTrace = std::vector<LossTracePoint>;

void write_loss_trace_csv(const LossTrace& trace, const std::string& path);

// Runs cfg.total_steps of forward (encode -> project -> assemble -> loss),
// backward, clip, AdamW under the stage's FreezePolicy. Throws numeric_error
// with step diagnostics on a non-finite loss.
LossTrace run_stage(ModelBundle& model, const std::vector<std::vector<TrainSample>>& sources,
                    TrainConfig cfg);

}  // namespace vp
