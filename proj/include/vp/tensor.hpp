#pragma once

// Tape-based reverse-mode autodiff over dense row-major tensors.
// Ops record a backward closure on the output's node; backward(loss)
// topologically orders the reachable nodes and replays them once each.

#include "vp/real.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace vp {

struct Node;

struct Tensor {
  std::vector<int64_t> shape;
  std::shared_ptr<std::vector<real>> data;
  std::shared_ptr<std::vector<real>> grad;  // allocated lazily
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves and constants

  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, real value, bool requires_grad = false);
  static Tensor from(std::vector<int64_t> shape, std::vector<real> values,
                     bool requires_grad = false);
  static Tensor scalar(real v);

  std::size_t numel() const;
  int64_t rows() const { return shape.at(0); }
  int64_t cols() const { return shape.at(1); }
  real& at(int64_t r, int64_t c) { return (*data)[r * cols() + c]; }
  real at(int64_t r, int64_t c) const { return (*data)[r * cols() + c]; }
  real item() const;

  bool all_finite() const;
  void zero_grad();
  void ensure_grad();
};

struct Node {
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;
};

// Topologically ordered op records, leaves first.
using Tape = std::vector<std::shared_ptr<Node>>;

struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct index_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct degenerate_batch_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string shape_str(const std::vector<int64_t>& s);

// --- ops (all 2D unless noted) ---
Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor scale(const Tensor& a, real c);
Tensor hadamard(const Tensor& a, const Tensor& b);     // same shape
Tensor add_bias(const Tensor& x, const Tensor& bias);  // x [N x d] + bias [d]
Tensor matmul(const Tensor& a, const Tensor& b);       // [m x k] * [k x n]
Tensor transpose(const Tensor& a);
Tensor gelu(const Tensor& x);                          // tanh approximation
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  real eps = real(1e-5));
Tensor softmax_rows(const Tensor& x);
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor slice_rows(const Tensor& x, int64_t offset, int64_t count);
Tensor slice_cols(const Tensor& x, int64_t offset, int64_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum_all(const Tensor& x);  // -> scalar

// Builds the tape reachable from `t` (each node exactly once, leaves first).
Tape build_tape(const Tensor& t);

// Seeds d(loss)/d(loss)=1 and accumulates gradients into every
// requires_grad leaf. The tape is consumed: nodes are detached afterwards.
void backward(Tensor& loss);

}  // namespace vp
