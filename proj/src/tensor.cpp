#include "vp/tensor.hpp"

#include "vp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace vp {

namespace {

std::size_t shape_numel(const std::vector<int64_t>& shape) {
  std::size_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw shape_error("tensor extent must be positive, got " + std::to_string(e));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

// Marks `out` as grad-carrying, allocates grad buffers on `out` and on every
// grad-requiring input (so tensor copies captured afterwards share them), and
// wires the node graph. Returns false when no input requires grad.
bool prep_grads(Tensor& out, std::vector<const Tensor*> ins) {
  bool any = false;
  for (const Tensor* t : ins) any = any || t->requires_grad;
  if (!any) return false;
  out.requires_grad = true;
  out.ensure_grad();
  for (const Tensor* t : ins)
    if (t->requires_grad) const_cast<Tensor*>(t)->ensure_grad();
  out.node = std::make_shared<Node>();
  for (const Tensor* t : ins)
    if (t->node) out.node->parents.push_back(t->node);
  return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                      " vs " + shape_str(b.shape));
}

}  // namespace

std::string shape_str(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<real>>(shape_numel(t.shape), real(0));
  t.requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, real value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<real> values, bool requires_grad) {
  Tensor t;
  t.shape = std::move(shape);
  if (shape_numel(t.shape) != values.size())
    throw shape_error("from: " + std::to_string(values.size()) + " values for shape " +
                      shape_str(t.shape));
  t.data = std::make_shared<std::vector<real>>(std::move(values));
  t.requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(real v) { return from({1}, {v}); }

std::size_t Tensor::numel() const { return data ? data->size() : 0; }

real Tensor::item() const {
  if (numel() != 1) throw shape_error("item: tensor has " + std::to_string(numel()) + " elements");
  return (*data)[0];
}

bool Tensor::all_finite() const {
  for (real v : *data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::zero_grad() {
  // Allocates too: leaves need their buffer in place before the forward
  // pass so ops share it through tensor copies.
  ensure_grad();
  std::fill(grad->begin(), grad->end(), real(0));
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::make_shared<std::vector<real>>(numel(), real(0));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < out.numel(); ++i)
    (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  if (prep_grads(out, {&a, &b})) {
    Tensor pa = a, pb = b, po = out;
    out.node->backward = [pa, pb, po]() mutable {
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < po.numel(); ++i) (*pa.grad)[i] += (*po.grad)[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < po.numel(); ++i) (*pb.grad)[i] += (*po.grad)[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, real c) {
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = c * (*a.data)[i];
  if (prep_grads(out, {&a})) {
    Tensor pa = a, po = out;
    out.node->backward = [pa, po, c]() mutable {
      pa.ensure_grad();
      for (std::size_t i = 0; i < po.numel(); ++i) (*pa.grad)[i] += c * (*po.grad)[i];
    };
  }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "hadamard");
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < out.numel(); ++i)
    (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  if (prep_grads(out, {&a, &b})) {
    Tensor pa = a, pb = b, po = out;
    out.node->backward = [pa, pb, po]() mutable {
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < po.numel(); ++i)
          (*pa.grad)[i] += (*pb.data)[i] * (*po.grad)[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < po.numel(); ++i)
          (*pb.grad)[i] += (*pa.data)[i] * (*po.grad)[i];
      }
    };
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.shape.size() != 2 || bias.shape.size() != 1 || x.cols() != bias.shape[0])
    throw shape_error("add_bias: " + shape_str(x.shape) + " vs " + shape_str(bias.shape));
  const int64_t n = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros(x.shape);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j)
      out.at(i, j) = x.at(i, j) + (*bias.data)[j];
  if (prep_grads(out, {&x, &bias})) {
    Tensor px = x, pb = bias, po = out;
    out.node->backward = [px, pb, po, n, d]() mutable {
      if (px.requires_grad) {
        px.ensure_grad();
        for (std::size_t i = 0; i < po.numel(); ++i) (*px.grad)[i] += (*po.grad)[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < d; ++j) (*pb.grad)[j] += (*po.grad)[i * d + j];
      }
    };
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.cols() != b.rows())
    throw shape_error("matmul: inner extents differ, " + shape_str(a.shape) + " * " +
                      shape_str(b.shape));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  kernels::matmul_omp(a.data->data(), b.data->data(), out.data->data(), m, k, n);
  if (prep_grads(out, {&a, &b})) {
    Tensor pa = a, pb = b, po = out;
    out.node->backward = [pa, pb, po, m, k, n]() mutable {
      if (pa.requires_grad) {
        pa.ensure_grad();  // dA += dC * B^T
        kernels::matmul_nt_acc_omp(po.grad->data(), pb.data->data(), pa.grad->data(), m, n, k);
      }
      if (pb.requires_grad) {
        pb.ensure_grad();  // dB += A^T * dC
        kernels::matmul_tn_acc_omp(pa.data->data(), po.grad->data(), pb.grad->data(), m, k, n);
      }
    };
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.shape.size() != 2) throw shape_error("transpose: need 2D, got " + shape_str(a.shape));
  const int64_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (prep_grads(out, {&a})) {
    Tensor pa = a, po = out;
    out.node->backward = [pa, po, m, n]() mutable {
      pa.ensure_grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) (*pa.grad)[i * n + j] += (*po.grad)[j * m + i];
    };
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape);
  kernels::gelu_omp(x.data->data(), out.data->data(), x.numel());
  if (prep_grads(out, {&x})) {
    Tensor px = x, po = out;
    out.node->backward = [px, po]() mutable {
      px.ensure_grad();
      for (std::size_t i = 0; i < po.numel(); ++i)
        (*px.grad)[i] += kernels::gelu_grad_at((*px.data)[i]) * (*po.grad)[i];
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
  if (x.shape.empty()) throw shape_error("layer_norm: empty shape");
  const int64_t d = x.shape.back();
  if (gain.shape != std::vector<int64_t>{d} || bias.shape != std::vector<int64_t>{d})
    throw shape_error("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                      shape_str(gain.shape) + " and " + shape_str(bias.shape));
  const int64_t n = static_cast<int64_t>(x.numel()) / d;
  Tensor out = Tensor::zeros(x.shape);
  // cache normalized values and inverse stddev per row for the backward pass
  auto xhat = std::make_shared<std::vector<real>>(x.numel());
  auto istd = std::make_shared<std::vector<real>>(n);
  for (int64_t r = 0; r < n; ++r) {
    const real* row = x.data->data() + r * d;
    real mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += row[j];
    mean /= real(d);
    real var = 0;
    for (int64_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= real(d);
    const real inv = real(1) / std::sqrt(var + eps);
    (*istd)[r] = inv;
    for (int64_t j = 0; j < d; ++j) {
      const real h = (row[j] - mean) * inv;
      (*xhat)[r * d + j] = h;
      (*out.data)[r * d + j] = h * (*gain.data)[j] + (*bias.data)[j];
    }
  }
  if (prep_grads(out, {&x, &gain, &bias})) {
    Tensor px = x, pg = gain, pb = bias, po = out;
    out.node->backward = [px, pg, pb, po, xhat, istd, n, d]() mutable {
      for (int64_t r = 0; r < n; ++r) {
        const real* go = po.grad->data() + r * d;
        const real* h = xhat->data() + r * d;
        if (pg.requires_grad) {
          pg.ensure_grad();
          for (int64_t j = 0; j < d; ++j) (*pg.grad)[j] += go[j] * h[j];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (int64_t j = 0; j < d; ++j) (*pb.grad)[j] += go[j];
        }
        if (px.requires_grad) {
          px.ensure_grad();
          // dx = istd/d * (d*gh - sum(gh) - h*sum(gh*h)), gh = go*gain
          real s1 = 0, s2 = 0;
          for (int64_t j = 0; j < d; ++j) {
            const real gh = go[j] * (*pg.data)[j];
            s1 += gh;
            s2 += gh * h[j];
          }
          const real inv = (*istd)[r];
          for (int64_t j = 0; j < d; ++j) {
            const real gh = go[j] * (*pg.data)[j];
            (*px.grad)[r * d + j] += inv * (gh - (s1 + h[j] * s2) / real(d));
          }
        }
      }
    };
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.shape.empty()) throw shape_error("softmax_rows: empty shape");
  const int64_t v = x.shape.back();
  const int64_t n = static_cast<int64_t>(x.numel()) / v;
  Tensor out = Tensor::zeros(x.shape);
  for (int64_t r = 0; r < n; ++r) {
    const real* row = x.data->data() + r * v;
    real* orow = out.data->data() + r * v;
    real mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    real z = 0;
    for (int64_t j = 0; j < v; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int64_t j = 0; j < v; ++j) orow[j] /= z;
  }
  if (prep_grads(out, {&x})) {
    Tensor px = x, po = out;
    out.node->backward = [px, po, n, v]() mutable {
      px.ensure_grad();
      for (int64_t r = 0; r < n; ++r) {
        const real* p = po.data->data() + r * v;
        const real* go = po.grad->data() + r * v;
        real dot = 0;
        for (int64_t j = 0; j < v; ++j) dot += p[j] * go[j];
        for (int64_t j = 0; j < v; ++j)
          (*px.grad)[r * v + j] += p[j] * (go[j] - dot);
      }
    };
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<uint8_t>& mask) {
  if (logits.shape.size() != 2) throw shape_error("cross_entropy: logits must be 2D");
  const int64_t t_count = logits.rows(), v = logits.cols();
  if (static_cast<int64_t>(targets.size()) != t_count ||
      static_cast<int64_t>(mask.size()) != t_count)
    throw shape_error("cross_entropy: targets/mask length must equal logit rows");
  int64_t n_active = 0;
  for (int64_t t = 0; t < t_count; ++t) {
    if (!mask[t]) continue;
    ++n_active;
    if (targets[t] < 0 || targets[t] >= v)
      throw index_error("cross_entropy: target id " + std::to_string(targets[t]) +
                        " out of range [0," + std::to_string(v) + ") at row " +
                        std::to_string(t));
  }
  if (n_active == 0) throw degenerate_batch_error("cross_entropy: all positions masked out");

  // cache per-row softmax for backward
  auto probs = std::make_shared<std::vector<real>>(logits.numel(), real(0));
  real loss = 0;
  for (int64_t t = 0; t < t_count; ++t) {
    if (!mask[t]) continue;
    const real* row = logits.data->data() + t * v;
    real mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    real z = 0;
    for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const real lse = mx + std::log(z);
    loss += lse - row[targets[t]];
    for (int64_t j = 0; j < v; ++j)
      (*probs)[t * v + j] = std::exp(row[j] - lse);
  }
  Tensor out = Tensor::scalar(loss / real(n_active));
  if (prep_grads(out, {&logits})) {
    Tensor pl = logits, po = out;
    const auto tgt = targets;
    const auto msk = mask;
    out.node->backward = [pl, po, probs, tgt, msk, t_count, v, n_active]() mutable {
      pl.ensure_grad();
      const real g = (*po.grad)[0] / real(n_active);
      for (int64_t t = 0; t < t_count; ++t) {
        if (!msk[t]) continue;  // masked rows get exactly zero gradient
        for (int64_t j = 0; j < v; ++j)
          (*pl.grad)[t * v + j] += g * ((*probs)[t * v + j] - (j == tgt[t] ? real(1) : real(0)));
      }
    };
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape.size() != 2) throw shape_error("embedding_lookup: table must be 2D");
  const int64_t v = table.rows(), d = table.cols();
  Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= v)
      throw index_error("embedding_lookup: id " + std::to_string(ids[t]) +
                        " out of range [0," + std::to_string(v) + ")");
    std::copy_n(table.data->data() + ids[t] * d, d, out.data->data() + t * d);
  }
  if (prep_grads(out, {&table})) {
    Tensor pt = table, po = out;
    const auto idv = ids;
    out.node->backward = [pt, po, idv, d]() mutable {
      pt.ensure_grad();
      for (std::size_t t = 0; t < idv.size(); ++t)
        for (int64_t j = 0; j < d; ++j)
          (*pt.grad)[idv[t] * d + j] += (*po.grad)[t * d + j];
    };
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int64_t offset, int64_t count) {
  if (x.shape.size() != 2) throw shape_error("slice_rows: need 2D");
  if (offset < 0 || count <= 0 || offset + count > x.rows())
    throw shape_error("slice_rows: range [" + std::to_string(offset) + "," +
                      std::to_string(offset + count) + ") outside " + shape_str(x.shape));
  const int64_t d = x.cols();
  Tensor out = Tensor::zeros({count, d});
  std::copy_n(x.data->data() + offset * d, count * d, out.data->data());
  if (prep_grads(out, {&x})) {
    Tensor px = x, po = out;
    out.node->backward = [px, po, offset, count, d]() mutable {
      px.ensure_grad();
      for (int64_t i = 0; i < count * d; ++i)
        (*px.grad)[offset * d + i] += (*po.grad)[i];
    };
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int64_t offset, int64_t count) {
  if (x.shape.size() != 2) throw shape_error("slice_cols: need 2D");
  if (offset < 0 || count <= 0 || offset + count > x.cols())
    throw shape_error("slice_cols: range [" + std::to_string(offset) + "," +
                      std::to_string(offset + count) + ") outside " + shape_str(x.shape));
  const int64_t n = x.rows(), d = x.cols();
  Tensor out = Tensor::zeros({n, count});
  for (int64_t i = 0; i < n; ++i)
    std::copy_n(x.data->data() + i * d + offset, count, out.data->data() + i * count);
  if (prep_grads(out, {&x})) {
    Tensor px = x, po = out;
    out.node->backward = [px, po, offset, count, n, d]() mutable {
      px.ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < count; ++j)
          (*px.grad)[i * d + offset + j] += (*po.grad)[i * count + j];
    };
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw shape_error("concat_rows: no parts");
  const int64_t d = parts[0].cols();
  int64_t n = 0;
  for (const Tensor& p : parts) {
    if (p.shape.size() != 2 || p.cols() != d)
      throw shape_error("concat_rows: column mismatch, " + shape_str(p.shape));
    n += p.rows();
  }
  Tensor out = Tensor::zeros({n, d});
  int64_t row = 0;
  for (const Tensor& p : parts) {
    std::copy_n(p.data->data(), p.numel(), out.data->data() + row * d);
    row += p.rows();
  }
  std::vector<const Tensor*> ins;
  for (const Tensor& p : parts) ins.push_back(&p);
  if (prep_grads(out, ins)) {
    Tensor po = out;
    std::vector<Tensor> ps = parts;
    out.node->backward = [ps, po, d]() mutable {
      int64_t row = 0;
      for (Tensor& p : ps) {
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t i = 0; i < p.numel(); ++i)
            (*p.grad)[i] += (*po.grad)[row * d + i];
        }
        row += p.rows();
      }
    };
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw shape_error("concat_cols: no parts");
  const int64_t n = parts[0].rows();
  int64_t d = 0;
  for (const Tensor& p : parts) {
    if (p.shape.size() != 2 || p.rows() != n)
      throw shape_error("concat_cols: row mismatch, " + shape_str(p.shape));
    d += p.cols();
  }
  Tensor out = Tensor::zeros({n, d});
  int64_t col = 0;
  for (const Tensor& p : parts) {
    for (int64_t i = 0; i < n; ++i)
      std::copy_n(p.data->data() + i * p.cols(), p.cols(),
                  out.data->data() + i * d + col);
    col += p.cols();
  }
  std::vector<const Tensor*> ins;
  for (const Tensor& p : parts) ins.push_back(&p);
  if (prep_grads(out, ins)) {
    Tensor po = out;
    std::vector<Tensor> ps = parts;
    out.node->backward = [ps, po, n, d]() mutable {
      int64_t col = 0;
      for (Tensor& p : ps) {
        const int64_t pc = p.cols();
        if (p.requires_grad) {
          p.ensure_grad();
          for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < pc; ++j)
              (*p.grad)[i * pc + j] += (*po.grad)[i * d + col + j];
        }
        col += pc;
      }
    };
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  real s = 0;
  for (real v : *x.data) s += v;
  Tensor out = Tensor::scalar(s);
  if (prep_grads(out, {&x})) {
    Tensor px = x, po = out;
    out.node->backward = [px, po]() mutable {
      px.ensure_grad();
      const real g = (*po.grad)[0];
      for (std::size_t i = 0; i < px.numel(); ++i) (*px.grad)[i] += g;
    };
  }
  return out;
}

Tape build_tape(const Tensor& t) {
  Tape tape;
  if (!t.node) return tape;
  std::unordered_set<Node*> seen;
  // iterative post-order DFS
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(t.node, 0);
  seen.insert(t.node.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (parent && seen.insert(parent.get()).second)
        stack.emplace_back(parent, 0);
    } else {
      tape.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void backward(Tensor& loss) {
  if (loss.numel() != 1)
    throw shape_error("backward: loss must be scalar, got " + shape_str(loss.shape));
  Tape tape = build_tape(loss);
  loss.ensure_grad();
  (*loss.grad)[0] = real(1);
  for (auto it = tape.rbegin(); it != tape.rend(); ++it)
    if ((*it)->backward) (*it)->backward();
  // consume the tape
  for (auto& node : tape) {
    node->backward = nullptr;
    node->parents.clear();
  }
  loss.node.reset();
}

}  // namespace vp
