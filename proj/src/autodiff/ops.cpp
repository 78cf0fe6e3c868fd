#include "sit/autodiff/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <unsupported/Eigen/SpecialFunctions>

namespace sit::ad {

namespace {

template <typename T>
bool any_requires_grad(std::span<const Var<T>> vars) {
  for (const auto& v : vars)
    if (v.tape->requires_grad(v)) return true;
  return false;
}

template <typename T>
Tape<T>& tape_of(Var<T> a) {
  return *a.tape;
}

[[noreturn]] void shape_mismatch(const char* op, Shape a, Shape b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, Transpose transpose) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  const auto& B = b.value();
  const bool ta = transpose == Transpose::first;
  const bool tb = transpose == Transpose::second;
  const std::size_t m = ta ? A.cols() : A.rows();
  const std::size_t k = ta ? A.rows() : A.cols();
  const std::size_t kb = tb ? B.cols() : B.rows();
  const std::size_t n = tb ? B.rows() : B.cols();
  if (k != kb) shape_mismatch("matmul", A.shape(), B.shape());

  Array<T> out(m, n);
  if (ta)
    out.mat().noalias() = A.mat().transpose() * B.mat();
  else if (tb)
    out.mat().noalias() = A.mat() * B.mat().transpose();
  else
    out.mat().noalias() = A.mat() * B.mat();

  const bool need = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(std::move(out), need, [a, b, ta, tb](Tape<T>& t, const Array<T>& g) {
    const auto& A = t.value(a);
    const auto& B = t.value(b);
    if (t.requires_grad(a)) {
      auto dA = t.grad_buffer(a).mat();
      if (ta)
        dA.noalias() += B.mat() * g.mat().transpose();  // (dC B^T)^T
      else if (tb)
        dA.noalias() += g.mat() * B.mat();
      else
        dA.noalias() += g.mat() * B.mat().transpose();
    }
    if (t.requires_grad(b)) {
      auto dB = t.grad_buffer(b).mat();
      if (ta)
        dB.noalias() += A.mat() * g.mat();
      else if (tb)
        dB.noalias() += g.mat().transpose() * A.mat();
      else
        dB.noalias() += A.mat().transpose() * g.mat();
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  const auto& B = b.value();
  const bool broadcast = B.rows() == 1 && A.rows() != 1 && B.cols() == A.cols();
  if (!broadcast && A.shape() != B.shape()) shape_mismatch("add", A.shape(), B.shape());

  Array<T> out = A;
  if (broadcast)
    out.mat().rowwise() += B.mat().row(0);
  else
    out.mat() += B.mat();

  const bool need = tape.requires_grad(a) || tape.requires_grad(b);
  return tape.push(std::move(out), need, [a, b, broadcast](Tape<T>& t, const Array<T>& g) {
    if (t.requires_grad(a)) t.grad_buffer(a).mat() += g.mat();
    if (t.requires_grad(b)) {
      if (broadcast)
        t.grad_buffer(b).mat().row(0) += g.mat().colwise().sum();
      else
        t.grad_buffer(b).mat() += g.mat();
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  auto& tape = tape_of(a);
  Array<T> out = a.value();
  out.mat() *= factor;
  return tape.push(std::move(out), tape.requires_grad(a), [a, factor](Tape<T>& t, const Array<T>& g) {
    t.grad_buffer(a).mat() += factor * g.mat();
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  Array<T> out(A.cols(), A.rows());
  out.mat() = A.mat().transpose();
  return tape.push(std::move(out), tape.requires_grad(a), [a](Tape<T>& t, const Array<T>& g) {
    t.grad_buffer(a).mat() += g.mat().transpose();
  });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  auto& tape = tape_of(parts[0]);
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) shape_mismatch("concat_rows", parts[0].shape(), p.shape());
    rows += p.value().rows();
  }
  Array<T> out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offset * cols);
    offset += v.rows();
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return tape.push(std::move(out), any_requires_grad(parts),
                   [inputs = std::move(inputs)](Tape<T>& t, const Array<T>& g) {
                     std::size_t offset = 0;
                     for (const auto& p : inputs) {
                       const auto r = t.value(p).rows();
                       if (t.requires_grad(p))
                         t.grad_buffer(p).mat() +=
                             g.mat().middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(r));
                       offset += r;
                     }
                   });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  auto& tape = tape_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) shape_mismatch("concat_cols", parts[0].shape(), p.shape());
    cols += p.value().cols();
  }
  Array<T> out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    out.mat().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(v.cols())) = v.mat();
    offset += v.cols();
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return tape.push(std::move(out), any_requires_grad(parts),
                   [inputs = std::move(inputs)](Tape<T>& t, const Array<T>& g) {
                     std::size_t offset = 0;
                     for (const auto& p : inputs) {
                       const auto c = t.value(p).cols();
                       if (t.requires_grad(p))
                         t.grad_buffer(p).mat() +=
                             g.mat().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(c));
                       offset += c;
                     }
                   });
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  if (begin + count > A.rows())
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + A.shape().str());
  Array<T> out(count, A.cols());
  std::copy(A.data() + begin * A.cols(), A.data() + (begin + count) * A.cols(), out.data());
  return tape.push(std::move(out), tape.requires_grad(a), [a, begin, count](Tape<T>& t, const Array<T>& g) {
    t.grad_buffer(a).mat().middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        g.mat();
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  if (begin + count > A.cols())
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + A.shape().str());
  Array<T> out(A.rows(), count);
  out.mat() = A.mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return tape.push(std::move(out), tape.requires_grad(a), [a, begin, count](Tape<T>& t, const Array<T>& g) {
    t.grad_buffer(a).mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        g.mat();
  });
}

template <typename T>
Var<T> gather_rows(Var<T> a, std::span<const std::uint32_t> index) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  const std::size_t cols = A.cols();
  Array<T> out(index.size(), cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= A.rows())
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " outside " + A.shape().str());
    std::copy(A.data() + index[i] * cols, A.data() + (index[i] + 1) * cols, out.data() + i * cols);
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return tape.push(std::move(out), tape.requires_grad(a),
                   [a, idx = std::move(idx)](Tape<T>& t, const Array<T>& g) {
                     auto& dA = t.grad_buffer(a);
                     const std::size_t cols = dA.cols();
                     for (std::size_t i = 0; i < idx.size(); ++i) {
                       T* dst = dA.data() + idx[i] * cols;
                       const T* src = g.data() + i * cols;
                       for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                     }
                   });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  Array<T> out(A.shape());
  {
    auto y = out.mat();
    y = (A.mat().colwise() - A.mat().rowwise().maxCoeff()).array().exp().matrix();
    y.array().colwise() /= y.rowwise().sum().array();
  }
  // The output node id is the next one pushed; backward reads y from it.
  const Var<T> self{&tape, static_cast<std::uint32_t>(tape.size())};
  return tape.push(std::move(out), tape.requires_grad(a), [a, self](Tape<T>& t, const Array<T>& g) {
    const auto y = t.value(self).mat();
    const auto gy = g.mat();
    auto dA = t.grad_buffer(a).mat();
    // dx = y * (g - <y, g>) per row
    const auto dot = (y.array() * gy.array()).rowwise().sum().eval();
    dA.array() += y.array() * (gy.array().colwise() - dot);
  });
}

template <typename T>
Var<T> layernorm_rows(Var<T> a, std::optional<Var<T>> gamma, std::optional<Var<T>> beta, double eps) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  const std::size_t rows = A.rows();
  const std::size_t cols = A.cols();
  if (gamma && (gamma->value().rows() != 1 || gamma->value().cols() != cols))
    shape_mismatch("layernorm_rows (gamma)", A.shape(), gamma->shape());
  if (beta && (beta->value().rows() != 1 || beta->value().cols() != cols))
    shape_mismatch("layernorm_rows (beta)", A.shape(), beta->shape());

  std::vector<T> mean(rows), rstd(rows);
  Array<T> out(A.shape());
  const T* g = gamma ? gamma->value().data() : nullptr;
  const T* b = beta ? beta->value().data() : nullptr;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto x = A.row(r);
    T mu = 0;
    for (T v : x) mu += v;
    mu /= static_cast<T>(cols);
    T var = 0;
    for (T v : x) var += (v - mu) * (v - mu);
    var /= static_cast<T>(cols);
    const T rs = T{1} / std::sqrt(var + static_cast<T>(eps));
    mean[r] = mu;
    rstd[r] = rs;
    auto y = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      T h = (x[c] - mu) * rs;
      if (g) h *= g[c];
      if (b) h += b[c];
      y[c] = h;
    }
  }

  bool need = tape.requires_grad(a);
  if (gamma) need = need || tape.requires_grad(*gamma);
  if (beta) need = need || tape.requires_grad(*beta);
  return tape.push(std::move(out), need,
                   [a, gamma, beta, mean = std::move(mean), rstd = std::move(rstd)](Tape<T>& t,
                                                                                   const Array<T>& gy) {
                     const auto& X = t.value(a);
                     const std::size_t rows = X.rows();
                     const std::size_t cols = X.cols();
                     const T* g = gamma ? t.value(*gamma).data() : nullptr;
                     T* dgamma = gamma && t.requires_grad(*gamma) ? t.grad_buffer(*gamma).data() : nullptr;
                     T* dbeta = beta && t.requires_grad(*beta) ? t.grad_buffer(*beta).data() : nullptr;
                     T* dx = t.requires_grad(a) ? t.grad_buffer(a).data() : nullptr;
                     std::vector<T> dxhat(cols);
                     for (std::size_t r = 0; r < rows; ++r) {
                       const T* x = X.data() + r * cols;
                       const T* go = gy.data() + r * cols;
                       T sum_d = 0, sum_dh = 0;
                       for (std::size_t c = 0; c < cols; ++c) {
                         const T xh = (x[c] - mean[r]) * rstd[r];
                         if (dbeta) dbeta[c] += go[c];
                         if (dgamma) dgamma[c] += go[c] * xh;
                         dxhat[c] = g ? go[c] * g[c] : go[c];
                         sum_d += dxhat[c];
                         sum_dh += dxhat[c] * xh;
                       }
                       if (!dx) continue;
                       const T inv_n = T{1} / static_cast<T>(cols);
                       T* out = dx + r * cols;
                       for (std::size_t c = 0; c < cols; ++c) {
                         const T xh = (x[c] - mean[r]) * rstd[r];
                         out[c] += rstd[r] * (dxhat[c] - sum_d * inv_n - xh * sum_dh * inv_n);
                       }
                     }
                   });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  auto& tape = tape_of(a);
  const auto& A = a.value();
  Array<T> out(A.shape());
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  // Eigen's erf is vectorised for float (rational approximation, a few ulp)
  const auto x = A.mat().array();
  out.mat().array() = x * T{0.5} * (T{1} + (x * inv_sqrt2).erf());
  return tape.push(std::move(out), tape.requires_grad(a), [a, inv_sqrt2](Tape<T>& t, const Array<T>& g) {
    const auto x = t.value(a).mat().array();
    const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    auto dA = t.grad_buffer(a).mat();
    dA.array() += g.mat().array() * (T{0.5} * (T{1} + (x * inv_sqrt2).erf()) +
                                     x * inv_sqrt_2pi * (T{-0.5} * x.square()).exp());
  });
}

template <typename T>
Var<T> dropout(Var<T> a, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  auto& tape = tape_of(a);
  const auto& A = a.value();
  std::vector<T> mask(A.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask) m = u(rng) < p ? T{0} : keep_scale;
  Array<T> out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * mask[i];
  return tape.push(std::move(out), tape.requires_grad(a),
                   [a, mask = std::move(mask)](Tape<T>& t, const Array<T>& g) {
                     auto& dA = t.grad_buffer(a);
                     for (std::size_t i = 0; i < mask.size(); ++i) dA[i] += g[i] * mask[i];
                   });
}

template <typename T>
Var<T> mse(Var<T> pred, const Array<T>& target, std::optional<std::span<const std::uint8_t>> row_mask) {
  auto& tape = tape_of(pred);
  const auto& P = pred.value();
  if (P.shape() != target.shape()) shape_mismatch("mse", P.shape(), target.shape());
  std::vector<std::uint8_t> rows(P.rows(), 1);
  if (row_mask) {
    if (row_mask->size() != P.rows())
      throw ShapeError("mse: mask of length " + std::to_string(row_mask->size()) + " for " + P.shape().str());
    rows.assign(row_mask->begin(), row_mask->end());
  }
  std::size_t selected = 0;
  for (auto m : rows) selected += m ? 1 : 0;
  if (selected == 0 || P.cols() == 0) throw DataError("mse: the mask selects no entries");

  const T inv_count = T{1} / static_cast<T>(selected * P.cols());
  T sum = 0;
  for (std::size_t r = 0; r < P.rows(); ++r) {
    if (!rows[r]) continue;
    for (std::size_t c = 0; c < P.cols(); ++c) {
      const T d = P(r, c) - target(r, c);
      sum += d * d;
    }
  }
  Array<T> out(1, 1, sum * inv_count);
  return tape.push(std::move(out), tape.requires_grad(pred),
                   [pred, target = target, rows = std::move(rows), inv_count](Tape<T>& t, const Array<T>& g) {
                     const auto& P = t.value(pred);
                     auto& dP = t.grad_buffer(pred);
                     const T k = T{2} * inv_count * g[0];
                     for (std::size_t r = 0; r < P.rows(); ++r) {
                       if (!rows[r]) continue;
                       for (std::size_t c = 0; c < P.cols(); ++c) dP(r, c) += k * (P(r, c) - target(r, c));
                     }
                   });
}

#define SIT_INSTANTIATE_OPS(T)                                                                          \
  template Var<T> matmul(Var<T>, Var<T>, Transpose);                                                    \
  template Var<T> add(Var<T>, Var<T>);                                                                  \
  template Var<T> scale(Var<T>, T);                                                                     \
  template Var<T> transpose(Var<T>);                                                                    \
  template Var<T> concat_rows(std::span<const Var<T>>);                                                 \
  template Var<T> concat_cols(std::span<const Var<T>>);                                                 \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                                         \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                         \
  template Var<T> gather_rows(Var<T>, std::span<const std::uint32_t>);                                  \
  template Var<T> softmax_rows(Var<T>);                                                                 \
  template Var<T> layernorm_rows(Var<T>, std::optional<Var<T>>, std::optional<Var<T>>, double);         \
  template Var<T> gelu(Var<T>);                                                                         \
  template Var<T> dropout(Var<T>, double, bool, Rng&);                                                  \
  template Var<T> mse(Var<T>, const Array<T>&, std::optional<std::span<const std::uint8_t>>);

SIT_INSTANTIATE_OPS(float)
SIT_INSTANTIATE_OPS(double)

#undef SIT_INSTANTIATE_OPS

}  // namespace sit::ad
