#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "match/rng.hpp"

namespace match::ad {

/// Row-major dense matrix of doubles. Scalars are 1x1, row vectors 1xn.
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Tensor& t);

/// A named trainable (or frozen) tensor with a gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value, bool trainable = true);

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Append-only record of operations. Nodes are stored in creation order,
/// which is a topological order, so backward is a single reverse sweep that
/// visits each node once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  /// Leaf bound to a parameter: reads its value in place and accumulates
  /// into its `grad` during backward. Repeated calls return the same node.
  Var leaf(Parameter& parameter);

  /// Records a node. `inputs` decide whether the node needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(std::size_t index) const;
  bool needs_grad(std::size_t index) const { return nodes_[index].needs_grad; }

  /// grad[index] += delta (allocating on first use). Used by backward
  /// closures.
  void accumulate(std::size_t index, const Tensor& delta);
  /// Mutable gradient buffer, zero-initialized on first access.
  Tensor& grad_buffer(std::size_t index);

  /// Reverse sweep from a 1x1 loss. Throws ShapeError for non-scalar loss.
  void backward(const Var& loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;  // parameter leaves
    Tensor grad;
    Tensor* external_grad = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> leaves_;
};

// --- Elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// a (m x n) + row (1 x n) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// scale * a + shift
Var affine(const Var& a, double scale, double shift = 0.0);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
/// Values clipped to [lo, hi]; gradient passes only where unclipped.
Var clamp(const Var& a, double lo, double hi);

// --- Linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);

// --- Structure -------------------------------------------------------------
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
Var gather_cols(const Var& a, std::span<const std::size_t> cols);
/// Row-major flatten to 1 x (rows*cols).
Var flatten(const Var& a);

// --- Normalization ---------------------------------------------------------
Var softmax_rows(const Var& a);
/// Per-row (x - mean) / sqrt(var + eps) * gain + bias; gain, bias are 1 x n.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
/// Inverted dropout; identity when `training` is false or rate is 0.
Var dropout(const Var& a, double rate, Rng& rng, bool training);

// --- Reductions ------------------------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);

// --- Verification ----------------------------------------------------------
struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded sample per parameter.
  std::size_t max_coordinates_per_parameter = 0;
  std::uint64_t seed = 0;
  /// Denominator floor: relative error is |a - n| / max(|a|, |n|, floor).
  double magnitude_floor = 1e-6;
};

/// Builds the scalar objective on the given tape. Must be deterministic.
using Objective = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients with central differences for every
/// trainable parameter in `params`; frozen parameters are skipped.
GradCheckResult grad_check(const Objective& f, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace match::ad
