#include "match/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "match/errors.hpp"

namespace match::ad {

std::string shape_string(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + ", " + std::to_string(t.cols()) + ")";
}

Parameter::Parameter(std::string name_, Tensor value_, bool trainable_)
    : name(std::move(name_)), value(std::move(value_)), trainable(trainable_) {
  zero_grad();
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw Error("use of an unbound Var");
  return tape_->value(index_);
}

double Var::scalar() const {
  const Tensor& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("expected a scalar, got " + shape_string(v));
  return v(0, 0);
}

const Tensor& Tape::value(std::size_t index) const {
  const Node& n = nodes_.at(index);
  return n.external != nullptr ? *n.external : n.value;
}

Var Tape::constant(Tensor value) {
  if (!value.allFinite()) throw Error("non-finite constant recorded on tape");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Parameter& parameter) {
  if (auto it = leaves_.find(&parameter); it != leaves_.end()) return Var(this, it->second);
  if (parameter.grad.rows() != parameter.value.rows() ||
      parameter.grad.cols() != parameter.value.cols()) {
    parameter.zero_grad();
  }
  Node n;
  n.external = &parameter.value;
  n.external_grad = &parameter.grad;
  n.needs_grad = parameter.trainable;
  nodes_.push_back(std::move(n));
  leaves_.emplace(&parameter, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.allFinite()) throw Error("non-finite value recorded on tape");
  Node n;
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape() != this) throw Error("operands belong to different tapes");
    n.needs_grad = n.needs_grad || nodes_[in.index()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t index) {
  Node& n = nodes_[index];
  Tensor& g = n.external_grad != nullptr ? *n.external_grad : n.grad;
  if (g.size() == 0) {
    const Tensor& v = value(index);
    g.setZero(v.rows(), v.cols());
  }
  return g;
}

void Tape::accumulate(std::size_t index, const Tensor& delta) {
  Node& n = nodes_[index];
  if (!n.needs_grad) return;
  Tensor& g = n.external_grad != nullptr ? *n.external_grad : n.grad;
  if (g.size() == 0) {
    g = delta;
  } else {
    g += delta;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw Error("loss belongs to a different tape");
  const Tensor& v = value(loss.index());
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_string(v));
  }
  if (!nodes_[loss.index()].needs_grad) return;
  accumulate(loss.index(), Tensor::Ones(1, 1));
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw Error("use of an unbound Var");
  return *a.tape();
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a.value(), b.value());
  const auto ia = a.index(), ib = b.index();
  return tape_of(a).record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a.value(), b.value());
  const auto ia = a.index(), ib = b.index();
  return tape_of(a).record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a.value(), b.value());
  const auto ia = a.index(), ib = b.index();
  return tape_of(a).record(a.value().cwiseProduct(b.value()), {a, b},
                           [ia, ib](Tape& t, const Tensor& g) {
                             if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                             if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                           });
}

Var add_row(const Var& a, const Var& row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: shape mismatch " + shape_string(av) + " vs " + shape_string(rv));
  }
  Tensor out = av;
  out.rowwise() += rv.row(0);
  const auto ia = a.index(), ir = row.index();
  return tape_of(a).record(std::move(out), {a, row}, [ia, ir](Tape& t, const Tensor& g) {
    t.accumulate(ia, g);
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var affine(const Var& a, double scale, double shift) {
  const auto ia = a.index();
  Tensor out = (a.value().array() * scale + shift).matrix();
  return tape_of(a).record(std::move(out), {a}, [ia, scale](Tape& t, const Tensor& g) {
    t.accumulate(ia, g * scale);
  });
}

Var sigmoid(const Var& a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    y.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  const auto ia = a.index();
  auto& tape = tape_of(a);
  const std::size_t self = tape.size();
  return tape.record(std::move(y), {a}, [ia, self](Tape& t, const Tensor& g) {
    const Tensor& out = t.value(self);
    t.accumulate(ia, (g.array() * out.array() * (1.0 - out.array())).matrix());
  });
}

Var relu(const Var& a) {
  const auto ia = a.index();
  return tape_of(a).record(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    t.accumulate(ia, (x.array() > 0.0).select(g, 0.0));
  });
}

Var log(const Var& a) {
  const auto ia = a.index();
  return tape_of(a).record(a.value().array().log().matrix(), {a}, [ia](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.cwiseQuotient(t.value(ia)));
  });
}

Var square(const Var& a) {
  const auto ia = a.index();
  return tape_of(a).record(a.value().array().square().matrix(), {a},
                           [ia](Tape& t, const Tensor& g) {
                             t.accumulate(ia, 2.0 * g.cwiseProduct(t.value(ia)));
                           });
}

Var clamp(const Var& a, double lo, double hi) {
  const auto ia = a.index();
  return tape_of(a).record(a.value().cwiseMax(lo).cwiseMin(hi), {a},
                           [ia, lo, hi](Tape& t, const Tensor& g) {
                             const Tensor& x = t.value(ia);
                             t.accumulate(ia, (x.array() >= lo && x.array() <= hi).select(g, 0.0));
                           });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(av) + " x " + shape_string(bv));
  }
  const auto ia = a.index(), ib = b.index();
  Tensor out = av * bv;
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt: shape mismatch " + shape_string(av) + " x " +
                     shape_string(bv) + "^T");
  }
  const auto ia = a.index(), ib = b.index();
  Tensor out = av * bv.transpose();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib));
    if (t.needs_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_string(parts.front().value()) +
                       " vs " + shape_string(p.value()));
    }
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.index(), p.cols());
    offset += p.cols();
  }
  return tape_of(parts.front()).record(std::move(out), parts, [layout](Tape& t, const Tensor& g) {
    Eigen::Index off = 0;
    for (const auto& [idx, width] : layout) {
      if (t.needs_grad(idx)) t.accumulate(idx, g.middleCols(off, width));
      off += width;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column mismatch " + shape_string(parts.front().value()) +
                       " vs " + shape_string(p.value()));
    }
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.index(), p.rows());
    offset += p.rows();
  }
  return tape_of(parts.front()).record(std::move(out), parts, [layout](Tape& t, const Tensor& g) {
    Eigen::Index off = 0;
    for (const auto& [idx, height] : layout) {
      if (t.needs_grad(idx)) t.accumulate(idx, g.middleRows(off, height));
      off += height;
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  const Tensor& av = a.value();
  if (start < 0 || count < 0 || start + count > av.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of range for " + shape_string(av));
  }
  const auto ia = a.index();
  return tape_of(a).record(av.middleRows(start, count), {a},
                           [ia, start, count](Tape& t, const Tensor& g) {
                             t.grad_buffer(ia).middleRows(start, count) += g;
                           });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  const Tensor& av = a.value();
  if (start < 0 || count < 0 || start + count > av.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of range for " + shape_string(av));
  }
  const auto ia = a.index();
  return tape_of(a).record(av.middleCols(start, count), {a},
                           [ia, start, count](Tape& t, const Tensor& g) {
                             t.grad_buffer(ia).middleCols(start, count) += g;
                           });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  Tensor out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(av.rows())) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       shape_string(av));
    }
    out.row(static_cast<Eigen::Index>(i)) = av.row(static_cast<Eigen::Index>(rows[i]));
  }
  const auto ia = a.index();
  std::vector<std::size_t> ids(rows.begin(), rows.end());
  return tape_of(a).record(std::move(out), {a}, [ia, ids](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      buf.row(static_cast<Eigen::Index>(ids[i])) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var gather_cols(const Var& a, std::span<const std::size_t> cols) {
  const Tensor& av = a.value();
  Tensor out(av.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= static_cast<std::size_t>(av.cols())) {
      throw ShapeError("gather_cols: column " + std::to_string(cols[j]) + " out of range for " +
                       shape_string(av));
    }
    out.col(static_cast<Eigen::Index>(j)) = av.col(static_cast<Eigen::Index>(cols[j]));
  }
  const auto ia = a.index();
  std::vector<std::size_t> ids(cols.begin(), cols.end());
  return tape_of(a).record(std::move(out), {a}, [ia, ids](Tape& t, const Tensor& g) {
    Tensor& buf = t.grad_buffer(ia);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      buf.col(static_cast<Eigen::Index>(ids[j])) += g.col(static_cast<Eigen::Index>(j));
    }
  });
}

Var flatten(const Var& a) {
  const Tensor& av = a.value();
  const Eigen::Index rows = av.rows(), cols = av.cols();
  Tensor out = Eigen::Map<const Tensor>(av.data(), 1, av.size());
  const auto ia = a.index();
  return tape_of(a).record(std::move(out), {a}, [ia, rows, cols](Tape& t, const Tensor& g) {
    t.accumulate(ia, Eigen::Map<const Tensor>(g.data(), rows, cols));
  });
}

Var softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    y.row(r) = (x.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  const auto ia = a.index();
  auto& tape = tape_of(a);
  const std::size_t self = tape.size();
  return tape.record(std::move(y), {a}, [ia, self](Tape& t, const Tensor& g) {
    const Tensor& out = t.value(self);
    Tensor dx = out.cwiseProduct(g);
    const Eigen::VectorXd row_dot = dx.rowwise().sum();
    dx -= out.cwiseProduct(row_dot.replicate(1, out.cols()));
    t.accumulate(ia, dx);
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const Eigen::Index n = xv.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("layer_norm: gain/bias " + shape_string(gain.value()) + "/" +
                     shape_string(bias.value()) + " do not match input " + shape_string(xv));
  }
  Tensor xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu).matrix() * inv_std(r);
  }
  Tensor out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  const auto ix = x.index(), ig = gain.index(), ib = bias.index();
  return tape_of(x).record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        if (t.needs_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
        if (t.needs_grad(ix)) {
          const Tensor dxhat = g.array().rowwise() * t.value(ig).row(0).array();
          const auto cols = static_cast<double>(dxhat.cols());
          Tensor dx(dxhat.rows(), dxhat.cols());
          for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            const double m1 = dxhat.row(r).sum() / cols;
            const double m2 = dxhat.row(r).dot(xhat.row(r)) / cols;
            dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
          }
          t.accumulate(ix, dx);
        }
      });
}

Var dropout(const Var& a, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return a;
  const Tensor& x = a.value();
  Tensor mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
  }
  Tensor out = x.cwiseProduct(mask);
  const auto ia = a.index();
  return tape_of(a).record(std::move(out), {a}, [ia, mask = std::move(mask)](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.cwiseProduct(mask));
  });
}

Var sum(const Var& a) {
  const auto ia = a.index();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).record(std::move(out), {a}, [ia, rows, cols](Tape& t, const Tensor& g) {
    t.accumulate(ia, Tensor::Constant(rows, cols, g(0, 0)));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return affine(sum(a), 1.0 / n);
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult grad_check(const Objective& f, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw ArgumentError("grad_check step must be positive");
  for (auto* p : params) p->zero_grad();
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var loss = f(tape);
    if (!std::isfinite(loss.scalar())) throw Error("grad_check: objective is not finite");
    tape.backward(loss);
    for (auto* p : params) analytic.push_back(p->grad);
  }

  auto evaluate = [&]() {
    Tape tape;
    const double v = f(tape).scalar();
    if (!std::isfinite(v)) throw Error("grad_check: objective is not finite");
    return v;
  };

  GradCheckResult result;
  Rng rng(options.seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (!p.trainable) continue;
    const auto size = static_cast<std::size_t>(p.value.size());
    std::vector<std::size_t> coords;
    if (options.max_coordinates_per_parameter == 0 || options.max_coordinates_per_parameter >= size) {
      coords.resize(size);
      for (std::size_t i = 0; i < size; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < options.max_coordinates_per_parameter; ++i) {
        coords.push_back(rng.uniform_index(size));
      }
    }
    for (std::size_t i : coords) {
      double& x = p.value.data()[i];
      const double original = x;
      x = original + options.step;
      const double up = evaluate();
      x = original - options.step;
      const double down = evaluate();
      x = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.magnitude_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates_checked;
      if (rel > result.max_relative_error || result.worst_parameter.empty()) {
        if (rel >= result.max_relative_error) {
          result.max_relative_error = rel;
          result.worst_parameter = p.name;
          result.worst_index = i;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace match::ad
