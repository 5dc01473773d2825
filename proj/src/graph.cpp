#include "pimm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "pimm/error.hpp"

namespace pimm {

namespace {

[[noreturn]] void shape_fail(const char* op, const Array& a, const Array& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_string(a) + " and " + shape_string(b));
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kConcat: return "concat";
    case Op::kSliceCols: return "slice_cols";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftmax: return "softmax";
    case Op::kScale: return "scale";
    case Op::kRowSum: return "row_sum";
    case Op::kGatherRows: return "gather_rows";
    case Op::kStopGradient: return "stop_gradient";
    case Op::kBce: return "bce";
    case Op::kMean: return "mean";
  }
  return "?";
}

NodeId Graph::push(GraphNode node) {
  node.grad = Array(node.value.rows(), node.value.cols());
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const GraphNode& Graph::at(NodeId id) const {
  if (id >= nodes_.size()) {
    throw ContractError("node id " + std::to_string(id) + " out of range");
  }
  return nodes_[id];
}

NodeId Graph::input(Array value) {
  GraphNode n;
  n.op = Op::kInput;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Array& x = at(a).value;
  const Array& y = at(b).value;
  if (x.cols() != y.rows()) {
    shape_fail("matmul", x, y);
  }
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Array out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xrow = x.data().data() + i * k;
    double* orow = out.data().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = xrow[p];
      if (xv == 0.0) continue;
      const double* yrow = y.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        orow[j] += xv * yrow[j];
      }
    }
  }
  out.check_finite("matmul");
  GraphNode node;
  node.op = Op::kMatmul;
  node.value = std::move(out);
  node.inputs = {a, b};
  return push(std::move(node));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Array& x = at(a).value;
  const Array& y = at(b).value;
  Array out(std::max(x.rows(), y.rows()), std::max(x.cols(), y.cols()));
  if (x.same_shape(y)) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  } else if (y.is_scalar()) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[0];
  } else if (x.is_scalar()) {
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = x[0] + y[i];
  } else if (y.rows() == 1 && y.cols() == x.cols()) {
    // Bias row against matrix.
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c)
        out.at(r, c) = x.at(r, c) + y[c];
  } else if (x.rows() == 1 && x.cols() == y.cols()) {
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c)
        out.at(r, c) = x[c] + y.at(r, c);
  } else {
    shape_fail("add", x, y);
  }
  out.check_finite("add");
  GraphNode node;
  node.op = Op::kAdd;
  node.value = std::move(out);
  node.inputs = {a, b};
  return push(std::move(node));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Array& x = at(a).value;
  const Array& y = at(b).value;
  Array out(std::max(x.rows(), y.rows()), std::max(x.cols(), y.cols()));
  if (x.same_shape(y)) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  } else if (y.is_scalar()) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[0];
  } else if (x.is_scalar()) {
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = x[0] * y[i];
  } else if (x.cols() == 1 && x.rows() == y.rows()) {
    // Per-sample column weight against matrix.
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c)
        out.at(r, c) = x[r] * y.at(r, c);
  } else if (y.cols() == 1 && y.rows() == x.rows()) {
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c)
        out.at(r, c) = x.at(r, c) * y[r];
  } else {
    shape_fail("mul", x, y);
  }
  out.check_finite("mul");
  GraphNode node;
  node.op = Op::kMul;
  node.value = std::move(out);
  node.inputs = {a, b};
  return push(std::move(node));
}

NodeId Graph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) {
    throw ContractError("concat: no inputs");
  }
  const std::size_t rows = at(parts[0]).value.rows();
  std::size_t cols = 0;
  for (NodeId p : parts) {
    const Array& v = at(p).value;
    if (v.rows() != rows) {
      shape_fail("concat", at(parts[0]).value, v);
    }
    cols += v.cols();
  }
  Array out(rows, cols);
  std::size_t offset = 0;
  for (NodeId p : parts) {
    const Array& v = at(p).value;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c)
        out.at(r, offset + c) = v.at(r, c);
    offset += v.cols();
  }
  GraphNode node;
  node.op = Op::kConcat;
  node.value = std::move(out);
  node.inputs = parts;
  return push(std::move(node));
}

NodeId Graph::slice_cols(NodeId a, std::size_t begin, std::size_t count) {
  const Array& x = at(a).value;
  if (count == 0 || begin + count > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " +
                     shape_string(x));
  }
  Array out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c)
      out.at(r, c) = x.at(r, begin + c);
  GraphNode node;
  node.op = Op::kSliceCols;
  node.value = std::move(out);
  node.inputs = {a};
  node.col_begin = begin;
  node.col_count = count;
  return push(std::move(node));
}

NodeId Graph::relu(NodeId a) {
  const Array& x = at(a).value;
  Array out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  GraphNode node;
  node.op = Op::kRelu;
  node.value = std::move(out);
  node.inputs = {a};
  return push(std::move(node));
}

NodeId Graph::sigmoid(NodeId a) {
  const Array& x = at(a).value;
  Array out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    // Branch keeps exp() argument non-positive for stability at both tails.
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
  }
  GraphNode node;
  node.op = Op::kSigmoid;
  node.value = std::move(out);
  node.inputs = {a};
  return push(std::move(node));
}

NodeId Graph::softmax(NodeId a) {
  const Array& x = at(a).value;
  Array out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = x.at(r, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, x.at(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double e = std::exp(x.at(r, c) - mx);
      out.at(r, c) = e;
      sum += e;
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) /= sum;
  }
  out.check_finite("softmax");
  GraphNode node;
  node.op = Op::kSoftmax;
  node.value = std::move(out);
  node.inputs = {a};
  return push(std::move(node));
}

NodeId Graph::scale(NodeId a, double factor) {
  if (!std::isfinite(factor)) {
    throw NumericError("scale: non-finite factor");
  }
  const Array& x = at(a).value;
  Array out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
  out.check_finite("scale");
  GraphNode node;
  node.op = Op::kScale;
  node.value = std::move(out);
  node.inputs = {a};
  node.factor = factor;
  return push(std::move(node));
}

NodeId Graph::row_sum(NodeId a) {
  const Array& x = at(a).value;
  Array out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x.at(r, c);
    out[r] = s;
  }
  out.check_finite("row_sum");
  GraphNode node;
  node.op = Op::kRowSum;
  node.value = std::move(out);
  node.inputs = {a};
  return push(std::move(node));
}

NodeId Graph::gather_rows(NodeId table, const std::vector<std::uint32_t>& ids) {
  const Array& t = at(table).value;
  if (ids.empty()) {
    throw ContractError("gather_rows: empty id list");
  }
  for (std::uint32_t id : ids) {
    if (id >= t.rows()) {
      throw ShapeError("gather_rows: id " + std::to_string(id) +
                       " out of range for table " + shape_string(t));
    }
  }
  Array out(ids.size(), t.cols());
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c)
      out.at(r, c) = t.at(ids[r], c);
  GraphNode node;
  node.op = Op::kGatherRows;
  node.value = std::move(out);
  node.inputs = {table};
  node.row_ids = ids;
  return push(std::move(node));
}

NodeId Graph::stop_gradient(NodeId a) {
  GraphNode node;
  node.op = Op::kStopGradient;
  node.value = at(a).value;
  node.inputs = {a};
  return push(std::move(node));
}

NodeId Graph::bce(NodeId prediction, const Array& labels) {
  if (!at(prediction).value.same_shape(labels)) {
    shape_fail("bce", at(prediction).value, labels);
  }
  for (double y : labels.data()) {
    if (y != 0.0 && y != 1.0) {
      throw ValueError("bce: label " + std::to_string(y) + " is not 0 or 1");
    }
  }
  // Register the label leaf before borrowing any node references: push can
  // reallocate the tape.
  const NodeId label_node = input(labels);
  const Array& p = at(prediction).value;
  const double eps = kBceEpsilon;
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], eps, 1.0 - eps);
    const double y = labels[i];
    total += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
  }
  GraphNode node;
  node.op = Op::kBce;
  node.value = Array::scalar(total / static_cast<double>(p.size()));
  node.inputs = {prediction, label_node};
  return push(std::move(node));
}

NodeId Graph::mean(NodeId a) {
  const Array& x = at(a).value;
  double total = 0.0;
  for (double v : x.data()) total += v;
  GraphNode node;
  node.op = Op::kMean;
  node.value = Array::scalar(total / static_cast<double>(x.size()));
  node.inputs = {a};
  return push(std::move(node));
}

void Graph::backward(NodeId loss) {
  const GraphNode& top = at(loss);
  if (!top.value.is_scalar()) {
    throw ContractError("backward: loss must be scalar-shaped, got " +
                        shape_string(top.value));
  }
  for (GraphNode& n : nodes_) {
    std::fill(n.grad.data().begin(), n.grad.data().end(), 0.0);
  }
  nodes_[loss].grad[0] = 1.0;

  // Creation order is topological, so one reverse sweep accumulates every
  // total derivative; nodes the loss never reached keep zero grad and are
  // skipped.
  for (std::size_t idx = loss + 1; idx-- > 0;) {
    const GraphNode& n = nodes_[idx];
    const Array& g = n.grad;
    bool all_zero = true;
    for (double v : g.data()) {
      if (v != 0.0) {
        all_zero = false;
        break;
      }
    }
    if (all_zero || n.op == Op::kInput || n.op == Op::kStopGradient) {
      continue;
    }
    switch (n.op) {
      case Op::kMatmul: {
        const Array& a = nodes_[n.inputs[0]].value;
        const Array& b = nodes_[n.inputs[1]].value;
        Array& da = nodes_[n.inputs[0]].grad;
        Array& db = nodes_[n.inputs[1]].grad;
        const std::size_t m = a.rows(), k = a.cols(), cols = b.cols();
        // dA += G * B^T
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g.data().data() + i * cols;
          double* darow = da.data().data() + i * k;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b.data().data() + p * cols;
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += grow[j] * brow[j];
            darow[p] += s;
          }
        }
        // dB += A^T * G
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = a.data().data() + i * k;
          const double* grow = g.data().data() + i * cols;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* dbrow = db.data().data() + p * cols;
            for (std::size_t j = 0; j < cols; ++j) dbrow[j] += av * grow[j];
          }
        }
        break;
      }
      case Op::kAdd: {
        for (int side = 0; side < 2; ++side) {
          GraphNode& in = nodes_[n.inputs[side]];
          Array& d = in.grad;
          const Array& v = in.value;
          if (v.same_shape(n.value)) {
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
          } else if (v.is_scalar()) {
            double s = 0.0;
            for (double gv : g.data()) s += gv;
            d[0] += s;
          } else {
            // Bias row: accumulate column sums.
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < g.cols(); ++c)
                d[c] += g.at(r, c);
          }
        }
        break;
      }
      case Op::kMul: {
        const Array& a = nodes_[n.inputs[0]].value;
        const Array& b = nodes_[n.inputs[1]].value;
        Array& da = nodes_[n.inputs[0]].grad;
        Array& db = nodes_[n.inputs[1]].grad;
        auto accumulate = [&g](Array& d, const Array& self,
                               const Array& other) {
          if (self.same_shape(g)) {
            if (other.same_shape(g)) {
              for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[i];
            } else if (other.is_scalar()) {
              for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * other[0];
            } else {
              // other is a column.
              for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c)
                  d.at(r, c) += g.at(r, c) * other[r];
            }
          } else if (self.is_scalar()) {
            double s = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * other[i];
            d[0] += s;
          } else {
            // self is a column, other matches g.
            for (std::size_t r = 0; r < g.rows(); ++r) {
              double s = 0.0;
              for (std::size_t c = 0; c < g.cols(); ++c)
                s += g.at(r, c) * other.at(r, c);
              d[r] += s;
            }
          }
        };
        accumulate(da, a, b);
        accumulate(db, b, a);
        break;
      }
      case Op::kConcat: {
        std::size_t offset = 0;
        for (NodeId part : n.inputs) {
          GraphNode& in = nodes_[part];
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < in.value.cols(); ++c)
              in.grad.at(r, c) += g.at(r, offset + c);
          offset += in.value.cols();
        }
        break;
      }
      case Op::kSliceCols: {
        Array& d = nodes_[n.inputs[0]].grad;
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < n.col_count; ++c)
            d.at(r, n.col_begin + c) += g.at(r, c);
        break;
      }
      case Op::kRelu: {
        const Array& x = nodes_[n.inputs[0]].value;
        Array& d = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] > 0.0) d[i] += g[i];
        break;
      }
      case Op::kSigmoid: {
        Array& d = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double s = n.value[i];
          d[i] += g[i] * s * (1.0 - s);
        }
        break;
      }
      case Op::kSoftmax: {
        Array& d = nodes_[n.inputs[0]].grad;
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < g.cols(); ++c)
            dot += g.at(r, c) * n.value.at(r, c);
          for (std::size_t c = 0; c < g.cols(); ++c)
            d.at(r, c) += n.value.at(r, c) * (g.at(r, c) - dot);
        }
        break;
      }
      case Op::kScale: {
        Array& d = nodes_[n.inputs[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * n.factor;
        break;
      }
      case Op::kRowSum: {
        Array& d = nodes_[n.inputs[0]].grad;
        for (std::size_t r = 0; r < d.rows(); ++r)
          for (std::size_t c = 0; c < d.cols(); ++c)
            d.at(r, c) += g[r];
        break;
      }
      case Op::kGatherRows: {
        Array& d = nodes_[n.inputs[0]].grad;
        const std::size_t cols = d.cols();
        for (std::size_t r = 0; r < n.row_ids.size(); ++r)
          for (std::size_t c = 0; c < cols; ++c)
            d.at(n.row_ids[r], c) += g.at(r, c);
        break;
      }
      case Op::kBce: {
        const Array& p = nodes_[n.inputs[0]].value;
        const Array& y = nodes_[n.inputs[1]].value;
        Array& d = nodes_[n.inputs[0]].grad;
        const double eps = kBceEpsilon;
        const double scale = g[0] / static_cast<double>(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (p[i] <= eps || p[i] >= 1.0 - eps) continue;  // clamp is flat
          d[i] += scale * (p[i] - y[i]) / (p[i] * (1.0 - p[i]));
        }
        break;
      }
      case Op::kMean: {
        Array& d = nodes_[n.inputs[0]].grad;
        const double s = g[0] / static_cast<double>(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s;
        break;
      }
      case Op::kInput:
      case Op::kStopGradient:
        break;
    }
  }
}

}  // namespace pimm
