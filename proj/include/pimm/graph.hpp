#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pimm/array.hpp"

namespace pimm {

/// Primitive tags. Everything the models compute is built from these.
enum class Op {
  kInput,
  kMatmul,
  kAdd,
  kMul,
  kConcat,
  kSliceCols,
  kRelu,
  kSigmoid,
  kSoftmax,
  kScale,
  kRowSum,
  kGatherRows,
  kStopGradient,
  kBce,
  kMean,
};

const char* op_name(Op op);

using NodeId = std::uint32_t;

/// One entry of the tape: forward value plus the reverse-accumulated
/// gradient (zero until backward runs, always the same shape as value).
struct GraphNode {
  Op op = Op::kInput;
  Array value;
  Array grad;
  std::vector<NodeId> inputs;
  // Op-specific attributes.
  double factor = 0.0;                 // kScale
  std::size_t col_begin = 0;           // kSliceCols
  std::size_t col_count = 0;           // kSliceCols
  std::vector<std::uint32_t> row_ids;  // kGatherRows
};

/// Reverse-mode autodiff tape over dense Arrays.
///
/// Nodes are appended in evaluation order, so creation order is a valid
/// topological order and backward() is a single reverse sweep. One Graph
/// instance is single-threaded; independent graphs share nothing.
///
/// Broadcasting is deliberately narrow: add accepts equal shapes, a 1x1
/// scalar on either side, or a 1xN bias row against MxN; mul accepts equal
/// shapes, a 1x1 scalar, or an Mx1 column against MxN (the per-sample
/// weighting case). Anything else is a ShapeError naming the op and shapes.
class Graph {
 public:
  /// Registers a leaf carrying `value`. Leaves receive gradients like any
  /// other node; parameters enter the graph this way.
  NodeId input(Array value);

  /// [m x k] @ [k x n] -> [m x n].
  NodeId matmul(NodeId a, NodeId b);

  NodeId add(NodeId a, NodeId b);

  /// Elementwise product (with scalar/column broadcast, see class docs).
  NodeId mul(NodeId a, NodeId b);

  /// Column-wise concatenation; all parts must share the row count.
  NodeId concat(const std::vector<NodeId>& parts);

  /// Columns [begin, begin+count) as a new node.
  NodeId slice_cols(NodeId a, std::size_t begin, std::size_t count);

  NodeId relu(NodeId a);

  NodeId sigmoid(NodeId a);

  /// Row-wise softmax; outputs are positive and each row sums to 1.
  NodeId softmax(NodeId a);

  /// Multiplication by a compile-time-known scalar constant.
  NodeId scale(NodeId a, double factor);

  /// [m x n] -> [m x 1], sum over each row.
  NodeId row_sum(NodeId a);

  /// Row lookup: table [v x d] gathered by ids -> [len(ids) x d].
  /// Backward scatter-adds into the table rows, so embedding tables train.
  /// Every id must be < v; out-of-vocabulary mapping happens upstream.
  NodeId gather_rows(NodeId table, const std::vector<std::uint32_t>& ids);

  /// Identity forward, zero backward: downstream losses cannot reach
  /// anything upstream of this node.
  NodeId stop_gradient(NodeId a);

  /// Mean binary cross-entropy of predictions against 0/1 labels.
  /// Predictions are clamped to [kBceEpsilon, 1 - kBceEpsilon] before the
  /// logs; labels are constants and receive no gradient.
  NodeId bce(NodeId prediction, const Array& labels);

  /// Scalar mean over all elements.
  NodeId mean(NodeId a);

  /// Reverse accumulation from a scalar-shaped loss. All gradients are
  /// reset first, so repeated calls are independent; nodes the loss cannot
  /// reach keep zero grad.
  void backward(NodeId loss);

  const Array& value(NodeId id) const { return nodes_[id].value; }
  const Array& grad(NodeId id) const { return nodes_[id].grad; }
  Op op(NodeId id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Drops all nodes; ids from before are invalid afterwards.
  void clear() { nodes_.clear(); }

  static constexpr double kBceEpsilon = 1e-7;

 private:
  NodeId push(GraphNode node);
  const GraphNode& at(NodeId id) const;

  std::vector<GraphNode> nodes_;
};

}  // namespace pimm
