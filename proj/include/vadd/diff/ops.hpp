#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vadd/diff/graph.hpp"

namespace vadd::diff {

/// Logit offset applied to an excluded class before the softmax. Large
/// enough that exp underflows to exactly 0, small enough to stay finite.
inline constexpr double kExcludedLogit = -1e30;

/// x[B x m] * W[m x n] + b[n].
NodeId linear(Graph& g, NodeId x, NodeId W, NodeId b);
NodeId elu(Graph& g, NodeId x);
NodeId exp(Graph& g, NodeId x);
NodeId square(Graph& g, NodeId x);
/// Clamp with zero gradient outside [lo, hi].
NodeId clamp(Graph& g, NodeId x, double lo, double hi);

NodeId add(Graph& g, NodeId a, NodeId b);
NodeId sub(Graph& g, NodeId a, NodeId b);
NodeId mul(Graph& g, NodeId a, NodeId b);
NodeId scale(Graph& g, NodeId x, double c);
NodeId add_scalar(Graph& g, NodeId x, double c);
/// Elementwise product with a non-differentiable tensor of the same shape.
NodeId mul_const(Graph& g, NodeId x, const Tensor& c);

NodeId sum_all(Graph& g, NodeId x);
NodeId mean_all(Graph& g, NodeId x);
/// [R x C] -> [R].
NodeId row_sum(Graph& g, NodeId x);

NodeId reshape(Graph& g, NodeId x, std::vector<std::size_t> shape);
NodeId slice_rows(Graph& g, NodeId x, std::size_t begin, std::size_t end);
NodeId slice_cols(Graph& g, NodeId x, std::size_t begin, std::size_t end);
NodeId concat_rows(Graph& g, NodeId a, NodeId b);
/// Row r of the output is row `index[r]` of x.
NodeId gather_rows(Graph& g, NodeId x, std::vector<std::size_t> index);

/// out[b] = sum_j table[indices[b * per_row + j]]. Output is [B x H].
NodeId embedding_bag(Graph& g, NodeId table, std::vector<std::size_t> indices, std::size_t per_row);

/// Row-wise log-softmax over [N x C]. When `excluded` is given that class
/// gets kExcludedLogit added first, so its probability is exactly 0.
NodeId log_softmax_rows(Graph& g, NodeId logits, std::optional<std::size_t> excluded = std::nullopt);

/// out[r] = x[r, index[r]], or 0 where index[r] is negative. Output is [R].
NodeId pick(Graph& g, NodeId x, std::vector<long> index);

}  // namespace vadd::diff
