#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "kdst/numkit/tensor.hpp"

namespace kdst::numkit {

// Softmax of scores grouped by an index vector: out[e] =
// exp(s[e]) / sum_{e': group[e']==group[e]} exp(s[e']). The per-group max is
// treated as a constant shift, the rest is differentiable composition.
template <class S>
TensorT<S> segment_softmax(const TensorT<S>& scores, const std::vector<std::int32_t>& group,
                           std::size_t n_groups) {
  if (group.size() != scores.numel()) throw ShapeError("segment_softmax: group size != scores");
  std::vector<S> gmax(n_groups, std::numeric_limits<S>::lowest());
  for (std::size_t e = 0; e < group.size(); ++e)
    gmax[static_cast<std::size_t>(group[e])] =
        std::max(gmax[static_cast<std::size_t>(group[e])], scores.at(e));
  std::vector<S> shift(group.size());
  for (std::size_t e = 0; e < group.size(); ++e) shift[e] = gmax[static_cast<std::size_t>(group[e])];
  auto z = exp_(sub(scores, TensorT<S>::from_data(scores.shape(), std::move(shift))));
  auto denom = scatter_add_rows(z, group, n_groups);
  auto denom_per_entry = gather_rows(denom, group);
  return div(z, denom_per_entry);
}

}  // namespace kdst::numkit
