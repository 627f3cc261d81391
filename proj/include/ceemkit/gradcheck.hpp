#pragma once

#include <cstdint>

#include "ceemkit/graph.hpp"
#include "ceemkit/tensor.hpp"

namespace ceemkit {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Central finite differences of the CCE loss against the analytic parameter
// gradients, over `samples` randomly chosen parameter coordinates.
GradCheckResult gradcheck_graph(ModelGraph &g, const Tensor &batch,
                                const Tensor &onehot, double eps,
                                std::size_t samples, std::uint64_t seed);

} // namespace ceemkit
