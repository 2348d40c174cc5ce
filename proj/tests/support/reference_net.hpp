#pragma once

#include "simrec/net.hpp"

#include <vector>

namespace simrec::testsupport {

/// Straight-line scalar re-evaluation of the network forward pass (plain
/// loops over std::vector, no Eigen). Dropout off. Returns hidden states as
/// hidden[t][j]. Independent of the production implementation path.
std::vector<std::vector<double>> reference_forward(const ModelParams<double>& params,
                                                   const std::vector<ItemIndex>& idx);

}  // namespace simrec::testsupport
