#pragma once

#include <cstdint>

#include "rp/dataset.hpp"

namespace rp {

/// k-core of the user-item bipartite rating graph: mask-out users and items with fewer than k
/// ratings, repeatedly, until every survivor has at least k. Survivors keep their relative order.
Dataset kcore(const Dataset& dataset, int k);

struct DensifyResult {
  int threshold_k = 0;
  Dataset dataset;
  DatasetStats stats_before;
  DatasetStats stats_after;
  DensityConvention convention = DensityConvention::kFull;
};

/// Smallest k >= 1 whose k-core reaches the target density. Throws DataError if the core
/// empties first.
DensifyResult densify_to(const Dataset& dataset, double target_density,
                         DensityConvention convention = DensityConvention::kFull);

}  // namespace rp
