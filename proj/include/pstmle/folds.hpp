#pragma once

#include <cstdint>
#include <vector>

#include "pstmle/data.hpp"

namespace pstmle {

// Cross-validation folds.  Assignment is a partition with fold sizes
// differing by at most one, reproducible from the seed, and stratified by
// (arm, outcome) so each training set sees both arms and both outcomes.
// V=1 is the degenerate plan whose single training set is the full sample.
struct FoldPlan {
  int V = 10;
  std::vector<int> assignment;  // subject index -> fold id in [0, V)

  int fold_of(int i) const { return assignment[static_cast<std::size_t>(i)]; }

  std::vector<int> training_indices(int v) const;
  std::vector<int> validation_indices(int v) const;

  static FoldPlan stratified(const Dataset& d, int V, std::uint64_t seed);
  static FoldPlan degenerate(int n);
};

}  // namespace pstmle
