#include "pstmle/folds.hpp"

#include <array>

#include "pstmle/common.hpp"

namespace pstmle {

std::vector<int> FoldPlan::training_indices(int v) const {
  std::vector<int> out;
  out.reserve(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (V == 1 || assignment[i] != v) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::vector<int> FoldPlan::validation_indices(int v) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == v) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

FoldPlan FoldPlan::stratified(const Dataset& d, int V, std::uint64_t seed) {
  const int n = d.size();
  if (V < 1) {
    throw std::invalid_argument("FoldPlan: V must be positive");
  }
  if (V > n) {
    throw std::invalid_argument("FoldPlan: more folds than subjects");
  }
  FoldPlan plan;
  plan.V = V;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  if (V == 1) {
    return plan;
  }

  // Shuffle within each (arm, outcome) cell, then deal the concatenated
  // cells round-robin with a running cursor.  Keeping one cursor across
  // cells bounds the overall fold-size spread by one while each cell is
  // still spread evenly over folds.
  std::array<std::vector<int>, 4> cells;
  for (int i = 0; i < n; ++i) {
    const Observation& o = d.observations[static_cast<std::size_t>(i)];
    cells[static_cast<std::size_t>(2 * o.a + o.y)].push_back(i);
  }
  Rng rng(seed);
  int cursor = 0;
  for (auto& cell : cells) {
    rng.shuffle(cell);
    for (int idx : cell) {
      plan.assignment[static_cast<std::size_t>(idx)] = cursor % V;
      ++cursor;
    }
  }
  return plan;
}

FoldPlan FoldPlan::degenerate(int n) {
  FoldPlan plan;
  plan.V = 1;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  return plan;
}

}  // namespace pstmle
