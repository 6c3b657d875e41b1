#pragma once

#include <string>
#include <vector>

namespace dermfuse {

struct BlockCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Finite-difference gradient checks for every differentiable block: window
// attention, patch merge, both cross-attention directions, the fusion block,
// decision fusion, the label-correlation attention, both losses, and the
// full toy model end-to-end on a two-sample batch.
std::vector<BlockCheckResult> run_block_checks();

std::string format_block_checks(const std::vector<BlockCheckResult>& results);
bool all_blocks_pass(const std::vector<BlockCheckResult>& results);

}  // namespace dermfuse
