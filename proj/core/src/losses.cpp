#include "dermfuse/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "dermfuse/ops.hpp"

namespace dermfuse {

namespace {

std::vector<uint8_t> positive_mask(const Tensor& targets) {
  const auto& y = targets.data();
  std::vector<uint8_t> mask(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || y[i] < 0.0 || y[i] > 1.0) {
      throw DataError("loss targets must lie in [0, 1]");
    }
    mask[i] = y[i] > 0.0 ? 1 : 0;
  }
  return mask;
}

void require_matching(const Tensor& logits, const Tensor& targets,
                      const char* op) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError(std::string(op) + ": logits " + shape_str(logits.shape()) +
                     " vs targets " + shape_str(targets.shape()));
  }
}

}  // namespace

Tensor twl_sample_term(const Tensor& logits_row, const Tensor& targets_row,
                       double temperature) {
  require_matching(logits_row, targets_row, "twl_sample_term");
  return two_way_margin(logits_row, positive_mask(targets_row), temperature);
}

Tensor twl_class_term(const Tensor& logits_col, const Tensor& targets_col,
                      double temperature) {
  require_matching(logits_col, targets_col, "twl_class_term");
  return two_way_margin(logits_col, positive_mask(targets_col), temperature);
}

Tensor two_way_loss(const Tensor& logits, const Tensor& targets,
                    double temperature) {
  require_matching(logits, targets, "two_way_loss");
  if (logits.rank() != 2) {
    throw ShapeError("two_way_loss: expected (N, K) batch, got " +
                     shape_str(logits.shape()));
  }
  const int64_t n = logits.extent(0);
  const int64_t k = logits.extent(1);

  std::vector<Tensor> sample_terms;
  sample_terms.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    sample_terms.push_back(twl_sample_term(narrow(logits, 0, i, 1),
                                           narrow(targets, 0, i, 1),
                                           temperature));
  }
  std::vector<Tensor> class_terms;
  class_terms.reserve(static_cast<size_t>(k));
  for (int64_t c = 0; c < k; ++c) {
    class_terms.push_back(twl_class_term(narrow(logits, 1, c, 1),
                                         narrow(targets, 1, c, 1),
                                         temperature));
  }
  return add(scale(sum_list(sample_terms), 1.0 / static_cast<double>(n)),
             scale(sum_list(class_terms), 1.0 / static_cast<double>(k)));
}

Tensor bce_loss(const Tensor& logits, const Tensor& targets) {
  require_matching(logits, targets, "bce_loss");
  (void)positive_mask(targets);  // validates the target range
  detail::check_finite(logits, "bce_loss(input)");
  // Detached copy: gradients flow to the logits only.
  Tensor y = Tensor::from_data(targets.shape(), targets.data());
  return mean_all(sub(softplus(logits), mul(logits, y)));
}

}  // namespace dermfuse
