#include "dermfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "dermfuse/rng.hpp"

namespace dermfuse {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  for (const LeafCheck& l : leaves) {
    os << l.name << ": max_rel_err=" << l.max_rel_err << " (checked "
       << l.checked << " elems)\n";
  }
  os << "overall max_rel_err=" << max_rel_err << "\n";
  return os.str();
}

GradCheckReport grad_check(const TensorProgram& f, std::vector<NamedLeaf> leaves,
                           const GradCheckOptions& opts) {
  if (!(opts.step > 0.0) || opts.step > 1e-2) {
    throw ConfigError("grad_check: step must be in (0, 1e-2]");
  }
  if (leaves.empty()) throw ConfigError("grad_check: no leaves");

  for (NamedLeaf& leaf : leaves) {
    leaf.tensor.set_requires_grad(true);
    leaf.tensor.zero_grad();
  }

  const double base1 = f().value();
  const double base2 = f().value();
  if (std::memcmp(&base1, &base2, sizeof(double)) != 0) {
    throw std::runtime_error(
        "grad_check: program is non-deterministic (two forward passes "
        "disagree)");
  }

  // Reverse-mode pass.
  std::vector<std::vector<double>> ad_grads;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
    for (NamedLeaf& leaf : leaves) {
      if (leaf.tensor.has_grad()) {
        ad_grads.push_back(leaf.tensor.grad_buf());
      } else {
        ad_grads.emplace_back(static_cast<size_t>(leaf.tensor.numel()), 0.0);
      }
      leaf.tensor.zero_grad();
    }
  }

  GradCheckReport report;
  Rng rng(opts.sample_seed);
  const double h = opts.step;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor& t = leaves[li].tensor;
    const int64_t n = t.numel();

    std::vector<int64_t> coords;
    if (opts.max_elems_per_leaf <= 0 || n <= opts.max_elems_per_leaf) {
      coords.resize(static_cast<size_t>(n));
      std::iota(coords.begin(), coords.end(), 0);
    } else {
      coords.resize(static_cast<size_t>(n));
      std::iota(coords.begin(), coords.end(), 0);
      rng.shuffle(coords);
      coords.resize(static_cast<size_t>(opts.max_elems_per_leaf));
      std::sort(coords.begin(), coords.end());
    }

    LeafCheck check;
    check.name = leaves[li].name;
    check.checked = static_cast<int64_t>(coords.size());
    for (int64_t c : coords) {
      auto& data = t.data();
      const double saved = data[static_cast<size_t>(c)];
      data[static_cast<size_t>(c)] = saved + h;
      const double fp = f().value();
      data[static_cast<size_t>(c)] = saved - h;
      const double fm = f().value();
      data[static_cast<size_t>(c)] = saved;

      const double fd = (fp - fm) / (2.0 * h);
      const double ad = ad_grads[li][static_cast<size_t>(c)];
      const bool both_zero =
          std::abs(ad) <= opts.zero_tol && std::abs(fd) <= opts.zero_tol;
      const double rel =
          both_zero ? 0.0
                    : std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd),
                                                    opts.rel_floor});
      if (rel > check.max_rel_err) {
        check.max_rel_err = rel;
        check.worst_index = c;
        check.autodiff = ad;
        check.finite_diff = fd;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, check.max_rel_err);
    report.leaves.push_back(std::move(check));
  }
  return report;
}

}  // namespace dermfuse
