#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "iconpeft/tensor.hpp"

namespace iconpeft {

struct GradCheckGroup {
  std::string name;
  double max_rel_err = 0.0;
  int64_t coords_checked = 0;
  // True when every coordinate sits below the finite-difference signal
  // floor (an identically-zero or unresolvable gradient direction, e.g. the
  // key-projection bias, which softmax provably ignores).
  bool below_floor = false;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<GradCheckGroup> groups;
};

struct GradCheckOptions {
  // Coordinates sampled per parameter tensor; every coordinate is checked
  // when the tensor is at most this large. Half the sample follows the
  // largest analytic gradients, half is drawn at random.
  int max_coords_per_param = 24;
  uint64_t seed = 0x5eed;
  std::vector<std::string> names;  // optional, parallel to params
  // Coordinates whose analytic gradient is below this fraction of the
  // group's largest one are excluded: their central differences sit at the
  // loss's rounding floor and verify nothing.
  double coord_floor = 1e-3;
  // Absolute signal floor on |analytic|. Below it the loss difference
  // 2h|g| drowns in the rounding noise of f itself; such coordinates (and
  // groups made entirely of them) are reported as below_floor.
  double coord_floor_abs = 0.0;
};

// Central-difference check of reverse-mode gradients. `f` rebuilds the scalar
// objective from the current parameter values; it is taped once for the
// analytic gradients and then re-evaluated untaped at theta +/- h.
// Returns max over sampled coordinates of
//   |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
template <class S>
double finite_diff_check(const std::function<Tensor<S>()>& f,
                         std::span<Tensor<S>> params, double h,
                         GradCheckReport* report = nullptr,
                         const GradCheckOptions& opts = {});

namespace test_hooks {
// Deliberately corrupts the gelu backward rule. Negative-control fixture for
// the gradient checker; never enabled outside tests.
void set_corrupt_gelu_backward(bool on);
bool corrupt_gelu_backward();
}  // namespace test_hooks

}  // namespace iconpeft
