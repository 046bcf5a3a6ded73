#include "iconpeft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace iconpeft {

namespace test_hooks {
namespace {
bool g_corrupt_gelu = false;
}
void set_corrupt_gelu_backward(bool on) { g_corrupt_gelu = on; }
bool corrupt_gelu_backward() { return g_corrupt_gelu; }
}  // namespace test_hooks

namespace {

std::vector<int64_t> pick_coords(std::span<const double> analytic,
                                 int max_coords, uint64_t seed,
                                 double coord_floor, double coord_floor_abs) {
  const int64_t n = static_cast<int64_t>(analytic.size());
  double group_max = 0.0;
  for (double a : analytic) group_max = std::max(group_max, std::abs(a));
  if (group_max == 0.0) return {};  // identically zero gradient: nothing to probe

  const double floor = std::max(coord_floor * group_max, coord_floor_abs);
  std::vector<int64_t> eligible;
  for (int64_t i = 0; i < n; ++i) {
    if (std::abs(analytic[static_cast<size_t>(i)]) >= floor) {
      eligible.push_back(i);
    }
  }
  if (static_cast<int>(eligible.size()) <= max_coords) return eligible;

  std::set<int64_t> chosen;
  // Largest-magnitude gradients first: a wrong rule distorts these for sure
  // and they carry the least finite-difference noise.
  std::vector<int64_t> order = eligible;
  std::partial_sort(order.begin(), order.begin() + max_coords / 2, order.end(),
                    [&](int64_t a, int64_t b) {
                      return std::abs(analytic[static_cast<size_t>(a)]) >
                             std::abs(analytic[static_cast<size_t>(b)]);
                    });
  for (int i = 0; i < max_coords / 2; ++i) chosen.insert(order[static_cast<size_t>(i)]);
  SeededRng rng(seed);
  while (static_cast<int>(chosen.size()) < max_coords) {
    chosen.insert(eligible[rng.below(eligible.size())]);
  }
  return {chosen.begin(), chosen.end()};
}

}  // namespace

template <class S>
double finite_diff_check(const std::function<Tensor<S>()>& f,
                         std::span<Tensor<S>> params, double h,
                         GradCheckReport* report, const GradCheckOptions& opts) {
  if (h <= 0) throw ConfigError("finite_diff_check: h must be > 0");

  std::vector<bool> old_flags;
  old_flags.reserve(params.size());
  for (auto& p : params) {
    old_flags.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }

  // Analytic pass.
  {
    Tape<S> tape;
    Tensor<S> loss = f();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic(params.size());
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto g = params[pi].grad();
    analytic[pi].assign(g.begin(), g.end());
  }

  double worst = 0.0;
  if (report) report->groups.clear();
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<S>& p = params[pi];
    const auto coords =
        pick_coords(analytic[pi], opts.max_coords_per_param, opts.seed + pi,
                    opts.coord_floor, opts.coord_floor_abs);
    double group_worst = 0.0;
    for (int64_t ci : coords) {
      S* slot = p.data_ptr() + ci;
      const S original = *slot;
      *slot = original + static_cast<S>(h);
      const double f_plus = static_cast<double>(f().item());
      *slot = original - static_cast<S>(h);
      const double f_minus = static_cast<double>(f().item());
      *slot = original;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[pi][static_cast<size_t>(ci)];
      const double rel =
          std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      group_worst = std::max(group_worst, rel);
    }
    worst = std::max(worst, group_worst);
    if (report) {
      GradCheckGroup grp;
      grp.name = pi < opts.names.size() ? opts.names[pi]
                                        : "param" + std::to_string(pi);
      grp.max_rel_err = group_worst;
      grp.coords_checked = static_cast<int64_t>(coords.size());
      grp.below_floor = coords.empty();
      report->groups.push_back(std::move(grp));
    }
  }

  for (size_t pi = 0; pi < params.size(); ++pi) {
    params[pi].zero_grad();
    params[pi].set_requires_grad(old_flags[pi]);
  }
  if (report) report->max_rel_err = worst;
  return worst;
}

template double finite_diff_check<float>(const std::function<Tensor<float>()>&,
                                         std::span<Tensor<float>>, double,
                                         GradCheckReport*,
                                         const GradCheckOptions&);
template double finite_diff_check<double>(
    const std::function<Tensor<double>()>&, std::span<Tensor<double>>, double,
    GradCheckReport*, const GradCheckOptions&);

}  // namespace iconpeft
