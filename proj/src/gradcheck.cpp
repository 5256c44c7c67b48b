#include "aldk/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aldk/rng.hpp"

namespace aldk {
namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& point) {
  std::vector<Var> args;
  args.reserve(point.size());
  for (const auto& t : point) args.push_back(Var::constant(t));
  return f(args).value().precise_item();
}

std::vector<std::int64_t> entries(std::int64_t n, const GradCheckOptions& opt, std::size_t argument) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (opt.max_entries <= 0 || n <= opt.max_entries) return idx;
  SplitMix64 rng(child_seed(opt.seed, argument));
  for (std::int64_t i = 0; i < opt.max_entries; ++i) {
    auto j = i + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(opt.max_entries));
  return idx;
}

}  // namespace

GradCheckReport fd_check(const ScalarFunction& f, const std::vector<Tensor>& point, const GradCheckOptions& opt) {
  std::vector<Var> leaves;
  for (const auto& t : point) leaves.push_back(Var::leaf(t));
  const Var root = f(leaves);
  const auto analytic = grad(root, leaves);

  GradCheckReport report;
  std::vector<Tensor> probe = point;
  for (std::size_t a = 0; a < point.size(); ++a) {
    ArgumentCheck check;
    check.argument = a;
    const Tensor& g = analytic[a].value();
    const double floor = std::max(opt.floor_fraction * max_abs(g), 1e-8);
    for (std::int64_t i : entries(point[a].numel(), opt, a)) {
      const float orig = point[a][i];
      probe[a][i] = orig + opt.step;
      const double up = evaluate(f, probe);
      probe[a][i] = orig - opt.step;
      const double down = evaluate(f, probe);
      probe[a][i] = orig;
      // Use the steps actually representable in float.
      const double h2 = static_cast<double>(orig + opt.step) - static_cast<double>(orig - opt.step);
      const double numeric = (up - down) / h2;
      const double an = g[i];
      const double err = std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), floor});
      ++check.checked;
      if (err > check.max_rel_error || check.worst_index < 0) {
        check.max_rel_error = std::max(err, check.max_rel_error);
        if (err >= check.max_rel_error) {
          check.worst_index = i;
          check.worst_analytic = an;
          check.worst_numeric = numeric;
        }
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.arguments.push_back(check);
  }
  report.passed = report.max_rel_error <= opt.tolerance;
  return report;
}

}  // namespace aldk
