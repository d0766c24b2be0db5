#pragma once

#include <utility>
#include <vector>

#include "core.hpp"

namespace fklab {

// Monte Carlo estimate of a (perturbed) kernel on a grid of times x pairs.
// values[j][i] belongs to t_values[j] and pairs[i].
struct KernelEstimate {
  std::vector<double> t_values;
  std::vector<std::pair<Point, Point>> pairs;
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> ci_half_width;
  std::vector<std::vector<double>> bias;  // per-point KDE bias bound
  long long n_paths = 0;
  double bandwidth = 0.0;              // bandwidth at the first time
  std::vector<double> bandwidths;      // per time
  double bias_bound = 0.0;  // max of bias

  std::size_t n_times() const { return t_values.size(); }
  std::size_t n_pairs() const { return pairs.size(); }

  double slack(std::size_t j, std::size_t i) const {
    double s = ci_half_width.empty() ? 0.0 : ci_half_width[j][i];
    if (!bias.empty()) s += bias[j][i];
    return s;
  }

  // grid of zeros with matching shape
  static KernelEstimate shaped(std::vector<double> ts, std::vector<std::pair<Point, Point>> prs) {
    KernelEstimate k;
    k.t_values = std::move(ts);
    k.pairs = std::move(prs);
    const std::size_t nt = k.t_values.size(), np = k.pairs.size();
    k.values.assign(nt, std::vector<double>(np, 0.0));
    k.ci_half_width.assign(nt, std::vector<double>(np, 0.0));
    k.bias.assign(nt, std::vector<double>(np, 0.0));
    return k;
  }
};

}  // namespace fklab
