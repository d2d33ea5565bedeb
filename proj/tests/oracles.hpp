// Reference implementations the library is checked against. Each one is a
// direct, unoptimized transcription kept independent of the library code.
#ifndef BUSRL_TESTS_ORACLES_HPP_
#define BUSRL_TESTS_ORACLES_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include "busrl/environment.hpp"
#include "busrl/mlp.hpp"
#include "busrl/rng.hpp"

namespace oracle {

// Bunching initialization, line by line: sample beta centres, then per bus
// pick a centre, draw from N(centre, 2.5), round, wrap onto the loop. Uses the
// raw engine with one fresh distribution object per draw.
inline std::vector<int> bunching_placement(int beta, int m, int n, std::mt19937_64& engine) {
  std::vector<int> gaussians;
  for (int j = 0; j < beta; ++j) gaussians.push_back(std::uniform_int_distribution<int>(0, m - 1)(engine));
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    const int z = gaussians[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, beta - 1)(engine))];
    const double x = std::normal_distribution<double>(z, 2.5)(engine);
    long s = std::lround(x);
    s = ((s % m) + m) % m;
    out.push_back(static_cast<int>(s));
  }
  return out;
}

// Circular spread of stations on an m-loop: 1 - mean resultant length.
inline double circular_spread(const std::vector<int>& stations, int m) {
  double c = 0.0, s = 0.0;
  for (int x : stations) {
    const double th = 2.0 * std::numbers::pi * x / m;
    c += std::cos(th);
    s += std::sin(th);
  }
  const double r = std::hypot(c, s) / static_cast<double>(stations.size());
  return 1.0 - r;
}

inline int distinct(const std::vector<int>& v) { return static_cast<int>(std::set<int>(v.begin(), v.end()).size()); }

// Welch t statistic for mean(a) - mean(b).
inline double welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  auto stats = [](const std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size() - 1);
    return std::pair{mean, var};
  };
  const auto [ma, va] = stats(a);
  const auto [mb, vb] = stats(b);
  return (ma - mb) / std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
}

// Reward over an interval with the same formula written out by hand.
inline double reward(double dtw, double nw, double dtb, double nb, double ww, double wb) {
  const double wait = nw > 0 ? dtw / nw : dtw;
  const double ride = nb > 0 ? dtb / nb : dtb;
  return ww * wait + wb * ride;
}

// Central finite-difference gradient of f over params.data.
inline std::vector<double> numeric_gradient(busrl::MlpParams& params, const std::function<double()>& f,
                                            double h = 1e-6) {
  std::vector<double> g(params.data.size());
  for (std::size_t i = 0; i < params.data.size(); ++i) {
    const double keep = params.data[i];
    params.data[i] = keep + h;
    const double up = f();
    params.data[i] = keep - h;
    const double down = f();
    params.data[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(|a|_inf, |b|_inf, floor): relative to the gradient scale.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8) {
  double diff = 0.0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return diff / scale;
}

}  // namespace oracle

#endif  // BUSRL_TESTS_ORACLES_HPP_
