#include "mtq/stats.hpp"

#include "mtq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mtq::stats {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_n) {
  if (a.size() != b.size()) throw ShapeError("score sequences differ in length");
  if (a.size() < min_n) throw ConfigError("need at least " + std::to_string(min_n) + " pairs");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw Error("non-finite score");
  }
}

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

}  // namespace

double lcc(std::span<const double> p, std::span<const double> t) {
  check_pair(p, t, 2);
  const double mp = mean(p);
  const double mt = mean(t);
  double spp = 0.0, stt = 0.0, spt = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p[i] - mp;
    const double b = t[i] - mt;
    spp += a * a;
    stt += b * b;
    spt += a * b;
  }
  if (spp <= 0.0 || stt <= 0.0) throw DegenerateError("degenerate distribution: zero variance");
  return std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double srcc(std::span<const double> p, std::span<const double> t) {
  check_pair(p, t, 2);
  const auto rp = average_ranks(p);
  const auto rt = average_ranks(t);
  return lcc(rp, rt);
}

double mse(std::span<const double> p, std::span<const double> t) {
  check_pair(p, t, 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  return acc / static_cast<double>(p.size());
}

}  // namespace mtq::stats
