#pragma once

#include <span>
#include <vector>

namespace mtq::stats {

// Pearson correlation with two-pass mean and variance. Throws
// DegenerateError ("degenerate distribution") on zero variance.
double lcc(std::span<const double> predicted, std::span<const double> truth);

// Pearson correlation of average ranks.
double srcc(std::span<const double> predicted, std::span<const double> truth);

double mse(std::span<const double> predicted, std::span<const double> truth);

// 1-based ranks; ties receive the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> x);

}  // namespace mtq::stats
