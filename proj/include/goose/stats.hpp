#pragma once

#include <span>

namespace goose::stats {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> xs);
/// Inclusive quantile: linear interpolation at rank q (n - 1) of the sorted
/// values, q in [0, 1]. Same as numpy's default and QUARTILE.INC.
double quantile(std::span<const double> xs, double q);
double median(std::span<const double> xs);
double iqr(std::span<const double> xs);
/// stddev / mean; 0 when the mean is 0.
double cv(std::span<const double> xs);
/// NaN when fewer than two points or either side is constant.
double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace goose::stats
