#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace gatedseg {

/// q-th percentile (q in [0, 100]) with linear interpolation between the
/// order statistics at floor/ceil of rank (n-1)*q/100. Throws on empty input.
double percentile(std::span<const double> values, double q);

/// Regularized incomplete beta I_x(a, b), evaluated by Lentz's continued
/// fraction. Requires a, b > 0 and x in [0, 1].
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of Student's t statistic with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct CorrelationResult {
    std::string metric;
    double r = 0.0;
    double p = 1.0;
    std::size_t n = 0;

    bool operator==(const CorrelationResult&) const = default;
};

/// Sample Pearson correlation with a two-sided t-test p-value.
/// Throws ArgumentError for n < 3 or non-finite input, ValidationError for
/// zero variance in either series.
CorrelationResult pearson(std::span<const double> xs, std::span<const double> ys, std::string metric = {});

}  // namespace gatedseg
