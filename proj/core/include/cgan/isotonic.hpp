#pragma once

#include <cstddef>
#include <vector>

namespace cgan {

// Nondecreasing piecewise-linear map fitted by pool-adjacent-violators.
// Values live in [0,1]; evaluation is flat outside the breakpoint range.
struct IsotonicFit {
    std::vector<double> breakpoints;  // unique, ascending
    std::vector<double> values;       // nondecreasing, same length

    bool empty() const { return breakpoints.empty(); }

    // Interpolated value at x.
    double operator()(double x) const;

    // Derivative of the interpolant at x; 0 outside the range and on flat
    // segments. At a breakpoint the right-hand slope is used.
    double slope(double x) const;
};

// Least-squares nondecreasing fit of ys against xs. xs must be sorted
// ascending (ties allowed, pooled by target average); ys are clamped to
// [0,1] before fitting.
IsotonicFit pava_fit(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace cgan
