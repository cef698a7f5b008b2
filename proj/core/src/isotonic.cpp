#include "cgan/isotonic.hpp"

#include <algorithm>
#include <cmath>

#include "cgan/errors.hpp"

namespace cgan {

double IsotonicFit::operator()(double x) const {
    if (breakpoints.empty()) throw ValidationError("IsotonicFit: evaluated before fitting");
    if (x <= breakpoints.front()) return values.front();
    if (x >= breakpoints.back()) return values.back();
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - breakpoints.begin());
    const std::size_t lo = hi - 1;
    const double t = (x - breakpoints[lo]) / (breakpoints[hi] - breakpoints[lo]);
    return values[lo] + t * (values[hi] - values[lo]);
}

double IsotonicFit::slope(double x) const {
    if (breakpoints.empty()) throw ValidationError("IsotonicFit: evaluated before fitting");
    if (x < breakpoints.front() || x >= breakpoints.back()) return 0.0;
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - breakpoints.begin());
    const std::size_t lo = hi - 1;
    return (values[hi] - values[lo]) / (breakpoints[hi] - breakpoints[lo]);
}

IsotonicFit pava_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw ValidationError("pava_fit: xs and ys length mismatch");
    if (xs.empty()) throw ValidationError("pava_fit: empty input");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
            throw ValidationError("pava_fit: non-finite input at index " + std::to_string(i));
        }
        if (i > 0 && xs[i] < xs[i - 1]) {
            throw ValidationError("pava_fit: xs not sorted at index " + std::to_string(i));
        }
    }

    // Pool duplicate predictors into one weighted point.
    std::vector<double> px, py, pw;
    for (std::size_t i = 0; i < xs.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < xs.size() && xs[j] == xs[i]) {
            sum += std::clamp(ys[j], 0.0, 1.0);
            ++j;
        }
        px.push_back(xs[i]);
        py.push_back(sum / static_cast<double>(j - i));
        pw.push_back(static_cast<double>(j - i));
        i = j;
    }

    // Pool adjacent violators: maintain a stack of blocks with nondecreasing means.
    struct Block {
        double mean;
        double weight;
        std::size_t count;  // pooled points covered
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < px.size(); ++i) {
        Block b{py[i], pw[i], 1};
        while (!blocks.empty() && blocks.back().mean >= b.mean) {
            const Block& prev = blocks.back();
            const double w = prev.weight + b.weight;
            b.mean = (prev.mean * prev.weight + b.mean * b.weight) / w;
            b.weight = w;
            b.count += prev.count;
            blocks.pop_back();
        }
        blocks.push_back(b);
    }

    IsotonicFit fit;
    fit.breakpoints = std::move(px);
    fit.values.reserve(fit.breakpoints.size());
    for (const Block& b : blocks) {
        for (std::size_t i = 0; i < b.count; ++i) fit.values.push_back(b.mean);
    }
    return fit;
}

}  // namespace cgan
