#include "cgan/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "cgan/errors.hpp"
#include "cgan/format.hpp"

namespace cgan {

namespace {

std::vector<double> sorted_column(const Matrix& m, std::size_t col) {
    std::vector<double> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, col);
    std::sort(out.begin(), out.end());
    return out;
}

void check_pair(const Matrix& real, const Matrix& synth, const char* op) {
    if (real.cols() != synth.cols()) {
        throw ValidationError(std::string(op) + ": feature count mismatch");
    }
    if (real.rows() == 0 || synth.rows() == 0) {
        throw ValidationError(std::string(op) + ": empty input");
    }
}

// Exact CDF gap |i/n - j/m| via integer cross-multiplication.
double cdf_gap(std::size_t i, std::size_t n, std::size_t j, std::size_t m) {
    const long long num = std::llabs(static_cast<long long>(i * m) -
                                     static_cast<long long>(j * n));
    return static_cast<double>(num) / static_cast<double>(n * m);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && v[idx[j]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 + 1.0;
        for (std::size_t t = i; t < j; ++t) ranks[idx[t]] = avg;
        i = j;
    }
    return ranks;
}

}  // namespace

std::vector<double> default_coverage_levels() {
    return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
}

CoverageGrid coverage_report(const CalibratorState& calibrator, const LabeledDataset& samples,
                             const MlpModel& disc, const std::vector<double>& levels) {
    if (samples.size() == 0) throw ValidationError("coverage_report: empty sample set");
    if (levels.empty()) throw ValidationError("coverage_report: empty level list");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(levels[i] > 0.0 && levels[i] < 1.0)) {
            throw ValidationError("coverage_report: levels must lie in (0,1)");
        }
        if (i > 0 && levels[i] <= levels[i - 1]) {
            throw ValidationError("coverage_report: levels must be strictly increasing");
        }
    }
    const std::vector<double> scores = weighted_score_batch(
        calibrator.scorer, calibrator.weights, samples.features, samples.labels, disc);
    CoverageGrid grid;
    for (double level : levels) {
        const double q = conformal_quantile(calibrator.calib_scores, 1.0 - level);
        std::size_t covered = 0;
        for (double s : scores) {
            if (s <= q) ++covered;
        }
        grid.rows.push_back(
            {level, static_cast<double>(covered) / static_cast<double>(scores.size())});
    }
    return grid;
}

double efficiency_at(const CalibratorState& calibrator, double alpha) {
    const double q = conformal_quantile(calibrator.calib_scores, alpha);
    if (std::isinf(q)) return 0.0;
    return 1.0 / (1.0 + q);
}

double efficiency(const CalibratorState& calibrator) {
    return efficiency_at(calibrator, calibrator.alpha);
}

double ece(const CoverageGrid& grid) {
    if (grid.rows.empty()) throw ValidationError("ece: empty coverage grid");
    double sum = 0.0;
    for (const CoveragePoint& p : grid.rows) sum += std::abs(p.empirical - p.nominal);
    return sum / static_cast<double>(grid.rows.size());
}

double ks_mean(const Matrix& real, const Matrix& synth) {
    check_pair(real, synth, "ks_mean");
    const std::size_t n = real.rows(), m = synth.rows();
    double total = 0.0;
    for (std::size_t col = 0; col < real.cols(); ++col) {
        const std::vector<double> a = sorted_column(real, col);
        const std::vector<double> b = sorted_column(synth, col);
        double ks = 0.0;
        std::size_t i = 0, j = 0;
        while (i < n || j < m) {
            const double v = (i < n && (j >= m || a[i] <= b[j])) ? a[i] : b[j];
            while (i < n && a[i] == v) ++i;
            while (j < m && b[j] == v) ++j;
            ks = std::max(ks, cdf_gap(i, n, j, m));
        }
        total += ks;
    }
    return total / static_cast<double>(real.cols());
}

double wasserstein_mean(const Matrix& real, const Matrix& synth) {
    check_pair(real, synth, "wasserstein_mean");
    const std::size_t n = real.rows(), m = synth.rows();
    double total = 0.0;
    for (std::size_t col = 0; col < real.cols(); ++col) {
        const std::vector<double> a = sorted_column(real, col);
        const std::vector<double> b = sorted_column(synth, col);
        double w = 0.0;
        std::size_t i = 0, j = 0;
        double prev = std::min(a.front(), b.front());
        while (i < n || j < m) {
            const double v = (i < n && (j >= m || a[i] <= b[j])) ? a[i] : b[j];
            w += cdf_gap(i, n, j, m) * (v - prev);
            while (i < n && a[i] == v) ++i;
            while (j < m && b[j] == v) ++j;
            prev = v;
        }
        total += w;
    }
    return total / static_cast<double>(real.cols());
}

double downstream_accuracy(const LabeledDataset& synth_train, const LabeledDataset& real_test) {
    if (synth_train.size() < 5) {
        throw ValidationError("downstream_accuracy: need at least 5 training points");
    }
    if (real_test.size() == 0) throw ValidationError("downstream_accuracy: empty test set");
    if (synth_train.dim() != real_test.dim()) {
        throw ValidationError("downstream_accuracy: feature count mismatch");
    }
    std::vector<std::size_t> class_counts(static_cast<std::size_t>(synth_train.num_classes), 0);
    for (int y : synth_train.labels) class_counts[static_cast<std::size_t>(y)] += 1;
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        if (class_counts[c] == 0) {
            throw ValidationError("downstream_accuracy: training set has no points of class " +
                                  std::to_string(c));
        }
    }

    constexpr std::size_t kNeighbors = 5;
    const std::size_t d = synth_train.dim();
    std::size_t correct = 0;
    std::vector<std::pair<double, int>> best;  // (squared distance, label), max-heap
    std::vector<std::size_t> votes(static_cast<std::size_t>(synth_train.num_classes));
    for (std::size_t r = 0; r < real_test.size(); ++r) {
        best.clear();
        const auto x = real_test.features.row(r);
        for (std::size_t s = 0; s < synth_train.size(); ++s) {
            double d2 = 0.0;
            const auto t = synth_train.features.row(s);
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = x[c] - t[c];
                d2 += diff * diff;
            }
            const std::pair<double, int> cand{d2, synth_train.labels[s]};
            if (best.size() < kNeighbors) {
                best.push_back(cand);
                std::push_heap(best.begin(), best.end());
            } else if (cand < best.front()) {
                std::pop_heap(best.begin(), best.end());
                best.back() = cand;
                std::push_heap(best.begin(), best.end());
            }
        }
        std::fill(votes.begin(), votes.end(), 0);
        for (const auto& [d2, y] : best) votes[static_cast<std::size_t>(y)] += 1;
        int winner = 0;
        std::size_t winner_votes = 0;
        for (int y = 0; y < synth_train.num_classes; ++y) {
            if (votes[static_cast<std::size_t>(y)] > winner_votes) {
                winner = y;
                winner_votes = votes[static_cast<std::size_t>(y)];
            }
        }
        if (winner == real_test.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(real_test.size());
}

std::vector<CurvePoint> coverage_efficiency_curve(const CalibratorState& calibrator,
                                                  const LabeledDataset& samples,
                                                  const MlpModel& disc,
                                                  const std::vector<double>& alphas) {
    if (alphas.empty()) throw ValidationError("coverage_efficiency_curve: empty alpha list");
    if (samples.size() == 0) throw ValidationError("coverage_efficiency_curve: empty sample set");
    const std::vector<double> scores = weighted_score_batch(
        calibrator.scorer, calibrator.weights, samples.features, samples.labels, disc);
    std::vector<CurvePoint> rows;
    for (double alpha : alphas) {
        const double q = conformal_quantile(calibrator.calib_scores, alpha);
        std::size_t covered = 0;
        for (double s : scores) {
            if (s <= q) ++covered;
        }
        rows.push_back({1.0 - efficiency_at(calibrator, alpha),
                        static_cast<double>(covered) / static_cast<double>(scores.size())});
    }
    return rows;
}

WidthDensityCurve width_vs_density(const CalibratorState& calibrator, const Matrix& calib_features,
                                   const LabeledDataset& samples, const MlpModel& disc,
                                   int k_nn) {
    if (k_nn < 1) throw ValidationError("width_vs_density: k_nn must be >= 1");
    if (calib_features.rows() < static_cast<std::size_t>(k_nn)) {
        throw ValidationError("width_vs_density: calibration set smaller than k_nn");
    }
    if (samples.size() == 0) throw ValidationError("width_vs_density: empty sample set");
    if (calib_features.cols() != samples.dim()) {
        throw ValidationError("width_vs_density: feature count mismatch");
    }

    const std::vector<double> scores = weighted_score_batch(
        calibrator.scorer, calibrator.weights, samples.features, samples.labels, disc);
    const std::size_t n = samples.size();
    std::vector<double> density(n), radius(n);
    std::vector<double> dists(calib_features.rows());
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = samples.features.row(i);
        for (std::size_t r = 0; r < calib_features.rows(); ++r) {
            dists[r] = euclidean_distance(x, calib_features.row(r));
        }
        std::nth_element(dists.begin(), dists.begin() + (k_nn - 1), dists.end());
        double mean_dist = 0.0;
        for (int t = 0; t < k_nn; ++t) mean_dist += dists[static_cast<std::size_t>(t)];
        mean_dist = std::max(mean_dist / static_cast<double>(k_nn), 1e-12);
        density[i] = 1.0 / mean_dist;
        radius[i] = scores[i] * mean_dist;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return density[a] < density[b]; });

    WidthDensityCurve curve;
    for (std::size_t decile = 0; decile < 10; ++decile) {
        const std::size_t lo = decile * n / 10;
        const std::size_t hi = (decile + 1) * n / 10;
        if (lo >= hi) continue;
        double radius_sum = 0.0;
        double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
        for (std::size_t t = lo; t < hi; ++t) {
            radius_sum += radius[order[t]];
            dmin = std::min(dmin, density[order[t]]);
            dmax = std::max(dmax, density[order[t]]);
        }
        curve.rows.push_back(
            {(dmin + dmax) / 2.0, radius_sum / static_cast<double>(hi - lo)});
    }

    if (curve.rows.size() >= 2) {
        std::vector<double> xs, ys;
        for (const CurvePoint& p : curve.rows) {
            xs.push_back(p.x);
            ys.push_back(p.y);
        }
        curve.spearman = spearman_correlation(xs, ys);
    }
    return curve;
}

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("spearman: length mismatch");
    if (a.size() < 2) throw ValidationError("spearman: need at least two points");
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - ma, db = rb[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

void save_metrics_report(const MetricsReport& report, const std::string& path) {
    nlohmann::ordered_json doc;
    if (report.has_validity) {
        nlohmann::ordered_json coverage = nlohmann::ordered_json::array();
        for (const CoveragePoint& p : report.coverage.rows) {
            coverage.push_back({{"nominal", p.nominal}, {"empirical", p.empirical}});
        }
        doc["coverage_at_alpha"] = std::move(coverage);
        doc["efficiency"] = report.efficiency;
        doc["ece"] = report.ece;
    }
    if (report.has_fidelity) {
        doc["ks_mean"] = report.ks_mean;
        doc["wasserstein_mean"] = report.wasserstein_mean;
        doc["downstream_accuracy"] = report.downstream_accuracy;
    }
    nlohmann::ordered_json curves = nlohmann::ordered_json::array();
    for (const NamedCurve& curve : report.curves) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const CurvePoint& p : curve.rows) rows.push_back({p.x, p.y});
        curves.push_back({{"name", curve.name},
                          {"x", curve.x_label},
                          {"y", curve.y_label},
                          {"rows", std::move(rows)}});
    }
    doc["curves"] = std::move(curves);
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("save_metrics_report: cannot open " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw RuntimeFailure("save_metrics_report: write failed for " + path);
}

void write_curve_csv(const NamedCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("write_curve_csv: cannot open " + path);
    out << curve.x_label << ',' << curve.y_label << '\n';
    for (const CurvePoint& p : curve.rows) {
        out << format_double(p.x) << ',' << format_double(p.y) << '\n';
    }
    if (!out) throw RuntimeFailure("write_curve_csv: write failed for " + path);
}

WeightVector select_weights_by_ece(const std::vector<WeightVector>& candidates,
                                   const ScorerState& scorer, const LabeledDataset& calib,
                                   const LabeledDataset& val, const MlpModel& disc) {
    if (candidates.empty()) throw ValidationError("select_weights_by_ece: empty candidate grid");
    const std::vector<double> levels = default_coverage_levels();
    std::size_t best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const CalibratorState cal = calibrate(scorer, candidates[ci], calib, disc, 0.1);
        const double value = ece(coverage_report(cal, val, disc, levels));
        if (value < best_value) {
            best_value = value;
            best = ci;
        }
    }
    return candidates[best];
}

}  // namespace cgan
