#pragma once

#include <string>
#include <vector>

#include "cgan/conformal.hpp"
#include "cgan/dataset.hpp"
#include "cgan/matrix.hpp"
#include "cgan/mlp.hpp"

namespace cgan {

struct CoveragePoint {
    double nominal = 0.0;
    double empirical = 0.0;
};

// Calibration-curve rows: nominal level 1-alpha against empirical coverage.
struct CoverageGrid {
    std::vector<CoveragePoint> rows;
};

// {0.1, 0.2, ..., 0.9, 0.95}
std::vector<double> default_coverage_levels();

// Empirical coverage of the samples at each nominal level: the fraction of
// weighted scores at or below that level's calibration quantile.
CoverageGrid coverage_report(const CalibratorState& calibrator, const LabeledDataset& samples,
                             const MlpModel& disc, const std::vector<double>& levels);

// 1 / (1 + quantile); 0 for an infinite region. Assumes features were
// standardized upstream so region sizes are comparable.
double efficiency(const CalibratorState& calibrator);
double efficiency_at(const CalibratorState& calibrator, double alpha);

// Mean absolute gap between empirical and nominal coverage.
double ece(const CoverageGrid& grid);

// Per-feature two-sample Kolmogorov-Smirnov statistic, averaged over features.
double ks_mean(const Matrix& real, const Matrix& synth);

// Per-feature 1-D Wasserstein-1 distance (quantile integral on the merged
// grid), averaged over features.
double wasserstein_mean(const Matrix& real, const Matrix& synth);

// Accuracy of a 5-nearest-neighbor classifier trained on the synthetic set
// and evaluated on real test points. Neighbor ties prefer the smaller label;
// vote ties prefer the smaller class index.
double downstream_accuracy(const LabeledDataset& synth_train, const LabeledDataset& real_test);

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};

// Rows (1 - efficiency, empirical coverage), one per alpha in input order.
std::vector<CurvePoint> coverage_efficiency_curve(const CalibratorState& calibrator,
                                                  const LabeledDataset& samples,
                                                  const MlpModel& disc,
                                                  const std::vector<double>& alphas);

struct WidthDensityCurve {
    std::vector<CurvePoint> rows;  // (density decile midpoint, mean local radius)
    double spearman = 0.0;         // over the rows' two columns
};

// Local radius of the prediction region around each sample: its weighted
// score times the mean distance to the k_nn nearest calibration points;
// density is the inverse of that mean distance. Samples are bucketed into
// density deciles by rank; empty deciles are omitted.
WidthDensityCurve width_vs_density(const CalibratorState& calibrator, const Matrix& calib_features,
                                   const LabeledDataset& samples, const MlpModel& disc,
                                   int k_nn = 10);

// Average-rank Spearman correlation; 0 when either side is constant.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

struct NamedCurve {
    std::string name;
    std::string x_label;
    std::string y_label;
    std::vector<CurvePoint> rows;
};

struct MetricsReport {
    bool has_validity = false;  // coverage, efficiency, ece
    CoverageGrid coverage;
    double efficiency = 0.0;
    double ece = 0.0;

    bool has_fidelity = false;  // ks, wasserstein, downstream accuracy
    double ks_mean = 0.0;
    double wasserstein_mean = 0.0;
    double downstream_accuracy = 0.0;

    std::vector<NamedCurve> curves;
};

void save_metrics_report(const MetricsReport& report, const std::string& path);
void write_curve_csv(const NamedCurve& curve, const std::string& path);

// Alternative weight selection: the candidate whose calibrator yields the
// smallest coverage ECE on held-out real data. Ties keep the earliest
// candidate.
WeightVector select_weights_by_ece(const std::vector<WeightVector>& candidates,
                                   const ScorerState& scorer, const LabeledDataset& calib,
                                   const LabeledDataset& val, const MlpModel& disc);

}  // namespace cgan
