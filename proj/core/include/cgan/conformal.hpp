#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cgan/dataset.hpp"
#include "cgan/isotonic.hpp"
#include "cgan/matrix.hpp"
#include "cgan/mlp.hpp"
#include "cgan/rng.hpp"

namespace cgan {

enum class NonconformityMethod : int {
    Icp = 0,
    Mondrian = 1,
    CrossConformal = 2,
    VennAbers = 3,
};

inline constexpr std::array<NonconformityMethod, 4> kAllMethods = {
    NonconformityMethod::Icp,
    NonconformityMethod::Mondrian,
    NonconformityMethod::CrossConformal,
    NonconformityMethod::VennAbers,
};

const char* method_name(NonconformityMethod m);

// Convex weights over the four methods, indexed by NonconformityMethod.
struct WeightVector {
    std::array<double, 4> lambda{0.25, 0.25, 0.25, 0.25};

    double operator[](NonconformityMethod m) const { return lambda[static_cast<int>(m)]; }
    // Throws ValidationError unless all entries are >= 0 and sum to 1 within 1e-9.
    void validate() const;
};

WeightVector uniform_weights();
WeightVector unit_weight(NonconformityMethod m);

// All weight vectors with entries on a grid of the given step, in
// lexicographic order (step 0.25 yields 35 candidates).
std::vector<WeightVector> simplex_grid(double step = 0.25);

struct CrossFoldState {
    int k = 0;
    std::vector<int> fold_of;                            // fitting point -> fold
    std::vector<std::vector<double>> complement_means;   // k entries, one per excluded fold
};

struct ScorerState {
    int num_classes = 0;
    std::vector<double> icp_mean;
    std::vector<std::vector<double>> mondrian_means;     // one per class 0..num_classes-1
    CrossFoldState cross;
    IsotonicFit venn_model;

    std::size_t dim() const { return icp_mean.size(); }
};

// Fits all four method states on `data`. The isotonic model regresses a
// real/fake indicator (real -> 1) on discriminator outputs over data plus
// the optional generated pool; with no pool it degenerates to the constant 1.
// Requires k in [2, n], at least two classes, and every class populated.
ScorerState fit_scorer(const LabeledDataset& data, const MlpModel& disc, int k,
                       const Matrix* fake_features = nullptr,
                       const std::vector<int>* fake_labels = nullptr);

// Nonconformity of (x, y) under one method. Cross-conformal here is the
// out-of-sample rule: the mean over all fold-complement distances, divided
// by the fold count.
double score(NonconformityMethod method, const ScorerState& state, std::span<const double> x,
             int y, const MlpModel& disc);

// Cross-conformal score for a point known to lie in `fold`:
// (1/k) * distance to that fold's complement mean.
double score_in_fold(const ScorerState& state, std::span<const double> x, int fold);

// Sum of lambda_i * score_i. Zero-weight methods are skipped entirely, so a
// unit weight vector reproduces the single-method score bit for bit.
double weighted_score(const ScorerState& state, const WeightVector& weights,
                      std::span<const double> x, int y, const MlpModel& disc);

// Row-wise weighted scores with one batched discriminator pass.
std::vector<double> weighted_score_batch(const ScorerState& state, const WeightVector& weights,
                                         const Matrix& features, const std::vector<int>& labels,
                                         const MlpModel& disc);

// The ceil((n+1)(1-alpha))-th smallest calibration score, or +infinity when
// that rank exceeds n. `calib_scores` must be sorted nondecreasing.
double conformal_quantile(const std::vector<double>& calib_scores, double alpha);

struct CalibratorState {
    ScorerState scorer;
    WeightVector weights;
    std::vector<double> calib_scores;  // sorted nondecreasing
    double alpha = 0.1;

    double quantile() const { return conformal_quantile(calib_scores, alpha); }
};

// Scores the calibration set and stores the sorted result.
CalibratorState calibrate(const ScorerState& scorer, const WeightVector& weights,
                          const LabeledDataset& calib, const MlpModel& disc, double alpha);

bool region_contains(const CalibratorState& calibrator, std::span<const double> x, int y,
                     const MlpModel& disc);

// (1 + #{calibration scores >= s}) / (n + 1), in (0, 1].
double p_value(const CalibratorState& calibrator, std::span<const double> x, int y,
               const MlpModel& disc);

// Mean absolute per-index difference between real-state scores of the real
// batch and fake-state scores of the fake batch.
double batch_conformity_gap(NonconformityMethod method, const ScorerState& real_state,
                            const ScorerState& fake_state, const Matrix& real_batch,
                            const Matrix& fake_batch, const std::vector<int>& real_labels,
                            const std::vector<int>& fake_labels, const MlpModel& disc);

struct ConformityGapResult {
    double value = 0.0;
    Matrix fake_grad;  // d value / d fake_batch
};

// Same value as batch_conformity_gap plus its gradient with respect to the
// fake batch (the Venn term differentiates through the interpolated
// isotonic fit and the discriminator).
ConformityGapResult batch_conformity_gap_grad(NonconformityMethod method,
                                              const ScorerState& real_state,
                                              const ScorerState& fake_state,
                                              const Matrix& real_batch, const Matrix& fake_batch,
                                              const std::vector<int>& real_labels,
                                              const std::vector<int>& fake_labels,
                                              const MlpModel& disc);

// Picks the candidate minimizing the Monte-Carlo estimate of
// E[ || x - G(z, y') ||^2 ] over the validation set, with one shared draw of
// (z, y') reused across candidates. `tuned_generator` maps a candidate to the
// generator trained (or fine-tuned) with it. Ties keep the earliest candidate.
WeightVector select_weights(const std::vector<WeightVector>& candidates,
                            const LabeledDataset& val_real,
                            const std::function<MlpModel(const WeightVector&)>& tuned_generator,
                            int latent_dim, Rng& rng);

void save_calibrator(const CalibratorState& state, const std::string& path);
CalibratorState load_calibrator(const std::string& path);

}  // namespace cgan
