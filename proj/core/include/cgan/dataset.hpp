#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgan/matrix.hpp"

namespace cgan {

// Per-feature affine transform fitted by standardize(). Constant features get
// std 1 so the transform stays invertible.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    Matrix apply(const Matrix& features) const;
    Matrix invert(const Matrix& features) const;
};

// Feature matrix with integer class labels in 0..num_classes-1.
struct LabeledDataset {
    Matrix features;           // n x d
    std::vector<int> labels;   // length n
    int num_classes = 0;
    std::optional<Standardizer> standardizer;  // set once standardized

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
};

// Isotropic Gaussian blobs, one per class, labels drawn uniformly.
struct MixtureSpec {
    int num_classes = 3;
    int dim = 2;
    std::vector<std::vector<double>> means;  // num_classes x dim
    double stddev = 1.0;
    std::size_t n = 6000;
    std::uint64_t seed = 1;
};

// Class means on a circle of the given radius in the first two dimensions
// (for dim 1, spread on a line), remaining coordinates zero.
MixtureSpec default_mixture_spec(int num_classes = 3, int dim = 2, std::size_t n = 6000,
                                 std::uint64_t seed = 1, double radius = 4.0,
                                 double stddev = 1.0);

LabeledDataset make_gaussian_mixture(const MixtureSpec& spec);

// Fits per-feature mean/std and returns the transformed copy with the
// standardizer recorded. apply/invert round-trip within 1e-9.
LabeledDataset standardize(const LabeledDataset& data);

struct SplitFractions {
    double train = 0.6, calib = 0.15, val = 0.05, test = 0.2;
};

struct Splits {
    LabeledDataset train, calib, val, test;
};

// Seeded stratified split: pieces are disjoint, exhaustive, and every
// nonempty class keeps at least one point in train when the train fraction
// is positive.
Splits split(const LabeledDataset& data, const SplitFractions& fractions, std::uint64_t seed);

// CSV with header f0..f{d-1},label; UTF-8, LF, "." decimal separator.
LabeledDataset load_csv(const std::string& path);
void save_csv(const LabeledDataset& data, const std::string& path);

}  // namespace cgan
