#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgan/matrix.hpp"
#include "cgan/rng.hpp"

namespace cgan {

enum class OutputActivation { Linear, Sigmoid };

// Hidden layers are leaky-relu with this negative-side slope; the subgradient
// at zero is defined as the negative-side slope.
inline constexpr double kLeakySlope = 0.2;

// Losses use log(max(p, kLogClamp)) throughout.
inline constexpr double kLogClamp = 1e-12;

struct AdamState {
    std::vector<Matrix> m_weights, v_weights;
    std::vector<Matrix> m_biases, v_biases;
    std::int64_t step = 0;
};

// Feedforward network parameters plus optimizer state. Value type: copies are
// independent, and a trained model is safe to share read-only across threads.
struct MlpModel {
    std::vector<std::size_t> layer_dims;   // input, hidden..., output
    std::vector<Matrix> weights;           // layer l: dims[l] x dims[l+1]
    std::vector<Matrix> biases;            // layer l: 1 x dims[l+1]
    OutputActivation output_activation = OutputActivation::Linear;
    AdamState adam;
    std::uint64_t rng_seed = 0;

    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
};

// Gradient mirrors of a model's parameters, plus the gradient with respect to
// the network input (filled by backward).
struct GradientBundle {
    std::vector<Matrix> weight_grads;
    std::vector<Matrix> bias_grads;
    Matrix input_grad;

    bool all_finite() const;
};

// Post-activation values per layer; activations[0] is the input batch.
struct ForwardCache {
    std::vector<Matrix> activations;
};

// He-style initialization, deterministic in the seed.
MlpModel make_mlp(const std::vector<std::size_t>& layer_dims, OutputActivation output,
                  std::uint64_t seed);

// [features | one-hot(label)] rows, the conditional-network input layout.
Matrix append_onehot(const Matrix& features, const std::vector<int>& labels, int num_classes);

GradientBundle zero_gradients(const MlpModel& model);
void add_gradients(GradientBundle& into, const GradientBundle& from, double scale = 1.0);

Matrix forward(const MlpModel& model, const Matrix& input);
Matrix forward(const MlpModel& model, const Matrix& input, ForwardCache& cache);

// Reverse-mode pass. output_grad holds dLoss/dOutput for the batch that
// produced `cache`; the result carries exact parameter gradients and the
// input gradient for the piecewise-smooth network.
GradientBundle backward(const MlpModel& model, const ForwardCache& cache,
                        const Matrix& output_grad);

// Convenience: forward + backward for callers that do not keep the cache.
GradientBundle backward(const MlpModel& model, const Matrix& input, const Matrix& output_grad);

// One bias-corrected Adam update (beta1=0.9, beta2=0.999, eps=1e-8).
// Throws on non-finite gradient entries.
void adam_step(MlpModel& model, const GradientBundle& grads, double lr);

struct PenaltyResult {
    double value = 0.0;
    GradientBundle grads;
};

// Directional finite-difference surrogate for the squared input-gradient
// penalty: (1/B) sum_i ((f(x_i + eps*u_i) - f(x_i)) / eps)^2 with a fresh
// random unit direction u_i per row, summed over output columns. Only the
// first `perturb_cols` input columns are perturbed (label columns stay put).
// The parameter gradient comes from ordinary backprop through both passes.
PenaltyResult grad_penalty_surrogate(const MlpModel& model, const Matrix& x, double eps,
                                     Rng& rng, std::size_t perturb_cols);
PenaltyResult grad_penalty_surrogate(const MlpModel& model, const Matrix& x, double eps,
                                     Rng& rng);

// Checkpoint IO. A single JSON document; the numeric payload round-trips
// bit-exactly.
void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace cgan
