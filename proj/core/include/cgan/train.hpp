#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgan/conformal.hpp"
#include "cgan/dataset.hpp"
#include "cgan/matrix.hpp"
#include "cgan/mlp.hpp"
#include "cgan/rng.hpp"

namespace cgan {

struct TrainConfig {
    int latent_dim = 8;
    int num_classes = 3;
    std::size_t batch_size = 64;
    std::size_t iterations = 3000;
    double eta_g = 2e-4;
    double eta_d = 2e-4;
    double lambda_reg = 0.1;
    double mu_conform = 1.0;
    WeightVector weights;  // uniform by default
    int k_folds = 5;
    std::vector<std::size_t> hidden = {64, 64};
    std::uint64_t seed = 1;
    std::size_t refit_period = 50;

    // Throws ValidationError on out-of-range fields or a batch size larger
    // than the dataset.
    void validate(std::size_t dataset_size) const;
};

struct TrainRecord {
    std::size_t t = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    double r_icp = 0.0;
    double c_g = 0.0;
    double grad_penalty = 0.0;
    double coverage_est = 0.0;
};

struct TrainResult {
    MlpModel gen;
    MlpModel disc;
    std::vector<TrainRecord> log;
};

struct LatentBatch {
    Matrix z;                // b x latent_dim, standard normal
    std::vector<int> labels; // uniform over classes
};

LatentBatch sample_latent(std::size_t b, int latent_dim, int num_classes, Rng& rng);

struct DiscStepResult {
    double loss_d = 0.0;
    double grad_penalty = 0.0;
};

// One Adam update of the discriminator on a real batch plus freshly drawn
// fakes. Consumes rng for the latent draw, then for penalty directions.
DiscStepResult discriminator_step(const MlpModel& gen, MlpModel& disc, const Matrix& real_x,
                                  const std::vector<int>& real_y, const TrainConfig& config,
                                  Rng& rng);

struct GenStepResult {
    double loss_g = 0.0;
    double c_g = 0.0;
    double r_icp = 0.0;
};

// One Adam update of the generator: non-saturating adversarial loss plus the
// weighted conformity-gap penalty, differentiated through the fake batch.
// Gap values are always computed for the log; their gradients only when
// mu_conform > 0.
GenStepResult generator_step(MlpModel& gen, const MlpModel& disc, const Matrix& real_x,
                             const std::vector<int>& real_y, const ScorerState& real_state,
                             const ScorerState& fake_state, const TrainConfig& config, Rng& rng);

// Full alternating loop on freshly initialized networks. Deterministic in
// config.seed; throws DivergenceError naming the iteration if a loss goes
// non-finite.
TrainResult train(const LabeledDataset& data, const TrainConfig& config);

// Same loop continuing from existing networks (used for weight-selection
// fine-tuning).
TrainResult train_from(MlpModel gen, MlpModel disc, const LabeledDataset& data,
                       const TrainConfig& config);

// n samples with uniform conditioning labels.
LabeledDataset generate(const MlpModel& gen, std::size_t n, int num_classes, std::uint64_t seed);
// Samples conditioned on the given labels.
LabeledDataset generate(const MlpModel& gen, const std::vector<int>& labels, int num_classes,
                        std::uint64_t seed);

// NDJSON, one record per line.
void write_train_log(const std::vector<TrainRecord>& log, const std::string& path);

}  // namespace cgan
