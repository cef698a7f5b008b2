#include "cgan/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cgan/errors.hpp"

namespace cgan {

namespace {

constexpr double kGradPenaltyEps = 1e-3;
constexpr double kCoverageAlpha = 0.1;

double safe_log(double v) { return std::log(std::max(v, kLogClamp)); }

struct RefitState {
    ScorerState real_state;
    ScorerState fake_state;
    double coverage_quantile = 0.0;
};

LabeledDataset pool_dataset(Matrix features, std::vector<int> labels, int num_classes) {
    LabeledDataset out;
    out.features = std::move(features);
    out.labels = std::move(labels);
    out.num_classes = num_classes;
    return out;
}

// Refit pool = the current batch, padded with one extra point per class the
// batch is missing so every class-conditional mean stays defined.
RefitState refit_states(const MlpModel& gen, const MlpModel& disc, const Matrix& real_x,
                        const std::vector<int>& real_y,
                        const std::vector<std::vector<std::size_t>>& class_index,
                        const LabeledDataset& data, const TrainConfig& config, Rng& rng) {
    const std::size_t b = real_x.rows();
    const std::size_t d = real_x.cols();
    const int num_classes = config.num_classes;

    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (int y : real_y) seen[static_cast<std::size_t>(y)] = true;
    std::vector<int> missing;
    for (int c = 0; c < num_classes; ++c) {
        if (!seen[static_cast<std::size_t>(c)]) missing.push_back(c);
    }

    Matrix pool_x(b + missing.size(), d);
    std::vector<int> pool_y(real_y);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t c = 0; c < d; ++c) pool_x(r, c) = real_x(r, c);
    }
    for (std::size_t m = 0; m < missing.size(); ++m) {
        const auto& rows = class_index[static_cast<std::size_t>(missing[m])];
        const std::size_t pick = rows[static_cast<std::size_t>(rng.next_below(rows.size()))];
        for (std::size_t c = 0; c < d; ++c) pool_x(b + m, c) = data.features(pick, c);
        pool_y.push_back(missing[m]);
    }

    LatentBatch latent = sample_latent(b, config.latent_dim, num_classes, rng);
    std::vector<int> fake_y = latent.labels;
    std::fill(seen.begin(), seen.end(), false);
    for (int y : fake_y) seen[static_cast<std::size_t>(y)] = true;
    std::vector<int> fake_missing;
    for (int c = 0; c < num_classes; ++c) {
        if (!seen[static_cast<std::size_t>(c)]) fake_missing.push_back(c);
    }
    Matrix z(b + fake_missing.size(), latent.z.cols());
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) = latent.z(r, c);
    }
    for (std::size_t m = 0; m < fake_missing.size(); ++m) {
        for (std::size_t c = 0; c < z.cols(); ++c) z(b + m, c) = rng.next_normal();
        fake_y.push_back(fake_missing[m]);
    }
    const Matrix fake_x = forward(gen, append_onehot(z, fake_y, num_classes));
    if (!fake_x.all_finite()) {
        throw DivergenceError("generator produced non-finite samples during scorer refit");
    }

    RefitState out;
    const LabeledDataset real_pool = pool_dataset(std::move(pool_x), std::move(pool_y),
                                                  num_classes);
    out.real_state = fit_scorer(real_pool, disc, config.k_folds, &fake_x, &fake_y);
    out.fake_state = fit_scorer(pool_dataset(fake_x, fake_y, num_classes), disc, config.k_folds);
    out.fake_state.venn_model = out.real_state.venn_model;

    std::vector<double> scores = weighted_score_batch(out.real_state, config.weights,
                                                      real_pool.features, real_pool.labels, disc);
    std::sort(scores.begin(), scores.end());
    out.coverage_quantile = conformal_quantile(scores, kCoverageAlpha);
    return out;
}

TrainResult run_loop(MlpModel gen, MlpModel disc, const LabeledDataset& data,
                     const TrainConfig& config, Rng rng) {
    const std::size_t n = data.size();
    const std::size_t d = data.dim();

    std::vector<std::vector<std::size_t>> class_index(
        static_cast<std::size_t>(config.num_classes));
    for (std::size_t i = 0; i < n; ++i) {
        class_index[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
    for (int c = 0; c < config.num_classes; ++c) {
        if (class_index[static_cast<std::size_t>(c)].empty()) {
            throw ValidationError("train: class " + std::to_string(c) +
                                  " has no points in the training data");
        }
    }

    TrainResult result;
    result.log.reserve(config.iterations);
    RefitState states;

    for (std::size_t t = 1; t <= config.iterations; ++t) {
        Matrix real_x(config.batch_size, d);
        std::vector<int> real_y(config.batch_size);
        for (std::size_t i = 0; i < config.batch_size; ++i) {
            const auto pick = static_cast<std::size_t>(rng.next_below(n));
            for (std::size_t c = 0; c < d; ++c) real_x(i, c) = data.features(pick, c);
            real_y[i] = data.labels[pick];
        }

        try {
            if ((t - 1) % config.refit_period == 0) {
                states = refit_states(gen, disc, real_x, real_y, class_index, data, config, rng);
            }
            const DiscStepResult d_res =
                discriminator_step(gen, disc, real_x, real_y, config, rng);
            const GenStepResult g_res =
                generator_step(gen, disc, real_x, real_y, states.real_state, states.fake_state,
                               config, rng);

            const std::vector<double> scores = weighted_score_batch(
                states.real_state, config.weights, real_x, real_y, disc);
            std::size_t covered = 0;
            for (double s : scores) {
                if (s <= states.coverage_quantile) ++covered;
            }

            TrainRecord rec;
            rec.t = t;
            rec.loss_d = d_res.loss_d;
            rec.grad_penalty = d_res.grad_penalty;
            rec.loss_g = g_res.loss_g;
            rec.c_g = g_res.c_g;
            rec.r_icp = g_res.r_icp;
            rec.coverage_est = static_cast<double>(covered) / static_cast<double>(scores.size());
            result.log.push_back(rec);
        } catch (const DivergenceError& e) {
            throw DivergenceError("iteration " + std::to_string(t) + ": " + e.what());
        }
    }

    result.gen = std::move(gen);
    result.disc = std::move(disc);
    return result;
}

}  // namespace

void TrainConfig::validate(std::size_t dataset_size) const {
    if (latent_dim < 1) throw ValidationError("config: latent_dim must be >= 1");
    if (num_classes < 1) throw ValidationError("config: num_classes must be >= 1");
    if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    if (!(eta_g > 0.0) || !(eta_d > 0.0)) {
        throw ValidationError("config: learning rates must be > 0");
    }
    if (!(lambda_reg >= 0.0)) throw ValidationError("config: lambda_reg must be >= 0");
    if (!(mu_conform >= 0.0)) throw ValidationError("config: mu_conform must be >= 0");
    weights.validate();
    if (k_folds < 2) throw ValidationError("config: k_folds must be >= 2");
    if (static_cast<std::size_t>(k_folds) > batch_size) {
        throw ValidationError("config: k_folds must not exceed batch_size");
    }
    for (std::size_t h : hidden) {
        if (h < 1) throw ValidationError("config: hidden sizes must be >= 1");
    }
    if (refit_period < 1) throw ValidationError("config: refit_period must be >= 1");
    if (batch_size > dataset_size) {
        throw ValidationError("config: batch_size " + std::to_string(batch_size) +
                              " exceeds dataset size " + std::to_string(dataset_size));
    }
}

LatentBatch sample_latent(std::size_t b, int latent_dim, int num_classes, Rng& rng) {
    if (latent_dim < 1) throw ValidationError("sample_latent: latent_dim must be >= 1");
    if (num_classes < 1) throw ValidationError("sample_latent: num_classes must be >= 1");
    LatentBatch batch;
    batch.z = Matrix(b, static_cast<std::size_t>(latent_dim));
    batch.labels.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        batch.labels[i] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(num_classes)));
        for (std::size_t c = 0; c < batch.z.cols(); ++c) batch.z(i, c) = rng.next_normal();
    }
    return batch;
}

DiscStepResult discriminator_step(const MlpModel& gen, MlpModel& disc, const Matrix& real_x,
                                  const std::vector<int>& real_y, const TrainConfig& config,
                                  Rng& rng) {
    const std::size_t b = real_x.rows();
    if (b == 0) throw ValidationError("discriminator_step: empty batch");
    const double inv_b = 1.0 / static_cast<double>(b);

    const LatentBatch latent = sample_latent(b, config.latent_dim, config.num_classes, rng);
    const Matrix fake_x =
        forward(gen, append_onehot(latent.z, latent.labels, config.num_classes));

    const Matrix real_in = append_onehot(real_x, real_y, config.num_classes);
    const Matrix fake_in = append_onehot(fake_x, latent.labels, config.num_classes);
    ForwardCache real_cache, fake_cache;
    const Matrix p_real = forward(disc, real_in, real_cache);
    const Matrix p_fake = forward(disc, fake_in, fake_cache);

    double loss = 0.0;
    Matrix grad_real(b, 1), grad_fake(b, 1);
    for (std::size_t i = 0; i < b; ++i) {
        loss -= safe_log(p_real(i, 0)) + safe_log(1.0 - p_fake(i, 0));
        if (p_real(i, 0) >= kLogClamp) grad_real(i, 0) = -inv_b / p_real(i, 0);
        if (1.0 - p_fake(i, 0) >= kLogClamp) grad_fake(i, 0) = inv_b / (1.0 - p_fake(i, 0));
    }
    loss *= inv_b;

    GradientBundle grads = backward(disc, real_cache, grad_real);
    add_gradients(grads, backward(disc, fake_cache, grad_fake));

    DiscStepResult out;
    out.loss_d = loss;
    if (config.lambda_reg > 0.0) {
        const PenaltyResult pen =
            grad_penalty_surrogate(disc, real_in, kGradPenaltyEps, rng, real_x.cols());
        out.grad_penalty = pen.value;
        out.loss_d += config.lambda_reg * pen.value;
        add_gradients(grads, pen.grads, config.lambda_reg);
    }
    if (!std::isfinite(out.loss_d)) throw DivergenceError("discriminator loss non-finite");
    adam_step(disc, grads, config.eta_d);
    return out;
}

GenStepResult generator_step(MlpModel& gen, const MlpModel& disc, const Matrix& real_x,
                             const std::vector<int>& real_y, const ScorerState& real_state,
                             const ScorerState& fake_state, const TrainConfig& config, Rng& rng) {
    const std::size_t b = real_x.rows();
    if (b == 0) throw ValidationError("generator_step: empty batch");
    const double inv_b = 1.0 / static_cast<double>(b);
    config.weights.validate();

    const LatentBatch latent = sample_latent(b, config.latent_dim, config.num_classes, rng);
    ForwardCache gen_cache;
    const Matrix fake_x =
        forward(gen, append_onehot(latent.z, latent.labels, config.num_classes), gen_cache);

    ForwardCache disc_cache;
    const Matrix p = forward(disc, append_onehot(fake_x, latent.labels, config.num_classes),
                             disc_cache);

    double adv = 0.0;
    Matrix grad_p(b, 1);
    for (std::size_t i = 0; i < b; ++i) {
        adv -= safe_log(p(i, 0));
        if (p(i, 0) >= kLogClamp) grad_p(i, 0) = -inv_b / p(i, 0);
    }
    adv *= inv_b;

    const GradientBundle disc_back = backward(disc, disc_cache, grad_p);
    Matrix fake_grad(b, fake_x.cols());
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t c = 0; c < fake_x.cols(); ++c) {
            fake_grad(i, c) = disc_back.input_grad(i, c);
        }
    }

    GenStepResult out;
    for (NonconformityMethod m : kAllMethods) {
        const double lambda = config.weights[m];
        const bool track_icp = (m == NonconformityMethod::Icp);
        if (lambda == 0.0 && !track_icp) continue;
        if (config.mu_conform > 0.0 && lambda > 0.0) {
            const ConformityGapResult gap = batch_conformity_gap_grad(
                m, real_state, fake_state, real_x, fake_x, real_y, latent.labels, disc);
            if (track_icp) out.r_icp = gap.value;
            out.c_g += lambda * gap.value;
            axpy(fake_grad, gap.fake_grad, config.mu_conform * lambda);
        } else {
            const double value = batch_conformity_gap(m, real_state, fake_state, real_x, fake_x,
                                                      real_y, latent.labels, disc);
            if (track_icp) out.r_icp = value;
            out.c_g += lambda * value;
        }
    }
    out.loss_g = adv + config.mu_conform * out.c_g;
    if (!std::isfinite(out.loss_g)) throw DivergenceError("generator loss non-finite");

    const GradientBundle gen_grads = backward(gen, gen_cache, fake_grad);
    adam_step(gen, gen_grads, config.eta_g);
    return out;
}

TrainResult train(const LabeledDataset& data, const TrainConfig& config) {
    config.validate(data.size());
    if (data.num_classes != config.num_classes) {
        throw ValidationError("train: config num_classes " + std::to_string(config.num_classes) +
                              " does not match dataset classes " +
                              std::to_string(data.num_classes));
    }
    Rng root(config.seed);
    std::vector<std::size_t> gen_dims;
    gen_dims.push_back(static_cast<std::size_t>(config.latent_dim + config.num_classes));
    for (std::size_t h : config.hidden) gen_dims.push_back(h);
    gen_dims.push_back(data.dim());
    std::vector<std::size_t> disc_dims;
    disc_dims.push_back(data.dim() + static_cast<std::size_t>(config.num_classes));
    for (std::size_t h : config.hidden) disc_dims.push_back(h);
    disc_dims.push_back(1);

    MlpModel gen = make_mlp(gen_dims, OutputActivation::Linear, root.next_u64());
    MlpModel disc = make_mlp(disc_dims, OutputActivation::Sigmoid, root.next_u64());
    return run_loop(std::move(gen), std::move(disc), data, config, Rng(root.next_u64()));
}

TrainResult train_from(MlpModel gen, MlpModel disc, const LabeledDataset& data,
                       const TrainConfig& config) {
    config.validate(data.size());
    if (data.num_classes != config.num_classes) {
        throw ValidationError("train_from: config num_classes does not match dataset");
    }
    const auto k = static_cast<std::size_t>(config.num_classes);
    if (gen.input_dim() != static_cast<std::size_t>(config.latent_dim) + k ||
        gen.output_dim() != data.dim()) {
        throw ValidationError("train_from: generator shape does not match config");
    }
    if (disc.input_dim() != data.dim() + k || disc.output_dim() != 1) {
        throw ValidationError("train_from: discriminator shape does not match config");
    }
    return run_loop(std::move(gen), std::move(disc), data, config, Rng(config.seed));
}

LabeledDataset generate(const MlpModel& gen, std::size_t n, int num_classes, std::uint64_t seed) {
    if (num_classes < 1) throw ValidationError("generate: num_classes must be >= 1");
    const auto k = static_cast<std::size_t>(num_classes);
    if (gen.input_dim() <= k) throw ValidationError("generate: generator input too small");
    const int latent_dim = static_cast<int>(gen.input_dim() - k);
    Rng rng(seed);
    const LatentBatch latent = sample_latent(n, latent_dim, num_classes, rng);
    LabeledDataset out;
    out.features = forward(gen, append_onehot(latent.z, latent.labels, num_classes));
    out.labels = latent.labels;
    out.num_classes = num_classes;
    return out;
}

LabeledDataset generate(const MlpModel& gen, const std::vector<int>& labels, int num_classes,
                        std::uint64_t seed) {
    if (num_classes < 1) throw ValidationError("generate: num_classes must be >= 1");
    const auto k = static_cast<std::size_t>(num_classes);
    if (gen.input_dim() <= k) throw ValidationError("generate: generator input too small");
    const std::size_t latent_dim = gen.input_dim() - k;
    Rng rng(seed);
    Matrix z(labels.size(), latent_dim);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t c = 0; c < latent_dim; ++c) z(i, c) = rng.next_normal();
    }
    LabeledDataset out;
    out.features = forward(gen, append_onehot(z, labels, num_classes));
    out.labels = labels;
    out.num_classes = num_classes;
    return out;
}

void write_train_log(const std::vector<TrainRecord>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("write_train_log: cannot open " + path);
    for (const TrainRecord& rec : log) {
        nlohmann::ordered_json line;
        line["t"] = rec.t;
        line["loss_d"] = rec.loss_d;
        line["loss_g"] = rec.loss_g;
        line["r_icp"] = rec.r_icp;
        line["c_g"] = rec.c_g;
        line["grad_penalty"] = rec.grad_penalty;
        line["coverage_est"] = rec.coverage_est;
        out << line.dump() << '\n';
    }
    if (!out) throw RuntimeFailure("write_train_log: write failed for " + path);
}

}  // namespace cgan
