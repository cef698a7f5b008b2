// Hot paths of the training loop and the evaluation pipeline, at the default
// network and batch sizes.
#include <benchmark/benchmark.h>

#include <vector>

#include "cgan/conformal.hpp"
#include "cgan/dataset.hpp"
#include "cgan/isotonic.hpp"
#include "cgan/matrix.hpp"
#include "cgan/metrics.hpp"
#include "cgan/mlp.hpp"
#include "cgan/rng.hpp"

using namespace cgan;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix m(rows, cols);
    Rng rng(seed);
    for (double& v : m.storage()) v = rng.next_normal();
    return m;
}

LabeledDataset random_dataset(std::size_t n, std::size_t dim, int num_classes,
                              std::uint64_t seed) {
    LabeledDataset d;
    d.features = random_matrix(n, dim, seed);
    d.num_classes = num_classes;
    Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
    for (std::size_t i = 0; i < n; ++i) {
        d.labels.push_back(i < static_cast<std::size_t>(num_classes)
                               ? static_cast<int>(i)
                               : static_cast<int>(rng.next_below(num_classes)));
    }
    return d;
}

void bm_forward(benchmark::State& state) {
    const MlpModel model = make_mlp({5, 64, 64, 1}, OutputActivation::Sigmoid, 7);
    const Matrix x = random_matrix(64, 5, 11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward(model, x));
    }
}

void bm_backward(benchmark::State& state) {
    const MlpModel model = make_mlp({5, 64, 64, 1}, OutputActivation::Sigmoid, 7);
    const Matrix x = random_matrix(64, 5, 11);
    ForwardCache cache;
    forward(model, x, cache);
    Matrix grad(64, 1);
    for (double& v : grad.storage()) v = 1.0 / 64.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(backward(model, cache, grad));
    }
}

void bm_adam_step(benchmark::State& state) {
    MlpModel model = make_mlp({5, 64, 64, 1}, OutputActivation::Sigmoid, 7);
    const Matrix x = random_matrix(64, 5, 11);
    ForwardCache cache;
    forward(model, x, cache);
    Matrix grad(64, 1);
    for (double& v : grad.storage()) v = 1.0 / 64.0;
    const GradientBundle grads = backward(model, cache, grad);
    for (auto _ : state) {
        adam_step(model, grads, 2e-4);
        benchmark::DoNotOptimize(model);
    }
}

void bm_grad_penalty(benchmark::State& state) {
    const MlpModel model = make_mlp({5, 64, 64, 1}, OutputActivation::Sigmoid, 7);
    const Matrix x = random_matrix(64, 5, 11);
    Rng rng(13);
    for (auto _ : state) {
        benchmark::DoNotOptimize(grad_penalty_surrogate(model, x, 1e-3, rng, 2));
    }
}

void bm_conformity_gap_grad(benchmark::State& state) {
    const MlpModel disc = make_mlp({5, 64, 64, 1}, OutputActivation::Sigmoid, 7);
    const LabeledDataset real = random_dataset(128, 2, 3, 21);
    const LabeledDataset fake = random_dataset(128, 2, 3, 22);
    const ScorerState rs = fit_scorer(real, disc, 5, &fake.features, &fake.labels);
    ScorerState fs = fit_scorer(fake, disc, 5, &real.features, &real.labels);
    fs.venn_model = rs.venn_model;
    const Matrix real_b = random_matrix(64, 2, 31);
    const Matrix fake_b = random_matrix(64, 2, 32);
    std::vector<int> real_y, fake_y;
    Rng rng(33);
    for (int i = 0; i < 64; ++i) {
        real_y.push_back(static_cast<int>(rng.next_below(3)));
        fake_y.push_back(static_cast<int>(rng.next_below(3)));
    }
    const NonconformityMethod m = static_cast<NonconformityMethod>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            batch_conformity_gap_grad(m, rs, fs, real_b, fake_b, real_y, fake_y, disc));
    }
}

void bm_pava_fit(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> xs(n), ys(n);
    Rng rng(41);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = static_cast<double>(i);
        ys[i] = rng.next_below(2) ? 1.0 : 0.0;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(pava_fit(xs, ys));
    }
}

void bm_weighted_score_batch(benchmark::State& state) {
    const MlpModel disc = make_mlp({5, 64, 64, 1}, OutputActivation::Sigmoid, 7);
    const LabeledDataset data = random_dataset(512, 2, 3, 51);
    const LabeledDataset pool = random_dataset(512, 2, 3, 52);
    const ScorerState scorer = fit_scorer(data, disc, 5, &pool.features, &pool.labels);
    const LabeledDataset probe = random_dataset(512, 2, 3, 53);
    const WeightVector weights = uniform_weights();
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            weighted_score_batch(scorer, weights, probe.features, probe.labels, disc));
    }
}

void bm_ks_mean(benchmark::State& state) {
    const Matrix a = random_matrix(2000, 2, 61);
    const Matrix b = random_matrix(2000, 2, 62);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ks_mean(a, b));
    }
}

}  // namespace

BENCHMARK(bm_forward);
BENCHMARK(bm_backward);
BENCHMARK(bm_adam_step);
BENCHMARK(bm_grad_penalty);
BENCHMARK(bm_conformity_gap_grad)->DenseRange(0, 3);
BENCHMARK(bm_pava_fit)->Arg(256)->Arg(2048);
BENCHMARK(bm_weighted_score_batch);
BENCHMARK(bm_ks_mean);
