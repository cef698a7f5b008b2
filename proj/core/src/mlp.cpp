#include "cgan/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cgan/errors.hpp"

namespace cgan {

namespace {

double leaky(double v) { return v > 0.0 ? v : kLeakySlope * v; }
// Post-activation slope; leaky-relu keeps the sign, so post == 0 means the
// pre-activation was 0 and the negative-side slope applies.
double leaky_slope_from_post(double post) { return post > 0.0 ? 1.0 : kLeakySlope; }

// Clamped strictly inside (0,1) so saturated units keep the output contract
// (and a usable derivative) on arbitrarily large finite pre-activations.
double sigmoid(double v) {
    double s;
    if (v >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-v));
    } else {
        const double e = std::exp(v);
        s = e / (1.0 + e);
    }
    constexpr double lo = std::numeric_limits<double>::min();
    constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return std::clamp(s, lo, hi);
}

}  // namespace

bool GradientBundle::all_finite() const {
    for (const auto& g : weight_grads) {
        if (!g.all_finite()) return false;
    }
    for (const auto& g : bias_grads) {
        if (!g.all_finite()) return false;
    }
    return true;
}

MlpModel make_mlp(const std::vector<std::size_t>& layer_dims, OutputActivation output,
                  std::uint64_t seed) {
    if (layer_dims.size() < 2) {
        throw ValidationError("make_mlp: need at least input and output dims");
    }
    for (std::size_t d : layer_dims) {
        if (d == 0) throw ValidationError("make_mlp: zero layer dimension");
    }
    MlpModel model;
    model.layer_dims = layer_dims;
    model.output_activation = output;
    model.rng_seed = seed;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t in = layer_dims[l], out = layer_dims[l + 1];
        Matrix w(in, out);
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.next_normal();
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(1, out);
        model.adam.m_weights.emplace_back(in, out);
        model.adam.v_weights.emplace_back(in, out);
        model.adam.m_biases.emplace_back(1, out);
        model.adam.v_biases.emplace_back(1, out);
    }
    return model;
}

Matrix append_onehot(const Matrix& features, const std::vector<int>& labels, int num_classes) {
    if (features.rows() != labels.size()) {
        throw ValidationError("append_onehot: feature rows and label count differ");
    }
    if (num_classes < 1) throw ValidationError("append_onehot: num_classes must be >= 1");
    Matrix out(features.rows(), features.cols() + static_cast<std::size_t>(num_classes));
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const int y = labels[r];
        if (y < 0 || y >= num_classes) {
            throw ValidationError("append_onehot: label " + std::to_string(y) +
                                  " out of range at row " + std::to_string(r));
        }
        for (std::size_t c = 0; c < features.cols(); ++c) out(r, c) = features(r, c);
        out(r, features.cols() + static_cast<std::size_t>(y)) = 1.0;
    }
    return out;
}

GradientBundle zero_gradients(const MlpModel& model) {
    GradientBundle g;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        g.weight_grads.emplace_back(model.weights[l].rows(), model.weights[l].cols());
        g.bias_grads.emplace_back(1, model.biases[l].cols());
    }
    return g;
}

void add_gradients(GradientBundle& into, const GradientBundle& from, double scale) {
    for (std::size_t l = 0; l < into.weight_grads.size(); ++l) {
        axpy(into.weight_grads[l], from.weight_grads[l], scale);
        axpy(into.bias_grads[l], from.bias_grads[l], scale);
    }
}

Matrix forward(const MlpModel& model, const Matrix& input, ForwardCache& cache) {
    if (input.cols() != model.input_dim()) {
        throw ValidationError("forward: input has " + std::to_string(input.cols()) +
                              " columns, model expects " + std::to_string(model.input_dim()));
    }
    cache.activations.clear();
    cache.activations.reserve(model.num_layers() + 1);
    cache.activations.push_back(input);
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        Matrix z = matmul(cache.activations.back(), model.weights[l]);
        const auto& b = model.biases[l];
        for (std::size_t r = 0; r < z.rows(); ++r) {
            double* zr = z.data() + r * z.cols();
            for (std::size_t c = 0; c < z.cols(); ++c) zr[c] += b(0, c);
        }
        const bool last = (l + 1 == model.num_layers());
        if (!last) {
            for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = leaky(z.data()[i]);
        } else if (model.output_activation == OutputActivation::Sigmoid) {
            for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = sigmoid(z.data()[i]);
        }
        cache.activations.push_back(std::move(z));
    }
    return cache.activations.back();
}

Matrix forward(const MlpModel& model, const Matrix& input) {
    ForwardCache cache;
    return forward(model, input, cache);
}

GradientBundle backward(const MlpModel& model, const ForwardCache& cache,
                        const Matrix& output_grad) {
    const std::size_t L = model.num_layers();
    if (cache.activations.size() != L + 1) {
        throw ValidationError("backward: cache does not match model depth");
    }
    const Matrix& out = cache.activations.back();
    if (output_grad.rows() != out.rows() || output_grad.cols() != out.cols()) {
        throw ValidationError("backward: output_grad shape mismatch");
    }

    GradientBundle grads = zero_gradients(model);
    Matrix delta = output_grad;
    for (std::size_t li = L; li-- > 0;) {
        const Matrix& post = cache.activations[li + 1];
        if (li + 1 == L) {
            if (model.output_activation == OutputActivation::Sigmoid) {
                for (std::size_t i = 0; i < delta.size(); ++i) {
                    const double p = post.data()[i];
                    delta.data()[i] *= p * (1.0 - p);
                }
            }
        } else {
            for (std::size_t i = 0; i < delta.size(); ++i) {
                delta.data()[i] *= leaky_slope_from_post(post.data()[i]);
            }
        }
        grads.weight_grads[li] = matmul_at(cache.activations[li], delta);
        Matrix& bg = grads.bias_grads[li];
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            const double* dr = delta.data() + r * delta.cols();
            for (std::size_t c = 0; c < delta.cols(); ++c) bg(0, c) += dr[c];
        }
        delta = matmul_bt(delta, model.weights[li]);
    }
    grads.input_grad = std::move(delta);
    return grads;
}

GradientBundle backward(const MlpModel& model, const Matrix& input, const Matrix& output_grad) {
    ForwardCache cache;
    forward(model, input, cache);
    return backward(model, cache, output_grad);
}

void adam_step(MlpModel& model, const GradientBundle& grads, double lr) {
    if (lr <= 0.0) throw ValidationError("adam_step: lr must be positive");
    if (grads.weight_grads.size() != model.num_layers()) {
        throw ValidationError("adam_step: gradient bundle does not mirror model");
    }
    if (!grads.all_finite()) throw RuntimeFailure("adam_step: non-finite gradient entries");

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    model.adam.step += 1;
    const double t = static_cast<double>(model.adam.step);
    const double corr1 = 1.0 - std::pow(beta1, t);
    const double corr2 = 1.0 - std::pow(beta2, t);

    auto update = [&](Matrix& param, Matrix& m, Matrix& v, const Matrix& g) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double gi = g.data()[i];
            m.data()[i] = beta1 * m.data()[i] + (1.0 - beta1) * gi;
            v.data()[i] = beta2 * v.data()[i] + (1.0 - beta2) * gi * gi;
            const double mhat = m.data()[i] / corr1;
            const double vhat = v.data()[i] / corr2;
            param.data()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    };
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        if (grads.weight_grads[l].rows() != model.weights[l].rows() ||
            grads.weight_grads[l].cols() != model.weights[l].cols()) {
            throw ValidationError("adam_step: gradient shape mismatch at layer " +
                                  std::to_string(l));
        }
        update(model.weights[l], model.adam.m_weights[l], model.adam.v_weights[l],
               grads.weight_grads[l]);
        update(model.biases[l], model.adam.m_biases[l], model.adam.v_biases[l],
               grads.bias_grads[l]);
    }
}

PenaltyResult grad_penalty_surrogate(const MlpModel& model, const Matrix& x, double eps,
                                     Rng& rng, std::size_t perturb_cols) {
    if (eps <= 0.0) throw ValidationError("grad_penalty_surrogate: eps must be positive");
    if (perturb_cols == 0 || perturb_cols > x.cols()) {
        throw ValidationError("grad_penalty_surrogate: perturb_cols out of range");
    }
    const std::size_t batch = x.rows();
    PenaltyResult result;
    result.grads = zero_gradients(model);
    if (batch == 0) return result;

    Matrix shifted = x;
    for (std::size_t r = 0; r < batch; ++r) {
        // Fresh random unit direction per row over the perturbed columns.
        std::vector<double> u(perturb_cols);
        double norm = 0.0;
        for (std::size_t c = 0; c < perturb_cols; ++c) {
            u[c] = rng.next_normal();
            norm += u[c] * u[c];
        }
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < perturb_cols; ++c) {
            shifted(r, c) += eps * (u[c] / norm);
        }
    }

    ForwardCache base_cache, shift_cache;
    const Matrix base_out = forward(model, x, base_cache);
    const Matrix shift_out = forward(model, shifted, shift_cache);

    // value = (1/B) sum_{r,c} q_{rc}^2 with q = (f(x+eps*u) - f(x)) / eps.
    Matrix shift_grad(base_out.rows(), base_out.cols());
    Matrix base_grad(base_out.rows(), base_out.cols());
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < base_out.size(); ++i) {
        const double q = (shift_out.data()[i] - base_out.data()[i]) / eps;
        result.value += inv_b * q * q;
        const double coeff = 2.0 * inv_b * q / eps;
        shift_grad.data()[i] = coeff;
        base_grad.data()[i] = -coeff;
    }
    GradientBundle g_shift = backward(model, shift_cache, shift_grad);
    GradientBundle g_base = backward(model, base_cache, base_grad);
    add_gradients(g_shift, g_base);
    g_shift.input_grad = Matrix();
    result.grads = std::move(g_shift);
    return result;
}

PenaltyResult grad_penalty_surrogate(const MlpModel& model, const Matrix& x, double eps,
                                     Rng& rng) {
    return grad_penalty_surrogate(model, x, eps, rng, x.cols());
}

namespace {

nlohmann::json matrix_to_flat(const Matrix& m) { return nlohmann::json(m.storage()); }

Matrix matrix_from_flat(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                        const char* what) {
    Matrix m(rows, cols);
    if (!j.is_array() || j.size() != rows * cols) {
        throw ValidationError(std::string("checkpoint: bad ") + what);
    }
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = j[i].get<double>();
    return m;
}

std::string activation_tag(const MlpModel& model, std::size_t layer) {
    if (layer + 1 < model.num_layers()) return "leaky_relu(0.2)";
    return model.output_activation == OutputActivation::Sigmoid ? "sigmoid" : "linear";
}

}  // namespace

void save_checkpoint(const MlpModel& model, const std::string& path) {
    nlohmann::json j;
    j["layer_dims"] = model.layer_dims;
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    nlohmann::json activations = nlohmann::json::array();
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        weights.push_back(matrix_to_flat(model.weights[l]));
        biases.push_back(matrix_to_flat(model.biases[l]));
        activations.push_back(activation_tag(model, l));
    }
    j["weights"] = std::move(weights);
    j["biases"] = std::move(biases);
    j["activations"] = std::move(activations);
    nlohmann::json adam;
    adam["step"] = model.adam.step;
    nlohmann::json mw = nlohmann::json::array(), vw = nlohmann::json::array();
    nlohmann::json mb = nlohmann::json::array(), vb = nlohmann::json::array();
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        mw.push_back(matrix_to_flat(model.adam.m_weights[l]));
        vw.push_back(matrix_to_flat(model.adam.v_weights[l]));
        mb.push_back(matrix_to_flat(model.adam.m_biases[l]));
        vb.push_back(matrix_to_flat(model.adam.v_biases[l]));
    }
    adam["m_weights"] = std::move(mw);
    adam["v_weights"] = std::move(vw);
    adam["m_biases"] = std::move(mb);
    adam["v_biases"] = std::move(vb);
    j["adam"] = std::move(adam);
    j["rng_state"] = model.rng_seed;

    std::ofstream out(path);
    if (!out) throw RuntimeFailure("save_checkpoint: cannot open " + path);
    out << j.dump(2) << '\n';
    if (!out) throw RuntimeFailure("save_checkpoint: write failed for " + path);
}

MlpModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("load_checkpoint: invalid JSON in " + path + ": " + e.what());
    }
    for (const char* key : {"layer_dims", "weights", "biases", "activations", "adam", "rng_state"}) {
        if (!j.contains(key)) {
            throw ValidationError("load_checkpoint: missing field \"" + std::string(key) + "\"");
        }
    }
    MlpModel model;
    model.layer_dims = j["layer_dims"].get<std::vector<std::size_t>>();
    if (model.layer_dims.size() < 2) throw ValidationError("load_checkpoint: bad layer_dims");
    const std::size_t L = model.layer_dims.size() - 1;
    const auto& acts = j["activations"];
    if (!acts.is_array() || acts.size() != L) {
        throw ValidationError("load_checkpoint: bad activations");
    }
    const std::string out_tag = acts[L - 1].get<std::string>();
    if (out_tag == "sigmoid") {
        model.output_activation = OutputActivation::Sigmoid;
    } else if (out_tag == "linear") {
        model.output_activation = OutputActivation::Linear;
    } else {
        throw ValidationError("load_checkpoint: unknown output activation \"" + out_tag + "\"");
    }
    const auto& adam = j["adam"];
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t in = model.layer_dims[l], out = model.layer_dims[l + 1];
        model.weights.push_back(matrix_from_flat(j["weights"][l], in, out, "weights"));
        model.biases.push_back(matrix_from_flat(j["biases"][l], 1, out, "biases"));
        model.adam.m_weights.push_back(matrix_from_flat(adam["m_weights"][l], in, out, "adam m"));
        model.adam.v_weights.push_back(matrix_from_flat(adam["v_weights"][l], in, out, "adam v"));
        model.adam.m_biases.push_back(matrix_from_flat(adam["m_biases"][l], 1, out, "adam m"));
        model.adam.v_biases.push_back(matrix_from_flat(adam["v_biases"][l], 1, out, "adam v"));
        if (!model.weights.back().all_finite() || !model.biases.back().all_finite()) {
            throw ValidationError("load_checkpoint: non-finite parameters");
        }
    }
    model.adam.step = adam["step"].get<std::int64_t>();
    if (model.adam.step < 0) throw ValidationError("load_checkpoint: negative adam step");
    model.rng_seed = j["rng_state"].get<std::uint64_t>();
    return model;
}

}  // namespace cgan
