#include "cgan/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cgan/errors.hpp"

namespace cgan {

namespace {

using nlohmann::json;

double distance_to(std::span<const double> x, const std::vector<double>& mean) {
    return euclidean_distance(x, std::span<const double>(mean));
}

double cross_out_of_sample(const CrossFoldState& cross, std::span<const double> x) {
    double sum = 0.0;
    for (const auto& mu : cross.complement_means) sum += distance_to(x, mu);
    const double k = static_cast<double>(cross.k);
    return sum / (k * k);
}

void check_point(const ScorerState& state, std::span<const double> x) {
    if (x.size() != state.dim()) {
        throw ValidationError("score: point dimension " + std::to_string(x.size()) +
                              " does not match fitted dimension " + std::to_string(state.dim()));
    }
}

double venn_from_output(const ScorerState& state, double disc_output) {
    return 1.0 - state.venn_model(disc_output);
}

// Per-row scores for one method, with a single discriminator pass for Venn.
std::vector<double> method_scores_batch(NonconformityMethod method, const ScorerState& state,
                                        const Matrix& features, const std::vector<int>& labels,
                                        const MlpModel& disc) {
    if (features.rows() != labels.size()) {
        throw ValidationError("score: feature rows and label count differ");
    }
    std::vector<double> out(features.rows(), 0.0);
    if (method == NonconformityMethod::VennAbers) {
        const Matrix p = forward(disc, append_onehot(features, labels, state.num_classes));
        for (std::size_t r = 0; r < features.rows(); ++r) {
            out[r] = venn_from_output(state, p(r, 0));
        }
        return out;
    }
    for (std::size_t r = 0; r < features.rows(); ++r) {
        out[r] = score(method, state, features.row(r), labels[r], disc);
    }
    return out;
}

json json_vector(const std::vector<double>& v) { return json(v); }

std::vector<double> parse_double_vector(const json& j, const std::string& field) {
    if (!j.is_array()) throw ValidationError("calibrator file: " + field + " must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_number()) {
            throw ValidationError("calibrator file: " + field + " has a non-numeric entry");
        }
        out.push_back(e.get<double>());
    }
    return out;
}

const json& require_field(const json& j, const char* field, const char* where) {
    const auto it = j.find(field);
    if (it == j.end()) {
        throw ValidationError(std::string("calibrator file: missing field \"") + field + "\" in " +
                              where);
    }
    return *it;
}

}  // namespace

const char* method_name(NonconformityMethod m) {
    switch (m) {
        case NonconformityMethod::Icp: return "icp";
        case NonconformityMethod::Mondrian: return "mondrian";
        case NonconformityMethod::CrossConformal: return "cross_conformal";
        case NonconformityMethod::VennAbers: return "venn_abers";
    }
    throw ValidationError("method_name: unknown method");
}

void WeightVector::validate() const {
    double sum = 0.0;
    for (double l : lambda) {
        if (!(l >= 0.0)) throw ValidationError("weights: entries must be >= 0");
        sum += l;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("weights: entries sum to " + std::to_string(sum) + ", expected 1");
    }
}

WeightVector uniform_weights() { return WeightVector{}; }

WeightVector unit_weight(NonconformityMethod m) {
    WeightVector w;
    w.lambda = {0.0, 0.0, 0.0, 0.0};
    w.lambda[static_cast<int>(m)] = 1.0;
    return w;
}

std::vector<WeightVector> simplex_grid(double step) {
    if (!(step > 0.0) || step > 1.0) throw ValidationError("simplex_grid: step must be in (0,1]");
    const double mf = std::round(1.0 / step);
    if (std::abs(mf * step - 1.0) > 1e-9) {
        throw ValidationError("simplex_grid: 1/step must be an integer");
    }
    const int m = static_cast<int>(mf);
    std::vector<WeightVector> grid;
    for (int i0 = 0; i0 <= m; ++i0) {
        for (int i1 = 0; i0 + i1 <= m; ++i1) {
            for (int i2 = 0; i0 + i1 + i2 <= m; ++i2) {
                const int i3 = m - i0 - i1 - i2;
                WeightVector w;
                w.lambda = {static_cast<double>(i0) / m, static_cast<double>(i1) / m,
                            static_cast<double>(i2) / m, static_cast<double>(i3) / m};
                grid.push_back(w);
            }
        }
    }
    return grid;
}

ScorerState fit_scorer(const LabeledDataset& data, const MlpModel& disc, int k,
                       const Matrix* fake_features, const std::vector<int>* fake_labels) {
    const std::size_t n = data.size();
    if (n == 0) throw ValidationError("fit_scorer: empty dataset");
    if (data.num_classes < 2) {
        throw ValidationError("fit_scorer: Mondrian needs at least two classes, got " +
                              std::to_string(data.num_classes));
    }
    if (k < 2) throw ValidationError("fit_scorer: fold count must be >= 2");
    if (static_cast<std::size_t>(k) > n) {
        throw ValidationError("fit_scorer: fold count " + std::to_string(k) +
                              " exceeds dataset size " + std::to_string(n));
    }
    const std::size_t d = data.dim();
    if (disc.input_dim() != d + static_cast<std::size_t>(data.num_classes)) {
        throw ValidationError("fit_scorer: discriminator input dimension mismatch");
    }
    if (disc.output_dim() != 1) {
        throw ValidationError("fit_scorer: discriminator must have one output");
    }

    ScorerState state;
    state.num_classes = data.num_classes;
    state.icp_mean.assign(d, 0.0);
    std::vector<std::vector<double>> class_sums(static_cast<std::size_t>(data.num_classes),
                                                std::vector<double>(d, 0.0));
    std::vector<std::size_t> class_counts(static_cast<std::size_t>(data.num_classes), 0);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = data.features.row(r);
        const auto y = static_cast<std::size_t>(data.labels[r]);
        if (y >= class_sums.size()) {
            throw ValidationError("fit_scorer: label out of range at row " + std::to_string(r));
        }
        class_counts[y] += 1;
        for (std::size_t c = 0; c < d; ++c) {
            state.icp_mean[c] += row[c];
            class_sums[y][c] += row[c];
        }
    }
    for (std::size_t c = 0; c < d; ++c) state.icp_mean[c] /= static_cast<double>(n);
    state.mondrian_means.resize(class_sums.size());
    for (std::size_t y = 0; y < class_sums.size(); ++y) {
        if (class_counts[y] == 0) {
            throw ValidationError("fit_scorer: class " + std::to_string(y) +
                                  " has no points (Mondrian undefined)");
        }
        state.mondrian_means[y] = class_sums[y];
        for (double& v : state.mondrian_means[y]) v /= static_cast<double>(class_counts[y]);
    }

    state.cross.k = k;
    state.cross.fold_of.resize(n);
    std::vector<std::vector<double>> fold_sums(static_cast<std::size_t>(k),
                                               std::vector<double>(d, 0.0));
    std::vector<std::size_t> fold_counts(static_cast<std::size_t>(k), 0);
    for (std::size_t r = 0; r < n; ++r) {
        // Contiguous index blocks: fold j covers [j*n/k, (j+1)*n/k).
        const auto fold = static_cast<std::size_t>(r * static_cast<std::size_t>(k) / n);
        state.cross.fold_of[r] = static_cast<int>(fold);
        fold_counts[fold] += 1;
        const auto row = data.features.row(r);
        for (std::size_t c = 0; c < d; ++c) fold_sums[fold][c] += row[c];
    }
    std::vector<double> total(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) total[c] = state.icp_mean[c] * static_cast<double>(n);
    state.cross.complement_means.resize(static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < static_cast<std::size_t>(k); ++j) {
        const std::size_t rest = n - fold_counts[j];
        state.cross.complement_means[j].assign(d, 0.0);
        for (std::size_t c = 0; c < d; ++c) {
            state.cross.complement_means[j][c] =
                (total[c] - fold_sums[j][c]) / static_cast<double>(rest);
        }
    }

    // Isotonic real/fake regression on discriminator outputs.
    std::vector<std::pair<double, double>> pool;
    {
        const Matrix p_real = forward(disc, append_onehot(data.features, data.labels,
                                                          data.num_classes));
        for (std::size_t r = 0; r < n; ++r) pool.emplace_back(p_real(r, 0), 1.0);
    }
    if (fake_features != nullptr) {
        if (fake_labels == nullptr || fake_features->rows() != fake_labels->size()) {
            throw ValidationError("fit_scorer: generated pool needs matching labels");
        }
        if (fake_features->cols() != d) {
            throw ValidationError("fit_scorer: generated pool dimension mismatch");
        }
        const Matrix p_fake = forward(disc, append_onehot(*fake_features, *fake_labels,
                                                          data.num_classes));
        for (std::size_t r = 0; r < p_fake.rows(); ++r) pool.emplace_back(p_fake(r, 0), 0.0);
    }
    std::sort(pool.begin(), pool.end());
    std::vector<double> xs, ys;
    xs.reserve(pool.size());
    ys.reserve(pool.size());
    for (const auto& [p, t] : pool) {
        xs.push_back(p);
        ys.push_back(t);
    }
    state.venn_model = pava_fit(xs, ys);
    return state;
}

double score(NonconformityMethod method, const ScorerState& state, std::span<const double> x,
             int y, const MlpModel& disc) {
    check_point(state, x);
    switch (method) {
        case NonconformityMethod::Icp:
            return distance_to(x, state.icp_mean);
        case NonconformityMethod::Mondrian: {
            if (y < 0 || static_cast<std::size_t>(y) >= state.mondrian_means.size()) {
                throw ValidationError("score: class " + std::to_string(y) +
                                      " has no fitted Mondrian mean");
            }
            return distance_to(x, state.mondrian_means[static_cast<std::size_t>(y)]);
        }
        case NonconformityMethod::CrossConformal:
            return cross_out_of_sample(state.cross, x);
        case NonconformityMethod::VennAbers: {
            Matrix input(1, x.size());
            std::copy(x.begin(), x.end(), input.data());
            const Matrix p = forward(disc, append_onehot(input, {y}, state.num_classes));
            return venn_from_output(state, p(0, 0));
        }
    }
    throw ValidationError("score: unknown method");
}

double score_in_fold(const ScorerState& state, std::span<const double> x, int fold) {
    check_point(state, x);
    if (fold < 0 || static_cast<std::size_t>(fold) >= state.cross.complement_means.size()) {
        throw ValidationError("score_in_fold: fold " + std::to_string(fold) + " out of range");
    }
    return distance_to(x, state.cross.complement_means[static_cast<std::size_t>(fold)]) /
           static_cast<double>(state.cross.k);
}

double weighted_score(const ScorerState& state, const WeightVector& weights,
                      std::span<const double> x, int y, const MlpModel& disc) {
    weights.validate();
    double total = 0.0;
    for (NonconformityMethod m : kAllMethods) {
        const double lambda = weights[m];
        if (lambda == 0.0) continue;
        total += lambda * score(m, state, x, y, disc);
    }
    return total;
}

std::vector<double> weighted_score_batch(const ScorerState& state, const WeightVector& weights,
                                         const Matrix& features, const std::vector<int>& labels,
                                         const MlpModel& disc) {
    weights.validate();
    std::vector<double> total(features.rows(), 0.0);
    for (NonconformityMethod m : kAllMethods) {
        const double lambda = weights[m];
        if (lambda == 0.0) continue;
        const std::vector<double> s = method_scores_batch(m, state, features, labels, disc);
        for (std::size_t r = 0; r < total.size(); ++r) total[r] += lambda * s[r];
    }
    return total;
}

double conformal_quantile(const std::vector<double>& calib_scores, double alpha) {
    if (calib_scores.empty()) throw ValidationError("conformal_quantile: empty calibration set");
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ValidationError("conformal_quantile: alpha must be in (0,1)");
    }
    for (std::size_t i = 1; i < calib_scores.size(); ++i) {
        if (calib_scores[i] < calib_scores[i - 1]) {
            throw ValidationError("conformal_quantile: scores not sorted");
        }
    }
    const auto n = calib_scores.size();
    const double rank = std::ceil(static_cast<double>(n + 1) * (1.0 - alpha));
    if (rank > static_cast<double>(n)) return std::numeric_limits<double>::infinity();
    return calib_scores[static_cast<std::size_t>(rank) - 1];
}

CalibratorState calibrate(const ScorerState& scorer, const WeightVector& weights,
                          const LabeledDataset& calib, const MlpModel& disc, double alpha) {
    if (calib.size() == 0) throw ValidationError("calibrate: empty calibration set");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("calibrate: alpha must be in (0,1)");
    CalibratorState state;
    state.scorer = scorer;
    state.weights = weights;
    state.calib_scores = weighted_score_batch(scorer, weights, calib.features, calib.labels, disc);
    std::sort(state.calib_scores.begin(), state.calib_scores.end());
    state.alpha = alpha;
    return state;
}

bool region_contains(const CalibratorState& calibrator, std::span<const double> x, int y,
                     const MlpModel& disc) {
    const double s = weighted_score(calibrator.scorer, calibrator.weights, x, y, disc);
    return s <= calibrator.quantile();
}

double p_value(const CalibratorState& calibrator, std::span<const double> x, int y,
               const MlpModel& disc) {
    const double s = weighted_score(calibrator.scorer, calibrator.weights, x, y, disc);
    const auto& cs = calibrator.calib_scores;
    const auto first_ge = std::lower_bound(cs.begin(), cs.end(), s);
    const auto count = static_cast<double>(cs.end() - first_ge);
    return (1.0 + count) / (static_cast<double>(cs.size()) + 1.0);
}

double batch_conformity_gap(NonconformityMethod method, const ScorerState& real_state,
                            const ScorerState& fake_state, const Matrix& real_batch,
                            const Matrix& fake_batch, const std::vector<int>& real_labels,
                            const std::vector<int>& fake_labels, const MlpModel& disc) {
    if (real_batch.rows() != fake_batch.rows()) {
        throw ValidationError("batch_conformity_gap: batch size mismatch");
    }
    if (real_batch.rows() == 0) throw ValidationError("batch_conformity_gap: empty batch");
    const std::vector<double> sr =
        method_scores_batch(method, real_state, real_batch, real_labels, disc);
    const std::vector<double> sf =
        method_scores_batch(method, fake_state, fake_batch, fake_labels, disc);
    double sum = 0.0;
    for (std::size_t i = 0; i < sr.size(); ++i) sum += std::abs(sr[i] - sf[i]);
    return sum / static_cast<double>(sr.size());
}

ConformityGapResult batch_conformity_gap_grad(NonconformityMethod method,
                                              const ScorerState& real_state,
                                              const ScorerState& fake_state,
                                              const Matrix& real_batch, const Matrix& fake_batch,
                                              const std::vector<int>& real_labels,
                                              const std::vector<int>& fake_labels,
                                              const MlpModel& disc) {
    if (real_batch.rows() != fake_batch.rows()) {
        throw ValidationError("batch_conformity_gap: batch size mismatch");
    }
    if (real_batch.rows() == 0) throw ValidationError("batch_conformity_gap: empty batch");
    const std::size_t b = real_batch.rows();
    const std::size_t d = fake_batch.cols();
    const double inv_b = 1.0 / static_cast<double>(b);

    ConformityGapResult result;
    result.fake_grad = Matrix(b, d);

    if (method == NonconformityMethod::VennAbers) {
        const std::vector<double> sr =
            method_scores_batch(method, real_state, real_batch, real_labels, disc);
        ForwardCache cache;
        const Matrix input = append_onehot(fake_batch, fake_labels, fake_state.num_classes);
        const Matrix p = forward(disc, input, cache);
        Matrix output_grad(b, 1);
        double sum = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const double sf = venn_from_output(fake_state, p(i, 0));
            const double diff = sr[i] - sf;
            sum += std::abs(diff);
            const double sign = (diff > 0.0) ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            // d|diff|/d sf = -sign; d sf/d p = -slope; chain through the
            // discriminator for d p/d x.
            output_grad(i, 0) = inv_b * sign * fake_state.venn_model.slope(p(i, 0));
        }
        result.value = sum * inv_b;
        const GradientBundle g = backward(disc, cache, output_grad);
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t c = 0; c < d; ++c) result.fake_grad(i, c) = g.input_grad(i, c);
        }
        return result;
    }

    const std::vector<double> sr =
        method_scores_batch(method, real_state, real_batch, real_labels, disc);
    const std::vector<double> sf =
        method_scores_batch(method, fake_state, fake_batch, fake_labels, disc);
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double diff = sr[i] - sf[i];
        sum += std::abs(diff);
        const double sign = (diff > 0.0) ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        const double coef = -inv_b * sign;
        if (coef == 0.0) continue;
        const auto x = fake_batch.row(i);
        auto add_unit_toward = [&](const std::vector<double>& mu, double scale) {
            const double dist = distance_to(x, mu);
            if (dist == 0.0) return;
            for (std::size_t c = 0; c < d; ++c) {
                result.fake_grad(i, c) += scale * (x[c] - mu[c]) / dist;
            }
        };
        switch (method) {
            case NonconformityMethod::Icp:
                add_unit_toward(fake_state.icp_mean, coef);
                break;
            case NonconformityMethod::Mondrian:
                add_unit_toward(
                    fake_state.mondrian_means[static_cast<std::size_t>(fake_labels[i])], coef);
                break;
            case NonconformityMethod::CrossConformal: {
                const double k = static_cast<double>(fake_state.cross.k);
                for (const auto& mu : fake_state.cross.complement_means) {
                    add_unit_toward(mu, coef / (k * k));
                }
                break;
            }
            case NonconformityMethod::VennAbers:
                break;
        }
    }
    result.value = sum * inv_b;
    return result;
}

WeightVector select_weights(const std::vector<WeightVector>& candidates,
                            const LabeledDataset& val_real,
                            const std::function<MlpModel(const WeightVector&)>& tuned_generator,
                            int latent_dim, Rng& rng) {
    if (candidates.empty()) throw ValidationError("select_weights: empty candidate grid");
    if (val_real.size() == 0) throw ValidationError("select_weights: empty validation set");
    if (latent_dim < 1) throw ValidationError("select_weights: latent_dim must be >= 1");
    const std::size_t n = val_real.size();
    const int num_classes = val_real.num_classes;
    if (num_classes < 1) throw ValidationError("select_weights: validation set has no classes");

    // One shared Monte-Carlo draw so candidates face identical noise.
    Matrix z(n, static_cast<std::size_t>(latent_dim));
    std::vector<int> y_prime(n);
    for (std::size_t i = 0; i < n; ++i) {
        y_prime[i] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(num_classes)));
        for (std::size_t c = 0; c < z.cols(); ++c) z(i, c) = rng.next_normal();
    }
    const Matrix gen_input = append_onehot(z, y_prime, num_classes);

    std::size_t best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        candidates[ci].validate();
        const MlpModel gen = tuned_generator(candidates[ci]);
        if (gen.input_dim() != gen_input.cols() || gen.output_dim() != val_real.dim()) {
            throw ValidationError("select_weights: generator shape mismatch for candidate " +
                                  std::to_string(ci));
        }
        const Matrix fake = forward(gen, gen_input);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < fake.cols(); ++c) {
                const double diff = val_real.features(i, c) - fake(i, c);
                sum += diff * diff;
            }
        }
        const double value = sum / static_cast<double>(n);
        if (value < best_value) {
            best_value = value;
            best = ci;
        }
    }
    return candidates[best];
}

void save_calibrator(const CalibratorState& state, const std::string& path) {
    json doc;
    doc["alpha"] = state.alpha;
    doc["weights"] = state.weights.lambda;
    doc["calib_scores"] = json_vector(state.calib_scores);
    json scorer;
    scorer["num_classes"] = state.scorer.num_classes;
    scorer["icp_mean"] = json_vector(state.scorer.icp_mean);
    scorer["mondrian_means"] = state.scorer.mondrian_means;
    scorer["cross"] = {{"k", state.scorer.cross.k},
                       {"fold_of", state.scorer.cross.fold_of},
                       {"complement_means", state.scorer.cross.complement_means}};
    scorer["venn"] = {{"breakpoints", json_vector(state.scorer.venn_model.breakpoints)},
                      {"values", json_vector(state.scorer.venn_model.values)}};
    doc["scorer"] = std::move(scorer);
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("save_calibrator: cannot open " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw RuntimeFailure("save_calibrator: write failed for " + path);
}

CalibratorState load_calibrator(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_calibrator: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError("load_calibrator: malformed JSON in " + path + ": " + e.what());
    }
    try {
        CalibratorState state;
        state.alpha = require_field(doc, "alpha", "document").get<double>();
        const auto& w = require_field(doc, "weights", "document");
        if (!w.is_array() || w.size() != 4) {
            throw ValidationError("calibrator file: weights must be an array of 4 entries");
        }
        for (int i = 0; i < 4; ++i) state.weights.lambda[static_cast<std::size_t>(i)] = w[i].get<double>();
        state.calib_scores = parse_double_vector(require_field(doc, "calib_scores", "document"),
                                                 "calib_scores");
        const json& sc = require_field(doc, "scorer", "document");
        state.scorer.num_classes = require_field(sc, "num_classes", "scorer").get<int>();
        state.scorer.icp_mean = parse_double_vector(require_field(sc, "icp_mean", "scorer"),
                                                    "icp_mean");
        for (const auto& mu : require_field(sc, "mondrian_means", "scorer")) {
            state.scorer.mondrian_means.push_back(parse_double_vector(mu, "mondrian_means"));
        }
        const json& cross = require_field(sc, "cross", "scorer");
        state.scorer.cross.k = require_field(cross, "k", "cross").get<int>();
        state.scorer.cross.fold_of =
            require_field(cross, "fold_of", "cross").get<std::vector<int>>();
        for (const auto& mu : require_field(cross, "complement_means", "cross")) {
            state.scorer.cross.complement_means.push_back(
                parse_double_vector(mu, "complement_means"));
        }
        const json& venn = require_field(sc, "venn", "scorer");
        state.scorer.venn_model.breakpoints =
            parse_double_vector(require_field(venn, "breakpoints", "venn"), "venn.breakpoints");
        state.scorer.venn_model.values =
            parse_double_vector(require_field(venn, "values", "venn"), "venn.values");

        state.weights.validate();
        if (!(state.alpha > 0.0 && state.alpha < 1.0)) {
            throw ValidationError("calibrator file: alpha must be in (0,1)");
        }
        if (!std::is_sorted(state.calib_scores.begin(), state.calib_scores.end())) {
            throw ValidationError("calibrator file: calib_scores must be sorted");
        }
        if (state.scorer.venn_model.breakpoints.size() != state.scorer.venn_model.values.size()) {
            throw ValidationError("calibrator file: venn breakpoints/values length mismatch");
        }
        return state;
    } catch (const json::exception& e) {
        throw ValidationError("load_calibrator: bad field in " + path + ": " + e.what());
    }
}

}  // namespace cgan
