#include "cgan/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cgan/errors.hpp"
#include "cgan/format.hpp"
#include "cgan/rng.hpp"

namespace cgan {

namespace {

constexpr double kConstantStd = 1e-12;
constexpr double kPi = 3.14159265358979323846;

}  // namespace

Matrix Standardizer::apply(const Matrix& features) const {
    Matrix out = features;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = (out(r, c) - mean[c]) / stddev[c];
        }
    }
    return out;
}

Matrix Standardizer::invert(const Matrix& features) const {
    Matrix out = features;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = out(r, c) * stddev[c] + mean[c];
        }
    }
    return out;
}

MixtureSpec default_mixture_spec(int num_classes, int dim, std::size_t n, std::uint64_t seed,
                                 double radius, double stddev) {
    if (num_classes < 1 || dim < 1) {
        throw ValidationError("default_mixture_spec: num_classes and dim must be >= 1");
    }
    MixtureSpec spec;
    spec.num_classes = num_classes;
    spec.dim = dim;
    spec.stddev = stddev;
    spec.n = n;
    spec.seed = seed;
    for (int k = 0; k < num_classes; ++k) {
        std::vector<double> mu(static_cast<std::size_t>(dim), 0.0);
        const double angle = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(num_classes);
        mu[0] = radius * std::cos(angle);
        if (dim > 1) mu[1] = radius * std::sin(angle);
        spec.means.push_back(std::move(mu));
    }
    return spec;
}

LabeledDataset make_gaussian_mixture(const MixtureSpec& spec) {
    if (spec.num_classes < 1 || spec.dim < 1 || spec.stddev <= 0.0) {
        throw ValidationError("make_gaussian_mixture: invalid spec");
    }
    if (spec.means.size() != static_cast<std::size_t>(spec.num_classes)) {
        throw ValidationError("make_gaussian_mixture: means count != num_classes");
    }
    LabeledDataset data;
    data.num_classes = spec.num_classes;
    data.features = Matrix(spec.n, static_cast<std::size_t>(spec.dim));
    data.labels.resize(spec.n);
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < spec.n; ++i) {
        const int label = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.num_classes)));
        data.labels[i] = label;
        const auto& mu = spec.means[static_cast<std::size_t>(label)];
        for (std::size_t c = 0; c < data.features.cols(); ++c) {
            data.features(i, c) = mu[c] + spec.stddev * rng.next_normal();
        }
    }
    return data;
}

LabeledDataset standardize(const LabeledDataset& data) {
    if (data.size() == 0) throw ValidationError("standardize: empty dataset");
    const std::size_t n = data.size(), d = data.dim();
    Standardizer st;
    st.mean.assign(d, 0.0);
    st.stddev.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) st.mean[c] += data.features(r, c);
    }
    for (std::size_t c = 0; c < d; ++c) st.mean[c] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const double dev = data.features(r, c) - st.mean[c];
            st.stddev[c] += dev * dev;
        }
    }
    for (std::size_t c = 0; c < d; ++c) {
        st.stddev[c] = std::sqrt(st.stddev[c] / static_cast<double>(n));
        if (st.stddev[c] < kConstantStd) st.stddev[c] = 1.0;  // constant feature rule
    }
    LabeledDataset out;
    out.features = st.apply(data.features);
    out.labels = data.labels;
    out.num_classes = data.num_classes;
    out.standardizer = std::move(st);
    return out;
}

Splits split(const LabeledDataset& data, const SplitFractions& fractions, std::uint64_t seed) {
    const double fr[4] = {fractions.train, fractions.calib, fractions.val, fractions.test};
    double sum = 0.0;
    for (double f : fr) {
        if (f < 0.0) throw ValidationError("split: negative fraction");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("split: fractions sum to " + format_double(sum) + ", expected 1");
    }

    const std::size_t n = data.size();
    std::vector<std::vector<std::size_t>> by_class(std::max(data.num_classes, 1));
    for (std::size_t i = 0; i < n; ++i) {
        const int y = data.labels[i];
        if (y < 0 || y >= std::max(data.num_classes, 1)) {
            throw ValidationError("split: label out of range at row " + std::to_string(i));
        }
        by_class[static_cast<std::size_t>(y)].push_back(i);
    }

    Rng rng(seed);
    std::vector<std::vector<std::size_t>> piece_indices(4);
    for (auto& cls : by_class) {
        // Seeded Fisher-Yates within the class.
        for (std::size_t i = cls.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
            std::swap(cls[i - 1], cls[j]);
        }
        const std::size_t m = cls.size();
        std::size_t counts[4];
        double rema[4];
        std::size_t assigned = 0;
        for (int p = 0; p < 4; ++p) {
            const double target = fr[p] * static_cast<double>(m);
            counts[p] = static_cast<std::size_t>(std::floor(target));
            rema[p] = target - std::floor(target);
            assigned += counts[p];
        }
        // Largest-remainder rounding; ties go to the earlier piece.
        while (assigned < m) {
            int best = -1;
            for (int p = 0; p < 4; ++p) {
                if (fr[p] == 0.0) continue;
                if (best < 0 || rema[p] > rema[best]) best = p;
            }
            counts[best] += 1;
            rema[best] = -1.0;
            ++assigned;
        }
        // Class presence in train when possible.
        if (fr[0] > 0.0 && counts[0] == 0 && m > 0) {
            for (int p = 3; p >= 1; --p) {
                if (counts[p] > 0) {
                    counts[p] -= 1;
                    counts[0] += 1;
                    break;
                }
            }
        }
        std::size_t cursor = 0;
        for (int p = 0; p < 4; ++p) {
            for (std::size_t i = 0; i < counts[p]; ++i) {
                piece_indices[p].push_back(cls[cursor++]);
            }
        }
    }

    if (fr[0] > 0.0) {
        for (int y = 0; y < data.num_classes; ++y) {
            if (by_class[static_cast<std::size_t>(y)].empty()) {
                throw ValidationError("split: train split would miss class " + std::to_string(y));
            }
        }
    }

    auto gather = [&](std::vector<std::size_t>& idx) {
        std::sort(idx.begin(), idx.end());
        LabeledDataset piece;
        piece.num_classes = data.num_classes;
        piece.features = Matrix(idx.size(), data.dim());
        piece.labels.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t c = 0; c < data.dim(); ++c) {
                piece.features(r, c) = data.features(idx[r], c);
            }
            piece.labels.push_back(data.labels[idx[r]]);
        }
        piece.standardizer = data.standardizer;
        return piece;
    };
    Splits out;
    out.train = gather(piece_indices[0]);
    out.calib = gather(piece_indices[1]);
    out.val = gather(piece_indices[2]);
    out.test = gather(piece_indices[3]);
    return out;
}

LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("load_csv: missing header in " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
    }
    if (cols.empty() || cols.back() != "label") {
        throw ValidationError("load_csv: header must end with a \"label\" column");
    }
    const std::size_t d = cols.size() - 1;
    for (std::size_t c = 0; c < d; ++c) {
        if (cols[c] != "f" + std::to_string(c)) {
            throw ValidationError("load_csv: header column " + std::to_string(c) +
                                  " expected f" + std::to_string(c) + ", got \"" + cols[c] + "\"");
        }
    }

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t col = 0, pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            const std::string_view cell(line.data() + pos,
                                        (comma == std::string::npos ? line.size() : comma) - pos);
            if (col < d) {
                double v = 0.0;
                auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
                if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                    throw ValidationError("load_csv: non-numeric cell at row " +
                                          std::to_string(row) + ", column " + std::to_string(col));
                }
                values.push_back(v);
            } else if (col == d) {
                int y = 0;
                auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
                if (ec != std::errc() || ptr != cell.data() + cell.size() || y < 0) {
                    throw ValidationError("load_csv: bad label at row " + std::to_string(row) +
                                          ", column " + std::to_string(col));
                }
                labels.push_back(y);
            } else {
                throw ValidationError("load_csv: ragged row " + std::to_string(row) +
                                      " (too many cells)");
            }
            ++col;
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (col != d + 1) {
            throw ValidationError("load_csv: ragged row " + std::to_string(row) + " (expected " +
                                  std::to_string(d + 1) + " cells, got " + std::to_string(col) +
                                  ")");
        }
    }

    LabeledDataset data;
    data.features = Matrix(labels.size(), d);
    std::copy(values.begin(), values.end(), data.features.data());
    data.labels = std::move(labels);
    int max_label = -1;
    for (int y : data.labels) max_label = std::max(max_label, y);
    data.num_classes = max_label + 1;
    return data;
}

void save_csv(const LabeledDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("save_csv: cannot open " + path);
    for (std::size_t c = 0; c < data.dim(); ++c) out << 'f' << c << ',';
    out << "label\n";
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (std::size_t c = 0; c < data.dim(); ++c) {
            out << format_double(data.features(r, c)) << ',';
        }
        out << data.labels[r] << '\n';
    }
    if (!out) throw RuntimeFailure("save_csv: write failed for " + path);
}

}  // namespace cgan
