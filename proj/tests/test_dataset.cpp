#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "cgan/dataset.hpp"
#include "cgan/errors.hpp"
#include "cgan/rng.hpp"

using namespace cgan;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

// Sorted multiset of (features..., label) rows for partition comparisons.
std::vector<std::vector<double>> row_multiset(const LabeledDataset& d) {
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < d.size(); ++r) {
        std::vector<double> row(d.features.row(r).begin(), d.features.row(r).end());
        row.push_back(static_cast<double>(d.labels[r]));
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

LabeledDataset random_dataset(std::size_t n, std::size_t d, int num_classes, Rng& rng) {
    LabeledDataset data;
    data.features = Matrix(n, d);
    for (double& v : data.features.storage()) v = rng.next_normal() * 3.0 + 1.0;
    data.num_classes = num_classes;
    for (std::size_t r = 0; r < n; ++r) {
        data.labels.push_back(static_cast<int>(rng.next_below(num_classes)));
    }
    return data;
}

}  // namespace

TEST_CASE("mixture generation is deterministic and empty-safe") {
    const MixtureSpec spec = default_mixture_spec(3, 2, 500, 9);
    const LabeledDataset a = make_gaussian_mixture(spec);
    const LabeledDataset b = make_gaussian_mixture(spec);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(a.size() == 500);
    CHECK(a.num_classes == 3);

    MixtureSpec empty_spec = spec;
    empty_spec.n = 0;
    const LabeledDataset e = make_gaussian_mixture(empty_spec);
    CHECK(e.size() == 0);
    CHECK(e.dim() == 2);
}

TEST_CASE("mixture class counts stay within multinomial bounds") {
    MixtureSpec spec = default_mixture_spec(3, 2, 30000, 4);
    const LabeledDataset d = make_gaussian_mixture(spec);
    std::vector<int> counts(3, 0);
    for (int y : d.labels) counts[static_cast<std::size_t>(y)] += 1;
    const double expect = 10000.0;
    const double sigma = std::sqrt(30000.0 * (1.0 / 3.0) * (2.0 / 3.0));
    for (int c : counts) {
        CHECK(std::abs(c - expect) <= 3.0 * sigma);
    }
}

TEST_CASE("mixture means land near the requested centers") {
    MixtureSpec spec = default_mixture_spec(3, 2, 30000, 11, 4.0, 1.0);
    const LabeledDataset d = make_gaussian_mixture(spec);
    std::vector<std::vector<double>> sums(3, std::vector<double>(2, 0.0));
    std::vector<int> counts(3, 0);
    for (std::size_t r = 0; r < d.size(); ++r) {
        const auto y = static_cast<std::size_t>(d.labels[r]);
        counts[y] += 1;
        sums[y][0] += d.features(r, 0);
        sums[y][1] += d.features(r, 1);
    }
    for (std::size_t y = 0; y < 3; ++y) {
        const double tol = 4.0 / std::sqrt(static_cast<double>(counts[y]));
        CHECK(std::abs(sums[y][0] / counts[y] - spec.means[y][0]) < tol);
        CHECK(std::abs(sums[y][1] / counts[y] - spec.means[y][1]) < tol);
    }
}

TEST_CASE("standardize centers, scales, and round-trips") {
    Rng rng(21);
    const LabeledDataset raw = random_dataset(400, 3, 2, rng);
    const LabeledDataset std_data = standardize(raw);
    REQUIRE(std_data.standardizer.has_value());

    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t r = 0; r < std_data.size(); ++r) mean += std_data.features(r, c);
        mean /= static_cast<double>(std_data.size());
        for (std::size_t r = 0; r < std_data.size(); ++r) {
            const double dd = std_data.features(r, c) - mean;
            var += dd * dd;
        }
        var /= static_cast<double>(std_data.size());
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::abs(var - 1.0) < 1e-9);
    }

    const Matrix back = std_data.standardizer->invert(std_data.features);
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(std::abs(back.storage()[i] - raw.features.storage()[i]) < 1e-9);
    }

    const LabeledDataset again = standardize(std_data);
    for (std::size_t i = 0; i < again.features.size(); ++i) {
        CHECK(std::abs(again.features.storage()[i] - std_data.features.storage()[i]) < 1e-12);
    }
}

TEST_CASE("constant features become zeros with unit recorded scale") {
    LabeledDataset data;
    data.features = Matrix::from_rows({{5.0, 1.0}, {5.0, 2.0}, {5.0, 3.0}});
    data.labels = {0, 1, 0};
    data.num_classes = 2;
    const LabeledDataset s = standardize(data);
    for (std::size_t r = 0; r < 3; ++r) CHECK(s.features(r, 0) == 0.0);
    CHECK(s.standardizer->stddev[0] == 1.0);
    CHECK(s.standardizer->mean[0] == 5.0);
}

TEST_CASE("split partitions the data deterministically with stratified train") {
    Rng rng(31);
    const LabeledDataset data = random_dataset(500, 2, 3, rng);
    const SplitFractions fr{0.6, 0.15, 0.05, 0.2};
    const Splits s1 = split(data, fr, 7);
    const Splits s2 = split(data, fr, 7);

    CHECK(s1.train.size() + s1.calib.size() + s1.val.size() + s1.test.size() == data.size());
    CHECK(s1.train.features == s2.train.features);
    CHECK(s1.test.labels == s2.test.labels);

    auto all_rows = row_multiset(data);
    std::vector<std::vector<double>> merged;
    for (const LabeledDataset* piece : {&s1.train, &s1.calib, &s1.val, &s1.test}) {
        const auto rows = row_multiset(*piece);
        merged.insert(merged.end(), rows.begin(), rows.end());
    }
    std::sort(merged.begin(), merged.end());
    CHECK(merged == all_rows);

    std::vector<bool> seen(3, false);
    for (int y : s1.train.labels) seen[static_cast<std::size_t>(y)] = true;
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));

    const Splits s3 = split(data, fr, 8);
    CHECK_FALSE(s3.train.labels == s1.train.labels);
}

TEST_CASE("degenerate split puts everything in train") {
    Rng rng(41);
    const LabeledDataset data = random_dataset(50, 2, 2, rng);
    const Splits s = split(data, {1.0, 0.0, 0.0, 0.0}, 3);
    CHECK(s.train.size() == 50);
    CHECK(s.calib.size() == 0);
    CHECK(s.val.size() == 0);
    CHECK(s.test.size() == 0);
    CHECK(row_multiset(s.train) == row_multiset(data));
}

TEST_CASE("split validates fraction sums") {
    Rng rng(43);
    const LabeledDataset data = random_dataset(20, 2, 2, rng);
    CHECK_THROWS_AS(split(data, {0.5, 0.2, 0.1, 0.1}, 3), ValidationError);
    CHECK_THROWS_AS(split(data, {-0.2, 0.5, 0.3, 0.4}, 3), ValidationError);
}

TEST_CASE("csv round-trips exactly") {
    Rng rng(51);
    const LabeledDataset data = random_dataset(60, 3, 4, rng);
    TempFile tmp("dataset_roundtrip_test.csv");
    save_csv(data, tmp.path);
    const LabeledDataset back = load_csv(tmp.path);
    CHECK(back.features == data.features);
    CHECK(back.labels == data.labels);
    CHECK(back.num_classes == data.num_classes);
}

TEST_CASE("csv errors name the offending position") {
    TempFile tmp("dataset_bad_test.csv");

    write_file(tmp.path, "f0,f1,label\n1,2,0\n3,4\n");
    try {
        load_csv(tmp.path);
        FAIL("expected a ragged-row error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }

    write_file(tmp.path, "f0,f1,label\n1,2,0\n1,abc,1\n");
    try {
        load_csv(tmp.path);
        FAIL("expected a non-numeric cell error");
    } catch (const ValidationError& e) {
        const std::string what = e.what();
        CHECK(what.find("row 2") != std::string::npos);
        CHECK(what.find("column 1") != std::string::npos);
    }

    write_file(tmp.path, "f0,f1\n1,2\n");
    CHECK_THROWS_AS(load_csv(tmp.path), ValidationError);

    write_file(tmp.path, "f0,f1,label\n");
    const LabeledDataset empty = load_csv(tmp.path);
    CHECK(empty.size() == 0);
    CHECK(empty.dim() == 2);
    CHECK(empty.num_classes == 0);
}

TEST_CASE("csv keeps fifteen significant digits through save and load") {
    LabeledDataset data;
    data.features = Matrix::from_rows(
        {{0.1234567890123456, -9.87654321098765e-7}, {3.141592653589793, 2.718281828459045e12}});
    data.labels = {0, 1};
    data.num_classes = 2;
    TempFile tmp("dataset_digits_test.csv");
    save_csv(data, tmp.path);
    const LabeledDataset back = load_csv(tmp.path);
    CHECK(back.features == data.features);
}
