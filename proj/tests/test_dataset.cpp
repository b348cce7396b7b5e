#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <sstream>

#include "ssn/dataset.hpp"

using ssn::Dataset;
using ssn::MarginSpec;
using ssn::Vector;

TEST_CASE("margin dataset satisfies its construction contract") {
    const MarginSpec spec{0.1, 100, 20, 7};
    const auto generated = ssn::generate_margin_dataset(spec);
    const Dataset& data = generated.data;
    const Vector& sep = generated.separator;

    REQUIRE(data.n() == 100);
    REQUIRE(data.d() == 20);
    REQUIRE(sep.norm() == Catch::Approx(1.0).epsilon(1e-12));

    SECTION("every sample respects the planted margin") {
        for (int i = 0; i < data.n(); ++i)
            REQUIRE(data.label(i) * data.dot_row(i, sep) >= spec.margin);
    }

    SECTION("features are unit norm") {
        for (int i = 0; i < data.n(); ++i)
            REQUIRE(data.row_squared_norm(i) == Catch::Approx(1.0).epsilon(1e-12));
    }

    SECTION("same seed is byte-identical") {
        const auto again = ssn::generate_margin_dataset(spec);
        REQUIRE(again.separator == sep);
        REQUIRE(again.data == data);
    }

    SECTION("different seed differs") {
        const auto other = ssn::generate_margin_dataset({0.1, 100, 20, 8});
        REQUIRE_FALSE(other.data == data);
    }
}

TEST_CASE("margin dataset rescaled separator interpolates the squared hinge") {
    const auto generated = ssn::generate_margin_dataset({0.5, 60, 20, 3});
    const Vector w = generated.separator / 0.5;
    for (int i = 0; i < generated.data.n(); ++i)
        REQUIRE(generated.data.label(i) * generated.data.dot_row(i, w) >= 1.0);
}

TEST_CASE("margin dataset input validation") {
    REQUIRE_THROWS_AS(ssn::generate_margin_dataset({1.5, 10, 5, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(ssn::generate_margin_dataset({0.0, 10, 5, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(ssn::generate_margin_dataset({0.1, 0, 5, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(ssn::generate_margin_dataset({0.1, 10, 1, 0}), std::invalid_argument);
    // margin = 1 is the feasibility boundary and must still work
    const auto edge = ssn::generate_margin_dataset({1.0, 3, 2, 12});
    REQUIRE(edge.data.n() == 3);
}

TEST_CASE("libsvm parsing") {
    SECTION("basic sparse row") {
        std::istringstream in("+1 1:0.5 3:2.0");
        const Dataset data = ssn::parse_libsvm(in);
        REQUIRE(data.n() == 1);
        REQUIRE(data.d() == 3);
        REQUIRE(data.label(0) == 1.0);
        const auto row = data.sparse_row(0);
        REQUIRE(row.size() == 2);
        REQUIRE(row[0].index == 0);
        REQUIRE(row[0].value == 0.5);
        REQUIRE(row[1].index == 2);
        REQUIRE(row[1].value == 2.0);
    }

    SECTION("zero/one labels are remapped") {
        std::istringstream in("0 2:1.0\n1 1:1.0\n");
        const Dataset data = ssn::parse_libsvm(in);
        REQUIRE(data.n() == 2);
        REQUIRE(data.d() == 2);
        REQUIRE(data.label(0) == -1.0);
        REQUIRE(data.label(1) == 1.0);
    }

    SECTION("unsorted indices are tolerated") {
        std::istringstream in("+1 3:3.0 1:1.0");
        const Dataset data = ssn::parse_libsvm(in);
        const auto row = data.sparse_row(0);
        REQUIRE(row[0].index == 0);
        REQUIRE(row[1].index == 2);
    }

    SECTION("malformed token reports the line number") {
        std::istringstream in("+1 1:0.5\n-1 oops\n");
        REQUIRE_THROWS_WITH(ssn::parse_libsvm(in), Catch::Matchers::ContainsSubstring("line 2"));
    }

    SECTION("non-binary label set is rejected") {
        std::istringstream in("1 1:1.0\n2 1:2.0\n3 1:3.0\n");
        REQUIRE_THROWS_WITH(ssn::parse_libsvm(in), Catch::Matchers::ContainsSubstring("binary"));
    }

    SECTION("empty input is rejected") {
        std::istringstream in("");
        REQUIRE_THROWS_AS(ssn::parse_libsvm(in), std::invalid_argument);
    }
}

TEST_CASE("libsvm round trip is the identity") {
    const MarginSpec spec{0.2, 40, 6, 11};
    const auto generated = ssn::generate_margin_dataset(spec);

    std::ostringstream out;
    ssn::serialize_libsvm(generated.data, out, &spec, &generated.separator);

    std::istringstream in(out.str());
    const Dataset parsed = ssn::parse_libsvm(in);
    REQUIRE(parsed == generated.data);

    std::istringstream header_in(out.str());
    MarginSpec recovered;
    Vector separator;
    REQUIRE(ssn::read_cache_header(header_in, recovered, separator));
    REQUIRE(recovered.margin == spec.margin);
    REQUIRE(recovered.seed == spec.seed);
    REQUIRE(separator == generated.separator);
}

TEST_CASE("rbf kernel map") {
    const auto generated = ssn::generate_margin_dataset({0.1, 30, 5, 5});
    const Dataset& data = generated.data;

    SECTION("self-feature is exactly one") {
        const Dataset mapped = ssn::rbf_kernel_map(data, data, 0.7);
        REQUIRE(mapped.d() == data.n());
        for (int i = 0; i < data.n(); ++i)
            REQUIRE(mapped.dense_row(i)[i] == Catch::Approx(1.0).epsilon(1e-12));
    }

    SECTION("pairwise value matches the scalar formula") {
        const double bandwidth = 0.9;
        const Dataset mapped = ssn::rbf_kernel_map(data, data, bandwidth);
        for (int i : {0, 3, 7})
            for (int j : {1, 4, 9}) {
                const double dist_sq = (data.dense_row(i) - data.dense_row(j)).squaredNorm();
                REQUIRE(mapped.dense_row(i)[j] ==
                        Catch::Approx(std::exp(-dist_sq / (2.0 * bandwidth * bandwidth))).epsilon(1e-12));
            }
    }

    SECTION("huge bandwidth sends every feature to one") {
        const Dataset mapped = ssn::rbf_kernel_map(data, data, 1e6);
        for (int i = 0; i < mapped.n(); ++i)
            for (int j = 0; j < mapped.d(); ++j)
                REQUIRE(mapped.dense_row(i)[j] == Catch::Approx(1.0).margin(1e-6));
    }

    SECTION("gram matrix is positive semidefinite") {
        const auto big = ssn::generate_margin_dataset({0.05, 200, 8, 21});
        const Dataset mapped = ssn::rbf_kernel_map(big.data, big.data, 1.0);
        ssn::Matrix gram(mapped.n(), mapped.d());
        for (int i = 0; i < mapped.n(); ++i) gram.row(i) = mapped.dense_row(i).transpose();
        const Eigen::SelfAdjointEigenSolver<ssn::Matrix> eigen(gram, Eigen::EigenvaluesOnly);
        REQUIRE(eigen.eigenvalues().minCoeff() >= -1e-8);
    }

    SECTION("input validation") {
        REQUIRE_THROWS_AS(ssn::rbf_kernel_map(data, data, 0.0), std::invalid_argument);
        const auto other = ssn::generate_margin_dataset({0.1, 5, 7, 0});
        REQUIRE_THROWS_AS(ssn::rbf_kernel_map(data, other.data, 1.0), std::invalid_argument);
    }
}

TEST_CASE("train/test split") {
    const auto generated = ssn::generate_margin_dataset({0.1, 10, 4, 9});
    const Dataset& data = generated.data;

    SECTION("sizes follow the ceiling rule") {
        const ssn::Split split = ssn::train_test_split(data, 0.8, 1);
        REQUIRE(split.train.n() == 8);
        REQUIRE(split.test.n() == 2);
    }

    SECTION("partition covers the original rows") {
        const ssn::Split split = ssn::train_test_split(data, 0.7, 2);
        std::vector<Vector> rows;
        for (int i = 0; i < split.train.n(); ++i) rows.push_back(split.train.dense_row(i));
        for (int i = 0; i < split.test.n(); ++i) rows.push_back(split.test.dense_row(i));
        REQUIRE(rows.size() == static_cast<std::size_t>(data.n()));
        // every original row appears exactly once
        std::vector<bool> matched(static_cast<std::size_t>(data.n()), false);
        for (const Vector& row : rows) {
            bool found = false;
            for (int i = 0; i < data.n(); ++i) {
                if (!matched[static_cast<std::size_t>(i)] && data.dense_row(i) == row) {
                    matched[static_cast<std::size_t>(i)] = true;
                    found = true;
                    break;
                }
            }
            REQUIRE(found);
        }
    }

    SECTION("same seed gives the same split") {
        const ssn::Split a = ssn::train_test_split(data, 0.8, 5);
        const ssn::Split b = ssn::train_test_split(data, 0.8, 5);
        REQUIRE(a.train == b.train);
        REQUIRE(a.test == b.test);
    }

    SECTION("degenerate inputs error") {
        REQUIRE_THROWS_AS(ssn::train_test_split(data, 0.0, 1), std::invalid_argument);
        REQUIRE_THROWS_AS(ssn::train_test_split(data, 1.0, 1), std::invalid_argument);
        const auto single = ssn::generate_margin_dataset({0.1, 1, 3, 0});
        REQUIRE_THROWS_AS(ssn::train_test_split(single.data, 0.5, 1), std::invalid_argument);
    }
}

TEST_CASE("dataset validation rejects bad input") {
    REQUIRE_THROWS_AS(Dataset::dense(ssn::Matrix::Zero(2, 2), {1.0, 2.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(Dataset::sparse({{{5, 1.0}}}, {1.0}, 3), std::invalid_argument);
    ssn::Matrix bad = ssn::Matrix::Zero(1, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(Dataset::dense(bad, {1.0}), std::invalid_argument);
}
