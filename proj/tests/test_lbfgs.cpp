#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ssn/lbfgs.hpp"
#include "ssn/rng.hpp"

using ssn::LbfgsMemory;
using ssn::Matrix;
using ssn::Vector;

namespace {

Matrix random_spd(int d, ssn::Rng& rng) {
    Matrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = rng.next_normal();
    return m * m.transpose() + Matrix::Identity(d, d);
}

Vector random_vector(int d, ssn::Rng& rng) {
    Vector v(d);
    for (int j = 0; j < d; ++j) v[j] = rng.next_normal();
    return v;
}

}  // namespace

TEST_CASE("empty memory scales by gamma0") {
    LbfgsMemory memory(10);
    Vector g(3);
    g << 1.0, -2.0, 0.5;
    REQUIRE((ssn::lbfgs_direction(memory, g, 1.0) - g).norm() == 0.0);
    REQUIRE((ssn::lbfgs_direction(memory, g, 2.5) - 2.5 * g).norm() == 0.0);
    REQUIRE_THROWS_AS(ssn::lbfgs_direction(memory, g, 0.0), std::invalid_argument);
}

TEST_CASE("single axis-aligned pair acts as identity off its span") {
    // s = y = e1 gives curvature 1 and scaling 1; a gradient along e2 is
    // untouched by the two-loop recursion.
    LbfgsMemory memory(10);
    ssn::lbfgs_update_memory(memory, Vector::Unit(2, 0), Vector::Unit(2, 0), 1e-8);
    REQUIRE(memory.size() == 1);
    const Vector direction = ssn::lbfgs_direction(memory, Vector::Unit(2, 1), 1.0);
    REQUIRE((direction - Vector::Unit(2, 1)).norm() <= 1e-15);
}

TEST_CASE("curvature skip rule") {
    LbfgsMemory memory(10);

    SECTION("non-positive curvature is skipped without a shift") {
        Vector s = Vector::Unit(3, 0);
        Vector y = -Vector::Unit(3, 0);
        REQUIRE_FALSE(ssn::lbfgs_update_memory(memory, s, y, 1e-8, 0.0));
        REQUIRE(memory.empty());
    }

    SECTION("the regularizing shift flips a borderline pair") {
        // y.s = -0.05 ||s||^2 fails; after y <- y + 0.1 s it passes.
        Vector s(2);
        s << 2.0, 0.0;  // ||s||^2 = 4
        Vector y(2);
        y << -0.05 * 2.0, 1.0;  // y.s = -0.2 = -0.05 ||s||^2
        REQUIRE_FALSE(ssn::lbfgs_update_memory(memory, s, y, 1e-8, 0.0));
        REQUIRE(ssn::lbfgs_update_memory(memory, s, y, 1e-8, 0.1));
        REQUIRE(memory.size() == 1);
        // stored y carries the shift
        REQUIRE(memory.newest().y.dot(memory.newest().s) == Catch::Approx(0.2).epsilon(1e-12));
    }

    SECTION("tiny curvature relative to the norms is skipped") {
        Vector s = Vector::Unit(3, 0);
        Vector y = 1e-12 * Vector::Unit(3, 0) + Vector::Unit(3, 1);
        REQUIRE_FALSE(ssn::lbfgs_update_memory(memory, s, y, 1e-8, 0.0));
    }
}

TEST_CASE("capacity evicts the oldest pair") {
    LbfgsMemory memory(2);
    for (int i = 0; i < 3; ++i) {
        Vector s = static_cast<double>(i + 1) * Vector::Unit(3, i);
        ssn::lbfgs_update_memory(memory, s, s, 1e-8);
    }
    REQUIRE(memory.size() == 2);
    REQUIRE(memory.pair(0).s[1] == 2.0);  // first pair evicted
    REQUIRE(memory.pair(1).s[2] == 3.0);
}

TEST_CASE("zero-capacity memory never stores") {
    LbfgsMemory memory(0);
    REQUIRE_FALSE(ssn::lbfgs_update_memory(memory, Vector::Unit(2, 0), Vector::Unit(2, 0), 1e-8));
    REQUIRE(memory.empty());
}

TEST_CASE("exact line-search updates recover the inverse Hessian") {
    // On a quadratic 0.5 x^T A x, L-BFGS with exact steps and memory >= d
    // reproduces BFGS, whose hereditary property yields B = A^{-1} after d
    // independent updates.
    ssn::Rng rng(211);
    const int d = 4;
    const Matrix a = random_spd(d, rng);
    const Matrix a_inverse = a.inverse();

    LbfgsMemory memory(10);
    Vector x = random_vector(d, rng);
    for (int iter = 0; iter < d; ++iter) {
        const Vector g = a * x;
        const Vector direction = ssn::lbfgs_direction(memory, g, 1.0);
        const double eta = g.dot(direction) / direction.dot(a * direction);  // exact minimizer
        const Vector x_next = x - eta * direction;
        ssn::lbfgs_update_memory(memory, x_next - x, a * (x_next - x), 1e-12);
        x = x_next;
    }
    REQUIRE(memory.size() == d);

    for (int trial = 0; trial < 5; ++trial) {
        const Vector probe = random_vector(d, rng);
        const Vector direction = ssn::lbfgs_direction(memory, probe, 1.0);
        REQUIRE((direction - a_inverse * probe).norm() <= 1e-6 * (a_inverse * probe).norm());
    }
}

TEST_CASE("two-loop operator is symmetric positive definite") {
    ssn::Rng rng(223);
    for (int d = 2; d <= 6; ++d) {
        LbfgsMemory memory(8);
        // random curvature-positive pairs: s random, y = M s for SPD M
        const Matrix m = random_spd(d, rng);
        for (int p = 0; p < 5; ++p) {
            const Vector s = random_vector(d, rng);
            ssn::lbfgs_update_memory(memory, s, m * s, 1e-12);
        }
        REQUIRE(memory.size() == 5);

        Matrix b(d, d);
        for (int j = 0; j < d; ++j) b.col(j) = ssn::lbfgs_direction(memory, Vector::Unit(d, j), 1.0);
        REQUIRE((b - b.transpose()).norm() <= 1e-12 * b.norm());
        const Eigen::SelfAdjointEigenSolver<Matrix> eigen(0.5 * (b + b.transpose()),
                                                          Eigen::EigenvaluesOnly);
        REQUIRE(eigen.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("descent property with curvature-positive memory") {
    ssn::Rng rng(227);
    const int d = 5;
    const Matrix m = random_spd(d, rng);
    LbfgsMemory memory(10);
    for (int p = 0; p < 7; ++p) {
        const Vector s = random_vector(d, rng);
        ssn::lbfgs_update_memory(memory, s, m * s, 1e-12);
    }
    for (int trial = 0; trial < 50; ++trial) {
        const Vector g = random_vector(d, rng);
        REQUIRE(g.dot(ssn::lbfgs_direction(memory, g, 1.0)) > 0.0);
    }
}
