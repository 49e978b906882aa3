#include "fggsl/dataset.hpp"
#include "fggsl/errors.hpp"
#include "fggsl/graph.hpp"

#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <doctest.h>

#include <cmath>
#include <random>

using namespace fggsl;

TEST_CASE("normalized Laplacian of a 3-node path") {
    Matrix w = Matrix::Zero(3, 3);
    w(0, 1) = w(1, 0) = 1;
    w(1, 2) = w(2, 1) = 1;
    const Matrix l = normalized_laplacian(w);
    const double r = -1.0 / std::sqrt(2.0);
    CHECK(l(0, 0) == doctest::Approx(1.0));
    CHECK(l(1, 1) == doctest::Approx(1.0));
    CHECK(l(0, 1) == doctest::Approx(r));
    CHECK(l(1, 2) == doctest::Approx(r));
    CHECK(l(0, 2) == 0.0);
    // Path P3 spectrum is {0, 1, 2}.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(l)};
    CHECK(es.eigenvalues()(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(es.eigenvalues()(1) == doctest::Approx(1.0));
    CHECK(es.eigenvalues()(2) == doctest::Approx(2.0));
}

TEST_CASE("isolated nodes get identity rows") {
    Matrix w = Matrix::Zero(3, 3);
    w(0, 1) = w(1, 0) = 2.0;
    const Matrix l = normalized_laplacian(w);
    CHECK(l.row(2) == Matrix::Identity(3, 3).row(2));
    CHECK(l(0, 1) == doctest::Approx(-1.0));
}

TEST_CASE("normalized Laplacian rejects bad input") {
    Matrix w = Matrix::Zero(2, 2);
    w(0, 1) = 1.0;
    CHECK_THROWS_AS(normalized_laplacian(w), ContractError);
    w(1, 0) = 1.0;
    w(0, 0) = -1.0;
    CHECK_THROWS_AS(normalized_laplacian(w), ContractError);
    CHECK_THROWS_AS(normalized_laplacian(Matrix::Zero(2, 3)), DimensionError);
}

TEST_CASE("tape Laplacian matches the dense one and has eigenvalues in [0, 2]") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t) {
        Matrix w = test::random_adjacency(10, 0.4, rng, true);
        ad::Tape tape;
        const Matrix lt = normalized_laplacian(tape.constant(w)).value();
        const Matrix ld = normalized_laplacian(w);
        CHECK((lt - ld).cwiseAbs().maxCoeff() < 1e-14);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(ld)};
        CHECK(es.eigenvalues().minCoeff() > -1e-12);
        CHECK(es.eigenvalues().maxCoeff() < 2.0 + 1e-12);
    }
}

TEST_CASE("Jacobi eigensolver agrees with Eigen's solver") {
    std::mt19937_64 rng(5);
    for (int n : {1, 2, 5, 12, 30}) {
        Matrix a = test::random_matrix(n, n, rng);
        a = (a + a.transpose()).eval();
        const SpectralDecomposition d = symmetric_eig(a);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(a)};
        CHECK((d.eigenvalues - es.eigenvalues()).cwiseAbs().maxCoeff() < 1e-10);
        const Matrix rebuilt = d.eigenvectors * d.eigenvalues.asDiagonal() * d.eigenvectors.transpose();
        CHECK((rebuilt - a).norm() < 1e-10 * std::max(1.0, a.norm()));
        CHECK((d.eigenvectors.transpose() * d.eigenvectors - Matrix::Identity(n, n)).norm() < 1e-10);
        for (Eigen::Index c = 0; c < d.eigenvectors.cols(); ++c) {
            Eigen::Index first = 0;
            while (std::abs(d.eigenvectors(first, c)) <= 1e-12) ++first;
            CHECK(d.eigenvectors(first, c) > 0);
        }
    }
}

TEST_CASE("eigenvalues come out in ascending order") {
    Matrix a = Matrix::Zero(3, 3);
    a(0, 0) = 3;
    a(1, 1) = -1;
    a(2, 2) = 2;
    const auto d = symmetric_eig(a);
    CHECK(d.eigenvalues(0) == -1);
    CHECK(d.eigenvalues(1) == 2);
    CHECK(d.eigenvalues(2) == 3);
}

TEST_CASE("spectral norm matches the largest singular value") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 5; ++t) {
        Matrix m = test::random_matrix(6, 6, rng);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(m)};
        CHECK(spectral_norm(m) == doctest::Approx(svd.singularValues()(0)).epsilon(1e-10));
    }
    Matrix a = test::random_matrix(4, 4, rng);
    Matrix b = test::random_matrix(4, 4, rng);
    CHECK(operator_distance(a, b) == doctest::Approx(operator_distance(b, a)));
    CHECK(operator_distance(a, a) == 0.0);
}

TEST_CASE("heterophily ratio by hand") {
    // Triangle 0-1-2 plus edge 2-3; labels 0,0,1,1.
    Matrix w = Matrix::Zero(4, 4);
    for (auto [i, j] : std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {0, 2}, {2, 3}}) w(i, j) = w(j, i) = 1;
    const Matrix y = test::one_hot({0, 0, 1, 1}, 2);
    CHECK(heterophily_ratio(w, y) == doctest::Approx(0.5));
    w(0, 2) = w(2, 0) = 0.3;
    w(1, 2) = w(2, 1) = 0.3;
    CHECK(heterophily_ratio(w, y, 0.5) == doctest::Approx(0.0));
    CHECK_THROWS_AS(heterophily_ratio(Matrix::Zero(4, 4), y), ContractError);
}

TEST_CASE("SBM heterophily ratio concentrates at its expectation") {
    // n = 300, 3 balanced classes: 14850 intra pairs, 30000 inter pairs.
    const double intra = 3 * 100.0 * 99.0 / 2.0;
    const double inter = 300.0 * 299.0 / 2.0 - intra;
    const double expected = inter * 0.05 / (inter * 0.05 + intra * 0.005);
    CHECK(expected == doctest::Approx(0.9528).epsilon(1e-4));
    double sum = 0;
    const int draws = 8;
    for (int s = 0; s < draws; ++s) {
        SyntheticSpec spec;
        spec.seed = 100 + s;
        spec.num_splits = 1;
        const LabeledGraph g = gen_synthetic(spec);
        sum += heterophily_ratio(g.adjacency, g.labels);
    }
    CHECK(sum / draws == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("perturbation has the requested spectral norm and is a rescaled fixed direction") {
    std::mt19937_64 rng(9);
    const Matrix l = normalized_laplacian(test::random_adjacency(12, 0.4, rng));
    const Perturbation p1 = perturb_laplacian(l, 1e-3, 77);
    const Perturbation p2 = perturb_laplacian(l, 1e-2, 77);
    CHECK(spectral_norm(p1.error) == doctest::Approx(1e-3).epsilon(1e-9));
    CHECK((p1.error - p1.error.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((p2.error - 10.0 * p1.error).norm() < 1e-12);
    CHECK((p1.perturbed - l - p1.error).norm() < 1e-15);
    CHECK(p1.delta >= 0.0);

    // delta compares eigenvectors of L with those of E, so it ignores the scale of E.
    CHECK(p2.delta == doctest::Approx(p1.delta).epsilon(1e-9));
    const Perturbation zero = perturb_laplacian(l, 0.0, 77);
    CHECK(zero.error.isZero(0.0));
    CHECK(zero.perturbed == l);
}

TEST_CASE("eigenvector misalignment is zero for identical matrices") {
    std::mt19937_64 rng(11);
    const Matrix l = normalized_laplacian(test::random_adjacency(8, 0.5, rng, true));
    CHECK(eigenvector_misalignment(l, l) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("split validation") {
    Split s{{0, 1}, {2}, {3}};
    CHECK_NOTHROW(validate_split(s, 4));
    CHECK_THROWS_AS(validate_split(Split{{0, 1}, {1}, {3}}, 4), ValidationError);
    CHECK_THROWS_AS(validate_split(Split{{0, 9}, {2}, {3}}, 4), ValidationError);
    CHECK_THROWS_AS(validate_split(Split{{0, 1}, {}, {3}}, 4), ValidationError);
}

TEST_CASE("argmax ties go to the lowest index") {
    Matrix m(1, 3);
    m << 0.4, 0.4, 0.2;
    CHECK(argmax_row(m, 0) == 0);
}
