#include "fggsl/autodiff.hpp"
#include "fggsl/errors.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace fggsl;
using ad::Matrix;
using ad::ParameterSet;
using ad::Tape;
using ad::Tensor;

namespace {

using Builder = std::function<Tensor(Tape&, ParameterSet&)>;

// Central differences written out independently of the library's grad_check.
double max_fd_gap(const Builder& build, ParameterSet params) {
    params.zero_grad();
    {
        Tape tape;
        tape.backward(build(tape, params), params);
    }
    double worst = 0;
    const double h = 1e-6;
    for (const auto& name : params.names()) {
        Matrix& p = params.value(name);
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            const double orig = p.data()[k];
            p.data()[k] = orig + h;
            Tape t1;
            const double up = build(t1, params).scalar();
            p.data()[k] = orig - h;
            Tape t2;
            const double down = build(t2, params).scalar();
            p.data()[k] = orig;
            const double numeric = (up - down) / (2 * h);
            const double analytic = params.grad(name).data()[k];
            worst = std::max(worst, std::abs(numeric - analytic) / std::max(1.0, std::abs(numeric)));
        }
    }
    return worst;
}

// Contracts an op output with a fixed random weight so every entry matters.
Tensor contract(Tape& tape, const Tensor& t, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix w = test::random_matrix(t.rows(), t.cols(), rng);
    return ad::sum(ad::hadamard(t, tape.constant(w)));
}

ParameterSet two_params(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParameterSet p;
    p.add("a", test::random_matrix(r, c, rng));
    p.add("b", test::random_matrix(r, c, rng));
    return p;
}

}  // namespace

TEST_CASE("elementwise and linear ops match finite differences") {
    ParameterSet p = two_params(3, 4, 1);
    std::mt19937_64 rng(2);
    p.add("m", test::random_matrix(4, 2, rng));
    p.add("v", test::random_matrix(3, 1, rng));
    p.add("u", test::random_matrix(4, 1, rng));
    p.add("bias", test::random_matrix(1, 4, rng));

    const std::vector<std::pair<const char*, Builder>> cases{
        {"matmul", [](Tape& t, ParameterSet& s) { return contract(t, ad::matmul(t.parameter(s, "a"), t.parameter(s, "m")), 3); }},
        {"add", [](Tape& t, ParameterSet& s) { return contract(t, ad::add(t.parameter(s, "a"), t.parameter(s, "b")), 4); }},
        {"sub", [](Tape& t, ParameterSet& s) { return contract(t, ad::sub(t.parameter(s, "a"), t.parameter(s, "b")), 5); }},
        {"hadamard", [](Tape& t, ParameterSet& s) { return contract(t, ad::hadamard(t.parameter(s, "a"), t.parameter(s, "b")), 6); }},
        {"scale", [](Tape& t, ParameterSet& s) { return contract(t, ad::scale(t.parameter(s, "a"), -2.5), 7); }},
        {"sigmoid", [](Tape& t, ParameterSet& s) { return contract(t, ad::sigmoid(t.parameter(s, "a")), 8); }},
        {"tanh", [](Tape& t, ParameterSet& s) { return contract(t, ad::tanh(t.parameter(s, "a")), 9); }},
        {"transpose", [](Tape& t, ParameterSet& s) { return contract(t, ad::transpose(t.parameter(s, "a")), 10); }},
        {"gram", [](Tape& t, ParameterSet& s) { return contract(t, ad::gram(t.parameter(s, "a")), 11); }},
        {"row_sums", [](Tape& t, ParameterSet& s) { return contract(t, ad::row_sums(t.parameter(s, "a")), 12); }},
        {"scale_rows", [](Tape& t, ParameterSet& s) { return contract(t, ad::scale_rows(t.parameter(s, "a"), t.parameter(s, "v")), 13); }},
        {"scale_cols", [](Tape& t, ParameterSet& s) { return contract(t, ad::scale_cols(t.parameter(s, "a"), t.parameter(s, "u")), 14); }},
        {"add_row_vector", [](Tape& t, ParameterSet& s) { return contract(t, ad::add_row_vector(t.parameter(s, "a"), t.parameter(s, "bias")), 15); }},
        {"slice_rows", [](Tape& t, ParameterSet& s) { return contract(t, ad::slice_rows(t.parameter(s, "a"), 1, 2), 16); }},
        {"softmax", [](Tape& t, ParameterSet& s) { return contract(t, ad::softmax(t.parameter(s, "a")), 17); }},
        {"concat", [](Tape& t, ParameterSet& s) {
             std::vector<Tensor> parts{t.parameter(s, "a"), t.parameter(s, "b"), t.parameter(s, "a")};
             return contract(t, ad::concat_cols(parts), 18);
         }},
        {"same input twice", [](Tape& t, ParameterSet& s) {
             Tensor a = t.parameter(s, "a");
             return contract(t, ad::hadamard(a, a), 19);
         }},
    };
    for (const auto& [name, build] : cases) {
        CAPTURE(name);
        CHECK(max_fd_gap(build, p) < 1e-7);
    }
}

TEST_CASE("rsqrt_clamped has a zero gradient below the clamp") {
    ParameterSet p;
    Matrix x(1, 3);
    x << 4.0, 1e-12, 0.25;
    p.add("x", x);
    Tape tape;
    Tensor y = ad::rsqrt_clamped(tape.parameter(p, "x"), 1e-8);
    CHECK(y.value()(0, 0) == doctest::Approx(0.5));
    CHECK(y.value()(0, 1) == doctest::Approx(1e4));
    tape.backward(ad::sum(y), p);
    CHECK(p.grad("x")(0, 0) == doctest::Approx(-0.5 * std::pow(4.0, -1.5)));
    CHECK(p.grad("x")(0, 1) == 0.0);
    CHECK(p.grad("x")(0, 2) == doctest::Approx(-0.5 * std::pow(0.25, -1.5)));
}

TEST_CASE("gather, cosine_rows and replace_rows gradients") {
    ParameterSet p = two_params(5, 3, 21);
    const std::vector<ad::IndexPair> pairs{{0, 1}, {2, 4}, {3, 3}, {4, 0}};
    const std::vector<int> rows{1, 3};
    std::mt19937_64 rng(22);
    const Matrix source = test::random_matrix(5, 3, rng);
    const std::vector<Builder> cases{
        [&](Tape& t, ParameterSet& s) { return contract(t, ad::gather(ad::gram(t.parameter(s, "a")), pairs), 23); },
        [&](Tape& t, ParameterSet& s) { return contract(t, ad::cosine_rows(t.parameter(s, "a"), t.parameter(s, "b"), pairs), 24); },
        [&](Tape& t, ParameterSet& s) { return contract(t, ad::cosine_rows(t.parameter(s, "a"), t.parameter(s, "a"), pairs), 25); },
        [&](Tape& t, ParameterSet& s) { return contract(t, ad::replace_rows(t.parameter(s, "a"), rows, source), 26); },
    };
    for (const auto& build : cases) CHECK(max_fd_gap(build, p) < 1e-7);
}

TEST_CASE("softmax cross-entropy equals the naive formula and its gradient") {
    std::mt19937_64 rng(31);
    ParameterSet p;
    p.add("z", test::random_matrix(4, 3, rng, 3.0));
    const Matrix y = test::one_hot({0, 2, 1, 2}, 3);
    const std::vector<int> rows{0, 2, 3};

    Tape tape;
    auto ce = ad::softmax_cross_entropy(tape.parameter(p, "z"), y, rows);
    const Matrix& z = p.value("z");
    double naive = 0;
    for (int r : rows) {
        const double lse = std::log(z.row(r).array().exp().sum());
        naive += lse - z.row(r).dot(y.row(r));
    }
    naive /= rows.size();
    CHECK(ce.loss.scalar() == doctest::Approx(naive).epsilon(1e-13));
    for (int r = 0; r < 4; ++r) CHECK(ce.probs.value().row(r).sum() == doctest::Approx(1.0));

    const Builder build = [&](Tape& t, ParameterSet& s) {
        return ad::softmax_cross_entropy(t.parameter(s, "z"), y, rows).loss;
    };
    CHECK(max_fd_gap(build, p) < 1e-8);
}

TEST_CASE("softmax is stable for large logits") {
    Tape tape;
    Matrix z(1, 3);
    z << 1000.0, 1000.0, -1000.0;
    const Matrix s = ad::softmax(tape.constant(z)).value();
    CHECK(s(0, 0) == doctest::Approx(0.5));
    CHECK(s(0, 2) == 0.0);
    Matrix big(1, 2);
    big << 800.0, -800.0;
    const Matrix sg = ad::sigmoid(tape.constant(big)).value();
    CHECK(sg(0, 0) == 1.0);
    CHECK(sg(0, 1) >= 0.0);
    CHECK(std::isfinite(sg(0, 1)));
}

TEST_CASE("gram is symmetric bit for bit") {
    std::mt19937_64 rng(41);
    Tape tape;
    const Matrix g = ad::gram(tape.constant(test::random_matrix(9, 5, rng))).value();
    CHECK(g == g.transpose());
}

TEST_CASE("contract errors") {
    Tape tape;
    Tensor a = tape.constant(Matrix::Ones(2, 3));
    Tensor b = tape.constant(Matrix::Ones(2, 3));
    CHECK_THROWS_AS(ad::matmul(a, b), DimensionError);
    CHECK_THROWS_AS(ad::add(a, tape.constant(Matrix::Ones(3, 2))), DimensionError);

    Matrix rows = Matrix::Ones(2, 3);
    rows.row(1).setZero();
    const std::vector<ad::IndexPair> pairs{{0, 1}};
    CHECK_THROWS_WITH_AS(ad::cosine_rows(tape.constant(rows), tape.constant(rows), pairs),
                         doctest::Contains("row 1"), ContractError);

    const std::vector<int> none;
    CHECK_THROWS_AS(ad::softmax_cross_entropy(a, Matrix::Identity(2, 3), none), ContractError);
    Matrix bad = Matrix::Zero(2, 3);
    bad(0, 0) = 0.5;
    const std::vector<int> first{0};
    CHECK_THROWS_AS(ad::softmax_cross_entropy(a, bad, first), ContractError);

    ParameterSet p;
    CHECK_THROWS_AS(tape.backward(a, p), ContractError);
}

TEST_CASE("tensors go stale when the tape is cleared") {
    Tape tape;
    Tensor a = tape.constant(Matrix::Ones(1, 1));
    CHECK(a.scalar() == 1.0);
    tape.clear();
    CHECK_THROWS_AS(a.value(), ContractError);
}

TEST_CASE("backward accumulates into parameters and clears the tape") {
    ParameterSet p;
    p.add("w", Matrix::Constant(1, 1, 3.0));
    Tape tape;
    Tensor w = tape.parameter(p, "w");
    tape.backward(ad::sum(ad::hadamard(w, w)), p);
    CHECK(p.grad("w")(0, 0) == doctest::Approx(6.0));
    CHECK(tape.size() == 0);
    Tape again;
    Tensor w2 = again.parameter(p, "w");
    again.backward(ad::sum(w2), p);
    CHECK(p.grad("w")(0, 0) == doctest::Approx(7.0));
    p.zero_grad();
    CHECK(p.grad("w")(0, 0) == 0.0);
}

TEST_CASE("constants carry no gradient") {
    Tape tape;
    Tensor c = tape.constant(Matrix::Ones(2, 2));
    CHECK_FALSE(c.grad_tracked());
    CHECK_FALSE(ad::tanh(c).grad_tracked());
    ParameterSet p;
    p.add("w", Matrix::Ones(2, 2));
    CHECK(ad::matmul(c, tape.parameter(p, "w")).grad_tracked());
}

TEST_CASE("grad_check reports agreement and catches a wrong rule") {
    ParameterSet p = two_params(3, 3, 51);
    const ad::LossBuilder good = [](Tape& t, ParameterSet& s) {
        return ad::sum(ad::tanh(ad::matmul(t.parameter(s, "a"), t.parameter(s, "b"))));
    };
    const auto ok = ad::grad_check(good, p);
    CHECK(ok.max_relative_error < 1e-6);
    CHECK(ok.entries_checked == 18);

    // Square with a deliberately halved derivative.
    const ad::LossBuilder wrong = [](Tape& t, ParameterSet& s) {
        Tensor a = t.parameter(s, "a");
        Tensor sq = t.record(a.value().array().square().matrix(), {a.id()},
                             [id = a.id()](const Tape& tape, const Matrix&, const Matrix& g, ad::GradSink& sink) {
                                 sink[0] += (g.array() * tape.value(id).array()).matrix();
                             });
        return ad::sum(sq);
    };
    const auto bad = ad::grad_check(wrong, p);
    CHECK(bad.max_relative_error > 0.1);
    CHECK(bad.worst_parameter == "a");
}
