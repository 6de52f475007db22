#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "dnc/errors.hpp"
#include "dnc/losses.hpp"
#include "grad_oracle.hpp"

using namespace dnc;

namespace {

struct Instance {
    Matrix<double> x;
    Matrix<double> w;
    std::vector<double> bias;
    std::vector<std::size_t> labels;
};

// Unit-norm embeddings and prototypes; labels cover the classes.
Instance random_instance(std::size_t classes, std::size_t d, std::size_t batch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Instance in{Matrix<double>(batch, d), Matrix<double>(classes, d), std::vector<double>(classes), {}};
    for (std::size_t i = 0; i < batch; ++i) {
        const auto v = oracle::random_unit(d, rng);
        std::copy(v.begin(), v.end(), in.x.row(i).begin());
        in.labels.push_back(i % classes);
    }
    for (std::size_t j = 0; j < classes; ++j) {
        const auto v = oracle::random_unit(d, rng);
        std::copy(v.begin(), v.end(), in.w.row(j).begin());
    }
    std::normal_distribution<double> g(0.0, 0.5);
    for (double& b : in.bias) b = g(rng);
    return in;
}

std::vector<double> as_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

void copy_into(Matrix<double>& m, const std::vector<double>& v) { std::copy(v.begin(), v.end(), m.data()); }

}  // namespace

TEST_CASE("arcface with m = 0, s = 1 is cross-entropy over cosines") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto in = random_instance(6, 8, 5, seed);
        const auto arc = arcface_loss<double>(in.x, in.labels, in.w, 1.0, 0.0);
        const std::vector<double> zero(6, 0.0);
        const auto ce = ce_loss<double>(in.x, in.labels, in.w, zero);

        std::vector<std::vector<double>> cosines(5, std::vector<double>(6));
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 6; ++j) cosines[i][j] = dot(in.x.row(i).data(), in.w.row(j).data(), 8);
        }
        CHECK(std::abs(arc.loss - oracle::softmax_xent(cosines, in.labels)) <= 1e-12);
        CHECK(std::abs(arc.loss - ce.loss) <= 1e-12);
        for (std::size_t i = 0; i < arc.grad_weights.size(); ++i) {
            CHECK(std::abs(arc.grad_weights.data()[i] - ce.grad_weights.data()[i]) <= 1e-10);
        }
        for (std::size_t i = 0; i < arc.grad_x.size(); ++i) {
            CHECK(std::abs(arc.grad_x.data()[i] - ce.grad_x.data()[i]) <= 1e-10);
        }
    }
}

TEST_CASE("arcface loss vanishes for perfectly aligned prototypes") {
    Matrix<double> w(2, 4);
    w(0, 0) = 1.0;
    w(1, 1) = 1.0;
    Matrix<double> x(1, 4);
    x(0, 0) = 1.0;
    const std::vector<std::size_t> label{0};
    const double s_small = arcface_loss<double>(x, label, w, 5.0, 0.0).loss;
    const double s_large = arcface_loss<double>(x, label, w, 60.0, 0.0).loss;
    CHECK(s_large < s_small);
    CHECK(s_large < 1e-20);
}

TEST_CASE("arcface gradients match central differences") {
    const double scales[] = {1.0, 30.0};
    const double margins[] = {0.0, 0.2, 0.4};
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const double s = scales[trial % 2];
        const double m = margins[trial % 3];
        auto in = random_instance(5, 8, 4, 100 + trial);
        const auto analytic = arcface_loss<double>(in.x, in.labels, in.w, s, m);

        auto wv = as_vector(in.w.flat());
        const auto num_w = oracle::central_diff(wv, [&] {
            copy_into(in.w, wv);
            return arcface_loss<double>(in.x, in.labels, in.w, s, m).loss;
        });
        copy_into(in.w, wv);
        auto xv = as_vector(in.x.flat());
        const auto num_x = oracle::central_diff(xv, [&] {
            copy_into(in.x, xv);
            return arcface_loss<double>(in.x, in.labels, in.w, s, m).loss;
        });
        CAPTURE(trial);
        CHECK(oracle::relative_error(num_w, analytic.grad_weights.flat()) < 1e-4);
        CHECK(oracle::relative_error(num_x, analytic.grad_x.flat()) < 1e-4);
    }
}

TEST_CASE("hard-example branch keeps the target monotone") {
    // cos(theta_y) below cos(pi - m) switches to cos(theta_y) - m sin(m).
    const double m = 0.4;
    Matrix<double> w(2, 2);
    w(0, 0) = 1.0;
    w(1, 1) = 1.0;
    Matrix<double> x(1, 2);
    x(0, 0) = -0.99;
    x(0, 1) = std::sqrt(1 - 0.99 * 0.99);
    const std::vector<std::size_t> label{0};
    const auto out = arcface_loss<double>(x, label, w, 1.0, m);
    const double target = -0.99 - m * std::sin(m);
    const double other = x(0, 1);
    const double expect = std::log(std::exp(target) + std::exp(other)) - target;
    CHECK(out.loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("arcface loss ignores the order of non-target classes") {
    auto in = random_instance(7, 8, 1, 42);
    in.labels = {3};
    const double base = arcface_loss<double>(in.x, in.labels, in.w, 30.0, 0.4).loss;
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(9);
    for (int t = 0; t < 20; ++t) {
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix<double> w(7, 8);
        std::size_t new_label = 0;
        for (std::size_t j = 0; j < 7; ++j) {
            std::copy(in.w.row(perm[j]).begin(), in.w.row(perm[j]).end(), w.row(j).begin());
            if (perm[j] == 3) new_label = j;
        }
        const std::vector<std::size_t> labels{new_label};
        CHECK(std::abs(arcface_loss<double>(in.x, labels, w, 30.0, 0.4).loss - base) <= 1e-12 * std::abs(base));
    }
}

TEST_CASE("cross-entropy head") {
    SUBCASE("uniform logits give ln K") {
        Matrix<double> w(5, 3);
        Matrix<double> x(1, 3);
        x(0, 2) = 1.0;
        const std::vector<double> bias(5, 0.25);
        const std::vector<std::size_t> label{4};
        CHECK(ce_loss<double>(x, label, w, bias).loss == doctest::Approx(std::log(5.0)).epsilon(1e-15));
    }
    SUBCASE("a dominant logit drives the loss to zero") {
        Matrix<double> w(3, 2);
        Matrix<double> x(1, 2);
        x(0, 0) = 1.0;
        std::vector<double> bias{0.0, 0.0, 0.0};
        const std::vector<std::size_t> label{1};
        double prev = INFINITY;
        for (double gap : {1.0, 10.0, 100.0}) {
            bias[1] = gap;
            const double loss = ce_loss<double>(x, label, w, bias).loss;
            CHECK(loss < prev);
            prev = loss;
        }
        CHECK(prev < 1e-40);
    }
    SUBCASE("gradients match central differences") {
        for (std::uint64_t trial = 0; trial < 10; ++trial) {
            auto in = random_instance(5, 8, 4, 300 + trial);
            // Larger weights than prototypes to exercise unnormalized rows.
            for (double& v : in.w.flat()) v *= 3.0;
            const auto analytic = ce_loss<double>(in.x, in.labels, in.w, in.bias);
            auto wv = as_vector(in.w.flat());
            const auto num_w = oracle::central_diff(wv, [&] {
                copy_into(in.w, wv);
                return ce_loss<double>(in.x, in.labels, in.w, in.bias).loss;
            });
            copy_into(in.w, wv);
            auto bv = in.bias;
            const auto num_b = oracle::central_diff(bv, [&] {
                return ce_loss<double>(in.x, in.labels, in.w, bv).loss;
            });
            auto xv = as_vector(in.x.flat());
            const auto num_x = oracle::central_diff(xv, [&] {
                copy_into(in.x, xv);
                return ce_loss<double>(in.x, in.labels, in.w, in.bias).loss;
            });
            CHECK(oracle::relative_error(num_w, analytic.grad_weights.flat()) < 1e-4);
            CHECK(oracle::relative_error(num_b, analytic.grad_bias) < 1e-4);
            CHECK(oracle::relative_error(num_x, analytic.grad_x.flat()) < 1e-4);
        }
    }
}

TEST_CASE("loss preconditions") {
    auto in = random_instance(3, 4, 2, 1);
    SUBCASE("non-normalized input") {
        in.x(1, 0) += 0.01;
        CHECK_THROWS_AS(arcface_loss<double>(in.x, in.labels, in.w, 30.0, 0.4), InvalidInput);
    }
    SUBCASE("label out of range") {
        in.labels[0] = 3;
        CHECK_THROWS_AS(arcface_loss<double>(in.x, in.labels, in.w, 30.0, 0.4), InvalidInput);
        CHECK_THROWS_AS(ce_loss<double>(in.x, in.labels, in.w, in.bias), InvalidInput);
    }
    SUBCASE("bias size") {
        const std::vector<double> bias(2);
        CHECK_THROWS_AS(ce_loss<double>(in.x, in.labels, in.w, bias), InvalidInput);
    }
}
