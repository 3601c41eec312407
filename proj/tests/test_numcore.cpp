// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hlab/adam.hpp"
#include "hlab/matrix.hpp"
#include "hlab/rng.hpp"
#include "hlab/tape.hpp"

using namespace hlab;

namespace {

// independent triple-loop product, kept deliberately dumb
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul basics and oracle") {
    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix eye(2, 2, {1, 0, 0, 1});
    CHECK(matmul(a, eye).bit_equal(a));

    Matrix row(1, 2, {1, 2});
    Matrix col(2, 1, {3, 4});
    CHECK(matmul(row, col)[0] == 11.0);

    Rng rng(7);
    Matrix x = rng.gaussian_matrix(3, 4, 1.0);
    Matrix y = rng.gaussian_matrix(4, 2, 1.0);
    CHECK(max_abs_diff(matmul(x, y), naive_matmul(x, y)) < 1e-12);

    CHECK_THROWS_AS(matmul(x, x), std::invalid_argument);
}

TEST_CASE("matmul transpose variants agree with explicit transpose") {
    Rng rng(8);
    Matrix a = rng.gaussian_matrix(3, 5, 1.0);
    Matrix b = rng.gaussian_matrix(4, 5, 1.0);
    CHECK(max_abs_diff(matmul_nt(a, b), naive_matmul(a, transpose(b))) < 1e-12);
    Matrix c = rng.gaussian_matrix(3, 4, 1.0);
    CHECK(max_abs_diff(matmul_tn(a, c), naive_matmul(transpose(a), c)) < 1e-12);
}

TEST_CASE("softmax_rows") {
    Matrix flat(1, 2, {0, 0});
    Matrix s = softmax_rows(flat);
    CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-14));

    Matrix big(1, 2, {1000, 0});
    Matrix sb = softmax_rows(big);
    CHECK(sb.all_finite());
    CHECK(std::abs(sb[0] - 1.0) < 1e-12);
    CHECK(std::abs(sb[1]) < 1e-12);

    Rng rng(3);
    Matrix x = rng.gaussian_matrix(4, 6, 2.0);
    Matrix y = softmax_rows(x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double sum = 0.0, esum = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            sum += y.at(i, j);
            esum += std::exp(x.at(i, j));
            CHECK(y.at(i, j) >= 0.0);
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
        for (std::size_t j = 0; j < x.cols(); ++j)
            CHECK(std::abs(y.at(i, j) - std::exp(x.at(i, j)) / esum) < 1e-12);
    }
}

TEST_CASE("layer_norm_rows") {
    Matrix gain(1, 4, 1.0), bias(1, 4, 0.0);
    Matrix constant(1, 4, 5.0);
    Matrix yc = layer_norm_rows(constant, gain, bias, 1e-5);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(yc[j]) < 1e-3);

    Matrix g2(1, 2, 1.0), b2(1, 2, 0.0);
    Matrix pm(1, 2, {1, -1});
    Matrix yp = layer_norm_rows(pm, g2, b2, 1e-5);
    CHECK(std::abs(yp[0] - 1.0) < 1e-5);
    CHECK(std::abs(yp[1] + 1.0) < 1e-5);

    Rng rng(5);
    Matrix x = rng.gaussian_matrix(1, 8, 3.0);
    Matrix g = rng.gaussian_matrix(1, 8, 1.0);
    Matrix b = rng.gaussian_matrix(1, 8, 1.0);
    Matrix y = layer_norm_rows(x, g, b, 1e-5);
    double mean = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mean += x[j];
    mean /= 8.0;
    double var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) {
        const double expect = (x[j] - mean) / std::sqrt(var + 1e-5) * g[j] + b[j];
        CHECK(std::abs(y[j] - expect) < 1e-10);
    }

    CHECK_THROWS_AS(layer_norm_rows(x, gain, bias, 1e-5), std::invalid_argument);
}

TEST_CASE("backward: analytic square") {
    Matrix x(1, 1, {3.0});
    Tape t;
    NodeId xn = t.leaf(&x, true);
    NodeId loss = t.matmul(xn, xn);
    t.backward(loss);
    CHECK(t.grad_for(&x)[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward: disconnected leaf gets exactly zero") {
    Matrix x(1, 1, {3.0});
    Matrix unused(2, 2, 1.0);
    Tape t;
    NodeId xn = t.leaf(&x, true);
    t.leaf(&unused, true);
    t.backward(t.matmul(xn, xn));
    const Matrix& g = t.grad_for(&unused);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("backward: frozen leaves receive no gradient entry") {
    Matrix x(1, 1, {2.0});
    Matrix w(1, 1, {4.0});
    Tape t;
    NodeId loss = t.matmul(t.leaf(&x, true), t.leaf(&w, false));
    t.backward(loss);
    CHECK(t.grads().count(&x) == 1);
    CHECK(t.grads().count(&w) == 0);
}

TEST_CASE("backward: non-scalar loss rejected") {
    Matrix x(2, 2, 1.0);
    Tape t;
    NodeId xn = t.leaf(&x, true);
    CHECK_THROWS_AS(t.backward(xn), std::invalid_argument);
}

namespace {

// central finite differences of a scalar-valued tape program w.r.t. one leaf
template <typename BuildFn>
void check_grads_fd(std::vector<Matrix*> leaves, BuildFn build, double h = 1e-5,
                    double tol = 1e-5) {
    Tape t0;
    NodeId loss0 = build(t0);
    t0.backward(loss0);
    for (Matrix* leaf : leaves) {
        const Matrix& g = t0.grad_for(leaf);
        for (std::size_t i = 0; i < leaf->size(); ++i) {
            const double orig = (*leaf)[i];
            (*leaf)[i] = orig + h;
            Tape tp;
            const double fp = tp.value(build(tp))[0];
            (*leaf)[i] = orig - h;
            Tape tm;
            const double fm = tm.value(build(tm))[0];
            (*leaf)[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-4});
            CHECK(std::abs(fd - g[i]) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("backward: finite differences across every primitive") {
    Rng rng(11);
    Matrix a = rng.gaussian_matrix(3, 4, 0.5);
    Matrix b = rng.gaussian_matrix(5, 4, 0.5);
    Matrix w2 = rng.gaussian_matrix(2, 5, 0.5);
    Matrix gain = rng.gaussian_matrix(1, 4, 0.3, 1.0);
    Matrix bias = rng.gaussian_matrix(1, 4, 0.3);
    Matrix table = rng.gaussian_matrix(6, 4, 0.5);
    std::vector<std::uint32_t> targets = {1, 0, 3};
    std::vector<bool> mask = {true, true, false};

    auto build = [&](Tape& t) {
        NodeId an = t.leaf(&a, true);
        NodeId ln = t.layer_norm_rows(an, t.leaf(&gain, true), t.leaf(&bias, true), 1e-5);
        NodeId emb = t.embedding_lookup(t.leaf(&table, true), {0, 5, 2});
        NodeId mixed = t.add(ln, emb);
        NodeId h = t.gelu(t.matmul_nt(mixed, t.leaf(&b, true)));
        NodeId hr = t.relu(t.slice_cols(h, 1, 3));
        NodeId cat = t.concat_cols({hr, t.scale(t.softmax_rows(h), 0.7)});
        NodeId r = t.reshape(cat, 3, 8);
        NodeId out = t.matmul_nt(t.slice_cols(r, 0, 5), t.leaf(&w2, true));
        NodeId pooled = t.mean_pool_rows(out);
        NodeId logits = t.concat_cols({out, t.matmul(out, t.reshape(pooled, 2, 1))});
        return t.cross_entropy(logits, targets, mask);
    };
    check_grads_fd({&a, &b, &w2, &gain, &bias, &table}, build);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Matrix p(2, 2, {1, 2, 3, 4});
    Matrix before = p;
    Adam opt;
    opt.add_param(&p);
    std::unordered_map<const Matrix*, Matrix> grads;
    grads.emplace(&p, Matrix(2, 2, 0.0));
    for (int i = 0; i < 5; ++i) opt.step(grads);
    CHECK(p.bit_equal(before));
}

TEST_CASE("adam: first step moves by ~lr*sign(g)") {
    Matrix p(1, 3, {1.0, -2.0, 0.5});
    Matrix before = p;
    Adam opt(AdamConfig{.lr = 1e-3});
    opt.add_param(&p);
    std::unordered_map<const Matrix*, Matrix> grads;
    grads.emplace(&p, Matrix(1, 3, {0.7, -1.3, 2.0}));
    opt.step(grads);
    for (std::size_t i = 0; i < 3; ++i) {
        const double g = grads.at(&p)[i];
        const double expected = before[i] - 1e-3 * (g > 0 ? 1.0 : -1.0);
        CHECK(std::abs(p[i] - expected) < 1e-6);
    }
}

TEST_CASE("adam: 10-step trajectory matches reference recurrences") {
    AdamConfig cfg;
    Matrix p(1, 2, {0.3, -0.8});
    double ref[2] = {0.3, -0.8};
    double m[2] = {0, 0}, v[2] = {0, 0};
    Adam opt(cfg);
    opt.add_param(&p);
    Rng rng(21);
    for (int step = 1; step <= 10; ++step) {
        Matrix g(1, 2, {rng.normal(), rng.normal()});
        std::unordered_map<const Matrix*, Matrix> grads;
        grads.emplace(&p, g);
        opt.step(grads);
        for (int i = 0; i < 2; ++i) {
            m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / (1 - std::pow(cfg.beta1, step));
            const double vhat = v[i] / (1 - std::pow(cfg.beta2, step));
            ref[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    CHECK(std::abs(p[0] - ref[0]) < 1e-15);
    CHECK(std::abs(p[1] - ref[1]) < 1e-15);
}

TEST_CASE("adam: missing gradient is a contract error") {
    Matrix p(1, 1, {1.0});
    Adam opt;
    opt.add_param(&p);
    std::unordered_map<const Matrix*, Matrix> grads;
    CHECK_THROWS_AS(opt.step(grads), std::invalid_argument);
}

TEST_CASE("rng: identical streams replay identically, distinct streams differ") {
    Rng a = Rng::stream(42, "corpus", 7);
    Rng b = Rng::stream(42, "corpus", 7);
    Rng c = Rng::stream(42, "corpus", 8);
    bool all_same = true;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        if (x != c.next_u64()) all_same = false;
    }
    CHECK_FALSE(all_same);
}

TEST_CASE("rng: gaussian matrix is seeded-deterministic and roughly normal") {
    Rng a = Rng::stream(1, "init");
    Rng b = Rng::stream(1, "init");
    Matrix ma = a.gaussian_matrix(50, 40, 0.02);
    CHECK(ma.bit_equal(b.gaussian_matrix(50, 40, 0.02)));
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
        sum += ma[i];
        sq += ma[i] * ma[i];
    }
    const double mean = sum / ma.size();
    const double stddev = std::sqrt(sq / ma.size() - mean * mean);
    CHECK(std::abs(mean) < 0.002);
    CHECK(std::abs(stddev - 0.02) < 0.002);
}

TEST_CASE("tape: cross_entropy rejects all-masked input") {
    Matrix z(2, 3, 0.0);
    Tape t;
    NodeId zn = t.leaf(&z, true);
    CHECK_THROWS_AS(t.cross_entropy(zn, {0, 1}, {false, false}), std::invalid_argument);
}
