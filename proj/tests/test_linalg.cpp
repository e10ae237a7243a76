// Copyright (c) 2026 The kronlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cmath>
#include <limits>

#include "kronlora/dense_matrix.hpp"
#include "kronlora/errors.hpp"
#include "kronlora/rng.hpp"
#include "oracles.hpp"

using namespace kronlora;

TEST_CASE("construction rejects zero dimensions and ragged rows") {
    CHECK_THROWS_AS(DenseMatrix(0, 3), ShapeError);
    CHECK_THROWS_AS(DenseMatrix(2, 0), ShapeError);
    CHECK_THROWS_AS(DenseMatrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    CHECK_THROWS_AS((DenseMatrix{{1, 2}, {3}}), ShapeError);
    const DenseMatrix m{{1, 2, 3}, {4, 5, 6}};
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m.size() == m.rows() * m.cols());
    CHECK(m(1, 0) == 4.0);
    CHECK(m.shape_string() == "(2x3)");
}

TEST_CASE("matmul hand examples") {
    CHECK(matmul(DenseMatrix{{1, 0}, {0, 1}}, DenseMatrix{{3, 4}, {5, 6}}) == DenseMatrix{{3, 4}, {5, 6}});
    CHECK(matmul(DenseMatrix{{1, 2}}, DenseMatrix{{3}, {4}}) == DenseMatrix{{11}});
}

TEST_CASE("matmul matches the triple loop, including transposed variants") {
    Rng rng(11);
    const DenseMatrix a = rng.normal_matrix(7, 5);
    const DenseMatrix b = rng.normal_matrix(5, 3);
    const DenseMatrix want = oracle::triple_loop_matmul(a, b);
    CHECK(oracle::max_rel_error(matmul(a, b), want) <= 1e-12);
    CHECK(oracle::max_rel_error(matmul_nt(a, oracle::transpose_by_definition(b)), want) <= 1e-12);
    CHECK(oracle::max_rel_error(matmul_tn(oracle::transpose_by_definition(a), b), want) <= 1e-12);
}

TEST_CASE("matmul shape errors name both operands") {
    try {
        (void)matmul(DenseMatrix(2, 3), DenseMatrix(4, 2));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2x3)") != std::string::npos);
        CHECK(msg.find("(4x2)") != std::string::npos);
    }
}

TEST_CASE("matmul associativity on random triples") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t p = 1 + rng.uniform_index(9);
        const std::size_t q = 1 + rng.uniform_index(9);
        const std::size_t s = 1 + rng.uniform_index(9);
        const std::size_t t = 1 + rng.uniform_index(9);
        const DenseMatrix a = rng.normal_matrix(p, q);
        const DenseMatrix b = rng.normal_matrix(q, s);
        const DenseMatrix c = rng.normal_matrix(s, t);
        const double bound = 1e-9 * std::max(1.0, max_abs(a) * max_abs(b) * max_abs(c) * q * s);
        CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= bound);
    }
}

TEST_CASE("kron hand examples and per-block check") {
    const DenseMatrix b{{1, 2}, {3, 4}};
    CHECK(kron(DenseMatrix{{1}}, b) == b);
    CHECK(kron(DenseMatrix{{1, 0}, {0, 1}}, DenseMatrix{{5}}) == DenseMatrix{{5, 0}, {0, 5}});

    Rng rng(13);
    const DenseMatrix a = rng.normal_matrix(2, 3);
    const DenseMatrix bb = rng.normal_matrix(4, 5);
    const DenseMatrix k = kron(a, bb);
    REQUIRE(k.rows() == 8);
    REQUIRE(k.cols() == 15);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            for (std::size_t r = 0; r < 4; ++r) {
                for (std::size_t c = 0; c < 5; ++c) {
                    CHECK(k(i * 4 + r, j * 5 + c) == a(i, j) * bb(r, c));
                }
            }
        }
    }
    CHECK(k == oracle::kron_by_definition(a, bb));
}

TEST_CASE("vec_reshape fills column-major") {
    const DenseMatrix v = DenseMatrix::column(std::vector<double>{1, 2, 3, 4});
    CHECK(vec_reshape(v, 2, 2) == DenseMatrix{{1, 3}, {2, 4}});
    CHECK(vec_reshape(DenseMatrix{{7.5}}, 1, 1) == DenseMatrix{{7.5}});
    CHECK_THROWS_AS(vec_reshape(v, 3, 2), ShapeError);
    // Row-major is the deliberately wrong convention kept for negative controls.
    CHECK(vec_reshape(v, 2, 2, VecOrder::RowMajor) == DenseMatrix{{1, 2}, {3, 4}});
}

TEST_CASE("vec_flatten inverts vec_reshape") {
    CHECK(vec_flatten(DenseMatrix{{1, 3}, {2, 4}}) == DenseMatrix::column(std::vector<double>{1, 2, 3, 4}));
    CHECK(vec_flatten(DenseMatrix{{2.5}}).size() == 1);
    Rng rng(14);
    const DenseMatrix v = rng.normal_matrix(12, 1);
    CHECK(vec_flatten(vec_reshape(v, 3, 4)) == v);
    CHECK(vec_flatten(DenseMatrix{{1, 3}, {2, 4}}) == oracle::stack_columns(DenseMatrix{{1, 3}, {2, 4}}));
}

TEST_CASE("vec trick holds column-major and fails row-major") {
    Rng rng(15);
    {
        const DenseMatrix a = rng.normal_matrix(3, 2);
        const DenseMatrix b = rng.normal_matrix(4, 5);
        const DenseMatrix x = rng.normal_matrix(5, 2);
        const DenseMatrix lhs = matmul(kron(a, b), vec_flatten(x));
        const DenseMatrix rhs = vec_flatten(matmul(matmul(b, x), transpose(a)));
        CHECK(oracle::max_rel_error(lhs, rhs) <= 1e-10);
    }
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t p = 1 + rng.uniform_index(6);
        const std::size_t q = 1 + rng.uniform_index(6);
        const std::size_t s = 1 + rng.uniform_index(6);
        const std::size_t t = 1 + rng.uniform_index(6);
        const DenseMatrix a = rng.normal_matrix(p, q);
        const DenseMatrix b = rng.normal_matrix(s, t);
        const DenseMatrix x = rng.normal_matrix(t, q);
        const DenseMatrix lhs = oracle::triple_loop_matmul(oracle::kron_by_definition(a, b), oracle::stack_columns(x));
        const DenseMatrix rhs = vec_flatten(matmul(matmul(b, x), transpose(a)));
        CHECK(oracle::max_rel_error(rhs, lhs) <= 1e-10);
    }
    const DenseMatrix a = rng.normal_matrix(3, 2);
    const DenseMatrix b = rng.normal_matrix(4, 5);
    const DenseMatrix x = rng.normal_matrix(5, 2);
    const DenseMatrix wrong = vec_flatten(matmul(matmul(b, x), transpose(a)), VecOrder::RowMajor);
    CHECK(oracle::max_rel_error(wrong, matmul(kron(a, b), vec_flatten(x))) > 1e-3);
}

TEST_CASE("numerical_rank basics") {
    CHECK(numerical_rank(DenseMatrix(4, 3)) == 0);
    for (std::size_t n = 1; n <= 8; ++n) {
        CHECK(numerical_rank(DenseMatrix::identity(n)) == n);
    }
    Rng rng(16);
    const DenseMatrix u = rng.normal_matrix(6, 1);
    const DenseMatrix v = rng.normal_matrix(1, 5);
    CHECK(numerical_rank(matmul(u, v)) == 1);
    CHECK(numerical_rank(DenseMatrix{{1, 2}, {2, 4}}) == 1);
    CHECK(numerical_rank(DenseMatrix{{1e-12, 0}, {0, 1}}) == 1);
}

TEST_CASE("rank identity on Gaussian matrices") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const DenseMatrix a = rng.normal_matrix(1 + rng.uniform_index(8), 1 + rng.uniform_index(8));
        const DenseMatrix b = rng.normal_matrix(1 + rng.uniform_index(8), 1 + rng.uniform_index(8));
        CHECK(numerical_rank(kron(a, b)) == numerical_rank(a) * numerical_rank(b));
        CHECK(numerical_rank(a) == std::min(a.rows(), a.cols()));
    }
}

TEST_CASE("elementwise helpers") {
    const DenseMatrix a{{1, -2}, {3, 4}};
    const DenseMatrix b{{0.5, 0.5}, {0.5, 0.5}};
    CHECK(add(a, b) == DenseMatrix{{1.5, -1.5}, {3.5, 4.5}});
    CHECK(subtract(a, b) == DenseMatrix{{0.5, -2.5}, {2.5, 3.5}});
    CHECK(scaled(a, 2.0) == DenseMatrix{{2, -4}, {6, 8}});
    CHECK(max_abs(a) == 4.0);
    CHECK(max_abs_diff(a, b) == 3.5);
    DenseMatrix c = a;
    add_in_place(c, b, -2.0);
    CHECK(c == DenseMatrix{{0, -3}, {2, 3}});
    CHECK(slice_columns(a, 1, 1) == DenseMatrix{{-2}, {4}});
    set_column(c, 0, DenseMatrix{{9}, {8}});
    CHECK(c == DenseMatrix{{9, -3}, {8, 3}});
    CHECK(all_finite(c));
    c(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(all_finite(c));
    CHECK_THROWS_AS(add(a, DenseMatrix(3, 2)), ShapeError);
}

TEST_CASE("rng streams are reproducible and splits are independent") {
    Rng a(2024);
    Rng b(2024);
    bool same = true;
    for (int i = 0; i < 10000; ++i) {
        same = same && a.next_u64() == b.next_u64();
    }
    CHECK(same);

    Rng c(2024);
    Rng d(2025);
    CHECK(c.next_u64() != d.next_u64());

    const Rng root(7);
    Rng s0 = root.split(0);
    Rng s1 = root.split(1);
    CHECK(s0.next_u64() != s1.next_u64());
    CHECK(root.counter() == 0);
    Rng again = root.split(0);
    Rng s0b = root.split(0);
    CHECK(again.next_u64() == s0b.next_u64());
}

TEST_CASE("rng distributions have the right moments") {
    Rng rng(99);
    const int n = 200000;
    double sum = 0.0;
    double sq = 0.0;
    double usum = 0.0;
    std::vector<int> counts(5, 0);
    bool in_range = true;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
        const double u = rng.uniform();
        in_range = in_range && u >= 0.0 && u < 1.0;
        usum += u;
        counts[rng.uniform_index(5)] += 1;
    }
    CHECK(in_range);
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
    CHECK(std::abs(usum / n - 0.5) < 0.01);
    for (int c : counts) {
        CHECK(std::abs(c - n / 5) < n / 100);
    }
}
