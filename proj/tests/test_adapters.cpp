#include <catch2/catch.hpp>

#include "iteris/adapters.hpp"

#include "oracles.hpp"

using iteris::LoraAdapter;
using iteris::Matrix;
using iteris::WeightScope;

namespace {

LoraAdapter make_adapter(std::size_t rank, std::size_t d_in, std::size_t d_out,
                         iteris::Rng& rng, double scale = 1.0) {
    LoraAdapter a;
    a.rank = rank;
    a.scale = scale;
    a.down = Matrix::random_normal(rank, d_in, rng);
    a.up = Matrix::random_normal(d_out, rank, rng);
    return a;
}

} // namespace

TEST_CASE("effective_weight materializes scale * (up down)^T") {
    iteris::Rng rng(31);

    SECTION("zero factors give zero delta; full scope returns the base") {
        LoraAdapter a;
        a.rank = 1;
        a.down = Matrix(1, 3);
        a.up = Matrix(2, 1);
        const Matrix base = Matrix::random_normal(3, 2, rng);
        const Matrix delta = iteris::effective_weight(a, base, WeightScope::Delta);
        CHECK(iteris::frobenius_norm(delta) == 0.0);
        CHECK(iteris::effective_weight(a, base, WeightScope::Full) == base);
    }

    SECTION("identity-padded rank-r factors embed the rank-r identity") {
        LoraAdapter a;
        a.rank = 2;
        a.down = Matrix(2, 4);
        a.up = Matrix(4, 2);
        for (std::size_t k = 0; k < 2; ++k) {
            a.down(k, k) = 1.0;
            a.up(k, k) = 1.0;
        }
        const Matrix delta = iteris::effective_weight(a, Matrix(4, 4), WeightScope::Delta);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(delta(i, j) == (i == j && i < 2 ? 1.0 : 0.0));
    }

    SECTION("random rank-2 factors match a triple-loop product") {
        LoraAdapter a = make_adapter(2, 4, 4, rng, 0.7);
        const Matrix delta = iteris::effective_weight(a, Matrix(4, 4), WeightScope::Delta);
        const auto expected = oracle::scale(
            oracle::transpose(oracle::matmul(oracle::from_iteris(a.up),
                                             oracle::from_iteris(a.down))),
            0.7);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(delta(i, j) == Approx(expected[i][j]).margin(1e-12));
    }

    SECTION("delta is linear in the down factor") {
        LoraAdapter a = make_adapter(2, 5, 3, rng);
        LoraAdapter scaled = a;
        scaled.down *= 2.5;
        const Matrix base(5, 3);
        const Matrix d1 = iteris::effective_weight(a, base, WeightScope::Delta);
        const Matrix d2 = iteris::effective_weight(scaled, base, WeightScope::Delta);
        CHECK(iteris::frobenius_norm(d2 - d1 * 2.5) < 1e-12);
    }

    SECTION("shape mismatch raises") {
        LoraAdapter a = make_adapter(2, 4, 4, rng);
        CHECK_THROWS_AS(iteris::effective_weight(a, Matrix(5, 4), WeightScope::Delta),
                        iteris::ShapeError);
    }
}

TEST_CASE("refactor_low_rank truncates by singular value") {
    iteris::Rng rng(37);

    SECTION("rank-1 delta reconstructs exactly at target 1") {
        const Matrix u = Matrix::random_normal(5, 1, rng);
        const Matrix v = Matrix::random_normal(1, 3, rng);
        const Matrix delta = iteris::multiply(u, v);
        const LoraAdapter a = iteris::refactor_low_rank(delta, 1);
        const Matrix rebuilt = iteris::effective_weight(a, Matrix(5, 3), WeightScope::Delta);
        CHECK(iteris::frobenius_norm(rebuilt - delta) <= 1e-9);
    }

    SECTION("zero delta gives zero factors") {
        const LoraAdapter a = iteris::refactor_low_rank(Matrix(4, 4), 2);
        CHECK(iteris::frobenius_norm(a.down) == 0.0);
        CHECK(iteris::frobenius_norm(a.up) == 0.0);
    }

    SECTION("reconstruction error equals the tail singular-value energy") {
        const Matrix delta = Matrix::random_normal(6, 6, rng);
        const LoraAdapter a = iteris::refactor_low_rank(delta, 3);
        const Matrix rebuilt = iteris::effective_weight(a, Matrix(6, 6), WeightScope::Delta);
        const double err = iteris::frobenius_norm(rebuilt - delta);

        const auto eig = oracle::symmetric_eigenvalues(oracle::matmul(
            oracle::from_iteris(delta), oracle::transpose(oracle::from_iteris(delta))));
        const double tail = std::sqrt(std::max(0.0, eig[3]) + std::max(0.0, eig[4]) +
                                      std::max(0.0, eig[5]));
        CHECK(err == Approx(tail).margin(1e-8));
    }

    SECTION("error never increases with the target rank") {
        const Matrix delta = Matrix::random_normal(7, 5, rng);
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t r = 1; r <= 5; ++r) {
            const LoraAdapter a = iteris::refactor_low_rank(delta, r);
            const Matrix rebuilt =
                iteris::effective_weight(a, Matrix(7, 5), WeightScope::Delta);
            const double err = iteris::frobenius_norm(rebuilt - delta);
            CHECK(err <= prev + 1e-12);
            prev = err;
        }
    }

    SECTION("invalid rank raises") {
        CHECK_THROWS_AS(iteris::refactor_low_rank(Matrix(4, 3), 0), iteris::DomainError);
        CHECK_THROWS_AS(iteris::refactor_low_rank(Matrix(4, 3), 4), iteris::DomainError);
    }
}
