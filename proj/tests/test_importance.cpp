// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "triadapt/errors.hpp"
#include "triadapt/importance.hpp"

using namespace triadapt;

namespace {

AdapterState with_transform(Matrix l, Matrix u) {
    const auto r = l.rows();
    AdapterState s = oracle::random_state(1, static_cast<int>(r), 8, 8);
    s.l = std::move(l);
    s.u = std::move(u);
    return s;
}

}  // namespace

TEST_CASE("normalized norm examples") {
    const AdapterState eye = with_transform(Matrix::identity(4), Matrix(4, 4));
    CHECK(normalized_norm(eye, NormVariant::by_rank) == 0.5);
    CHECK(normalized_norm(eye, NormVariant::by_sqrt_rank) == 1.0);
    CHECK(normalized_norm(eye, NormVariant::none) == 2.0);

    const AdapterState s = with_transform(apply_lower_mask(Matrix{{1, 2}, {0, 3}}), Matrix{{0, 2}, {0, 0}});
    CHECK(normalized_norm(s, NormVariant::by_rank) == doctest::Approx(std::sqrt(14.0) / 2).epsilon(1e-15));
}

TEST_CASE("normalize variants and names") {
    CHECK(normalize(3.0, 9, NormVariant::by_rank) == doctest::Approx(1.0 / 3));
    CHECK(normalize(3.0, 9, NormVariant::by_sqrt_rank) == 1.0);
    CHECK(normalize(3.0, 9, NormVariant::none) == 3.0);
    for (auto v : {NormVariant::by_rank, NormVariant::by_sqrt_rank, NormVariant::none}) {
        CHECK(parse_norm_variant(variant_name(v)) == v);
    }
    CHECK_THROWS_AS(parse_norm_variant("by_cube_rank"), ConfigError);
}

TEST_CASE("score examples") {
    SUBCASE("unchanged state scores zero") {
        AdapterState s = oracle::random_state(3, 3, 6, 6);
        s.norm_record = {transform_norm(s), 3};
        ScoreBoard board;
        board.register_site(s);
        CHECK(score(board, s, NormVariant::by_rank) == 0.0);
        CHECK(score(board, s, NormVariant::by_rank) == 0.0);
    }
    SUBCASE("prev 2.0 at rank 4, now 3.0 at rank 5, by_rank") {
        AdapterState s = with_transform(Matrix::identity(5), Matrix(5, 5));
        s.l(0, 0) = std::sqrt(9.0 - 4.0);  // ||L + U||^2 = 5 + 4 = 9
        REQUIRE(transform_norm(s) == doctest::Approx(3.0).epsilon(1e-15));
        s.norm_record = {2.0, 4};
        ScoreBoard board;
        board.register_site(s);
        CHECK(score(board, s, NormVariant::by_rank) == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(board.at(s.site).prev_normalized == 0.5);
        CHECK(board.at(s.site).normalized == doctest::Approx(0.6).epsilon(1e-12));
    }
    SUBCASE("variant none, prev 2.0 now 1.5 scores negative") {
        AdapterState s = with_transform(Matrix{{1.5}}, Matrix(1, 1));
        s.norm_record = {2.0, 1};
        ScoreBoard board;
        CHECK(score(board, s, NormVariant::none) == -0.5);
    }
}

TEST_CASE("score ignores A, B and W0") {
    AdapterState s = oracle::random_state(7, 3, 6, 6);
    s.norm_record = {1.0, 2};
    ScoreBoard b1, b2;
    b1.register_site(s);
    b2.register_site(s);
    AdapterState other = s;
    Rng rng(1);
    other.a = gaussian_matrix(3, 6, 5.0, rng);
    other.b = gaussian_matrix(6, 3, 5.0, rng);
    other.w0 = gaussian_matrix(6, 6, 5.0, rng);
    CHECK(score(b1, s, NormVariant::by_sqrt_rank) == score(b2, other, NormVariant::by_sqrt_rank));
}

TEST_CASE("previous record is the immediately preceding evaluation") {
    AdapterState s = oracle::random_state(9, 2, 6, 6);
    s.norm_record = {transform_norm(s), 2};
    ScoreBoard board;
    board.register_site(s);
    const double n0 = transform_norm(s);
    s.l(1, 1) += 0.5;
    const double n1 = transform_norm(s);
    CHECK(score(board, s, NormVariant::by_rank) == doctest::Approx(n1 / 2 - n0 / 2).epsilon(1e-14));
    s.l(1, 0) -= 0.25;
    const double n2 = transform_norm(s);
    CHECK(score(board, s, NormVariant::by_rank) == doctest::Approx(n2 / 2 - n1 / 2).epsilon(1e-14));
    CHECK(board.at(s.site).prev_norm == n1);
    CHECK(board.scores().size() == 1);
}

TEST_CASE("scoring cost does not depend on n or d") {
    for (int r : {1, 3, 6}) {
        std::uint64_t small = 0, large = 0;
        {
            AdapterState s = oracle::random_state(1, r, 8, 8);
            ScoreBoard board;
            board.register_site(s);
            const FlopScope scope;
            (void)score(board, s, NormVariant::by_rank);
            small = scope.elapsed();
        }
        {
            AdapterState s = oracle::random_state(1, r, 64, 64);
            ScoreBoard board;
            board.register_site(s);
            const FlopScope scope;
            (void)score(board, s, NormVariant::by_rank);
            large = scope.elapsed();
        }
        CHECK(small > 0);
        CHECK(small == large);
    }
}

TEST_CASE("missing site is seeded from its norm record") {
    AdapterState s = oracle::random_state(11, 2, 5, 5);
    s.norm_record = {transform_norm(s), 2};
    ScoreBoard board;
    CHECK_FALSE(board.contains(s.site));
    CHECK(score(board, s, NormVariant::by_rank) == 0.0);
    CHECK(board.contains(s.site));
    CHECK_THROWS(board.at(SiteId{5, Role::q}));
}
