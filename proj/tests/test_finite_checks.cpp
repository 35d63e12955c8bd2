// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Built with COMPODIFF_FORCE_FINITE_CHECKS: every forward op scans its
// output for NaN/Inf, as debug builds do.

#include <catch2/catch_amalgamated.hpp>

#include <limits>

#include "compodiff/tensor.hpp"

using namespace compodiff;

static_assert(COMPODIFF_FINITE_CHECKS, "this binary must force finite checks on");

TEST_CASE("overflowing op output trips the finite guard") {
  Tensor huge = Tensor::full({4}, 1e308);
  CHECK_THROWS_AS(scale(huge, 10.0), std::domain_error);
  CHECK_THROWS_WITH(mul(huge, huge), Catch::Matchers::ContainsSubstring("mul"));
}

TEST_CASE("inf minus inf surfaces as a domain error, not a silent NaN") {
  Tensor big = Tensor::full({2}, 1e308);
  Tensor sum_big = Tensor::full({2}, 1e308);
  CHECK_THROWS_AS(sum(mul(add(big, sum_big), Tensor::full({2}, -1.0))), std::domain_error);
}

TEST_CASE("well-behaved graphs pass untouched") {
  Rng rng(3);
  Tensor x = Tensor::randn({3, 4}, rng);
  x.set_requires_grad(true);
  Tensor loss = sum(mul(silu(x), x));
  loss.backward();
  CHECK(x.grad().size() == 12);
}
