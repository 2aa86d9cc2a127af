#include <doctest.h>

#include <vector>

#include "egocast/adam.hpp"

using namespace egocast;

TEST_SUITE_BEGIN("adam");

TEST_CASE("zero gradients leave parameters unchanged") {
  Tensor p({3}, {1.0, -2.0, 0.5}, true);
  Adam opt({{"p", p}}, {.lr = 0.1});
  p.grad_buffer();  // populated with zeros
  opt.step();
  CHECK(p.at(0) == 1.0);
  CHECK(p.at(1) == -2.0);
  CHECK(p.at(2) == 0.5);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("one hand-computed step") {
  // p=1, g=1, lr=0.1: m_hat = v_hat = 1 after bias correction, so the
  // update is lr / (1 + eps) and p lands at ~0.9.
  Tensor p({1}, {1.0}, true);
  Adam opt({{"p", p}}, {.lr = 0.1});
  p.grad_buffer()[0] = 1.0;
  opt.step();
  CHECK(p.at(0) == doctest::Approx(0.9).epsilon(1e-8));
}

TEST_CASE("identical parameters and gradients get identical updates") {
  Tensor a({2}, {0.3, -0.7}, true);
  Tensor b({2}, {0.3, -0.7}, true);
  Adam oa({{"a", a}}, {.lr = 0.01});
  Adam ob({{"b", b}}, {.lr = 0.01});
  for (int i = 0; i < 5; ++i) {
    a.zero_grad();
    b.zero_grad();
    a.grad_buffer()[0] = 0.2 * i;
    a.grad_buffer()[1] = -1.0;
    b.grad_buffer()[0] = 0.2 * i;
    b.grad_buffer()[1] = -1.0;
    oa.step();
    ob.step();
  }
  CHECK(a.at(0) == b.at(0));
  CHECK(a.at(1) == b.at(1));
}

TEST_CASE("missing gradient is reported with the parameter name") {
  Tensor w({2}, {1.0, 1.0}, true);
  Tensor b({1}, {0.0}, true);
  Adam opt({{"fc.weight", w}, {"fc.bias", b}}, {});
  w.grad_buffer()[0] = 1.0;
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("fc.bias"), ContractError);
}

TEST_CASE("step counter increments by one per step") {
  Tensor p({1}, {0.0}, true);
  Adam opt({{"p", p}}, {});
  for (int i = 1; i <= 4; ++i) {
    p.zero_grad();
    p.grad_buffer()[0] = 1.0;
    opt.step();
    CHECK(opt.step_count() == i);
  }
}

TEST_SUITE_END();
