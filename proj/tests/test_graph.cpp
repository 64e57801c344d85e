#include <doctest.h>

#include <cmath>

#include "lamar/error.hpp"
#include "lamar/graph.hpp"
#include "test_util.hpp"

using namespace lamar;
using test::check_expression;
using test::random_tensor;

namespace {

ParamStore two_params(std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc) {
  ParamStore p;
  p.add("a", random_tensor(ar, ac, 21));
  p.add("b", random_tensor(br, bc, 22));
  return p;
}

// Reduces any node to a scalar with a fixed random projection.
Var project(Graph& g, Var x, std::uint64_t seed = 99) {
  Var w = g.constant(random_tensor(x.rows(), x.cols(), seed));
  return ops::mse(ops::mul(x, w), g.constant(Tensor(x.rows(), x.cols(), 0.3)));
}

void require_pass(const GradCheckReport& rep) {
  for (const auto& p : rep.params) {
    INFO(p.name << " rel " << p.max_rel_error << " analytic " << p.analytic << " numeric "
                << p.numeric);
    CHECK(p.max_rel_error <= rep.tolerance);
  }
  CHECK(rep.passed);
}

}  // namespace

TEST_CASE("elementwise and matrix ops pass gradient checks") {
  SUBCASE("matmul") {
    auto p = two_params(3, 4, 4, 2);
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      return project(g, ops::matmul(g.parameter(s, "a"), g.parameter(s, "b")));
    }));
  }
  SUBCASE("linear with bias") {
    auto p = two_params(3, 4, 4, 2);
    p.add("bias", random_tensor(1, 2, 23));
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      return project(g, ops::linear(g.parameter(s, "a"), g.parameter(s, "b"),
                                    g.parameter(s, "bias")));
    }));
  }
  SUBCASE("add sub mul scale") {
    auto p = two_params(3, 4, 3, 4);
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      Var a = g.parameter(s, "a"), b = g.parameter(s, "b");
      return project(g, ops::scale(ops::add(ops::mul(a, b), ops::sub(a, b)), 1.7));
    }));
  }
  SUBCASE("row broadcasts") {
    auto p = two_params(6, 4, 1, 4);
    p.add("table", random_tensor(3, 4, 24));
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      Var a = g.parameter(s, "a");
      Var x = ops::add_row(a, g.parameter(s, "b"));
      x = ops::add_periodic(x, g.parameter(s, "table"));
      return project(g, ops::add(x, ops::repeat_row(g.parameter(s, "b"), 6)));
    }));
  }
  SUBCASE("interleave take_rows group_mean") {
    auto p = two_params(4, 3, 2, 3);
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      const Var parts[] = {g.parameter(s, "a"), g.parameter(s, "b")};
      const std::size_t groups[] = {2, 1};
      Var x = ops::interleave(parts, groups);  // 6 x 3, 3 rows per sample
      Var m = ops::group_mean(x, 3);
      Var t = ops::take_rows(x, 3, 2);
      return project(g, ops::add(m, t));
    }));
  }
  SUBCASE("reshape slice concat") {
    auto p = two_params(2, 6, 2, 2);
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      Var a = g.parameter(s, "a");
      Var sl = ops::slice_cols(a, 1, 4);
      const Var parts[] = {sl, g.parameter(s, "b")};
      Var c = ops::concat_cols(parts);
      return project(g, ops::reshape(c, 5, 2));
    }));
  }
  SUBCASE("batched products") {
    auto p = two_params(6, 4, 6, 4);
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      Var a = g.parameter(s, "a"), b = g.parameter(s, "b");
      Var scores = ops::batched_matmul_nt(a, b, 3);
      Var w = ops::softmax_rows(scores);
      return project(g, ops::batched_matmul(w, b, 3));
    }));
  }
}

TEST_CASE("nonlinear ops pass gradient checks") {
  SUBCASE("layer_norm") {
    ParamStore p;
    p.add("x", random_tensor(4, 5, 31));
    p.add("g", random_tensor(1, 5, 32));
    p.add("b", random_tensor(1, 5, 33));
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      return project(g, ops::layer_norm(g.parameter(s, "x"), g.parameter(s, "g"),
                                        g.parameter(s, "b")));
    }));
  }
  SUBCASE("gelu sigmoid") {
    ParamStore p;
    p.add("x", random_tensor(3, 5, 34, 2.0));
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      Var x = g.parameter(s, "x");
      return project(g, ops::add(ops::gelu(x), ops::sigmoid(x)));
    }));
  }
  SUBCASE("l2_normalize_rows") {
    ParamStore p;
    p.add("x", random_tensor(3, 4, 35));
    require_pass(check_expression(p, [](Graph& g, ParamStore& s) {
      return project(g, ops::l2_normalize_rows(g.parameter(s, "x")));
    }));
  }
  SUBCASE("losses") {
    ParamStore p;
    p.add("z", random_tensor(4, 1, 36, 2.0));
    p.add("m", random_tensor(4, 3, 37, 2.0));
    const int bin[] = {0, 1, 1, 0};
    const int multi[] = {2, 0, 1, 2};
    require_pass(check_expression(p, [&](Graph& g, ParamStore& s) {
      return ops::add(ops::bce_with_logits(g.parameter(s, "z"), bin),
                      ops::cross_entropy(g.parameter(s, "m"), multi));
    }));
  }
}

TEST_CASE("straight-through mask routes gradient as if mask were p") {
  Graph g;
  ParamStore s;
  s.add("p", Tensor::from_rows({{0.2, 0.9}}));
  s.add("c", Tensor::from_rows({{3.0, -1.0}}));
  Var p = g.parameter(s, "p"), c = g.parameter(s, "c");
  const Tensor mask = Tensor::from_rows({{1.0, 0.0}});
  Var out = ops::straight_through_mask(p, c, mask);
  CHECK(out.value() == Tensor::from_rows({{3.0, 0.0}}));
  Var loss = ops::mse(out, g.constant(Tensor(1, 2)));
  g.backward(loss);
  // dL/dout = out (mean over 2 of squares -> 2*out/2).
  CHECK(s.grad("p")(0, 0) == doctest::Approx(3.0 * 3.0));
  CHECK(s.grad("p")(0, 1) == doctest::Approx(0.0));
  CHECK(s.grad("c")(0, 0) == doctest::Approx(3.0 * 1.0));
  CHECK(s.grad("c")(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("l2_normalize_rows rejects zero rows") {
  Graph g;
  Var x = g.constant(Tensor(2, 3));
  try {
    ops::l2_normalize_rows(x);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kZeroNorm);
  }
}

TEST_CASE("bce in logits form is finite for |logit| <= 50") {
  Graph g;
  Var z = g.constant(Tensor::from_rows({{50.0}, {-50.0}, {50.0}, {-50.0}}));
  const int t[] = {1, 0, 0, 1};
  const Real loss = ops::bce_with_logits(z, t).value()[0];
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(50.0 / 2).epsilon(1e-9));
}

TEST_CASE("cross entropy: uniform is ln 3 and shift invariant") {
  Graph g;
  const int t[] = {0, 2};
  CHECK(ops::cross_entropy(g.constant(Tensor(2, 3)), t).value()[0] ==
        doctest::Approx(std::log(3.0)).epsilon(1e-12));
  const Tensor z = random_tensor(2, 3, 41);
  Tensor shifted = z;
  for (auto& v : shifted.data()) v += 123.0;
  CHECK(ops::cross_entropy(g.constant(z), t).value()[0] ==
        doctest::Approx(ops::cross_entropy(g.constant(shifted), t).value()[0]).epsilon(1e-10));
}

TEST_CASE("dropout is identity in eval mode and inverted in train mode") {
  Graph g;
  const Tensor x = random_tensor(50, 40, 42);
  Var v = g.constant(x);
  CHECK(ops::dropout(v, 0.5, nullptr, false).value() == x);
  Rng rng(3);
  const Tensor y = ops::dropout(v, 0.5, &rng, true).value();
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(y[i] == doctest::Approx(2.0 * x[i]));
    }
  }
  CHECK(zeros > 850);
  CHECK(zeros < 1150);
}

TEST_CASE("frozen parameters receive no gradient") {
  ParamStore s;
  s.add("w", random_tensor(3, 3, 43));
  s.add("frozen", random_tensor(3, 3, 44));
  s.set_frozen("frozen", true);
  s.zero_grad();
  Graph g;
  Var x = ops::matmul(g.parameter(s, "w"), g.parameter(s, "frozen"));
  g.backward(ops::mse(x, g.constant(Tensor(3, 3))));
  Real frozen_norm = 0.0;
  for (Real v : s.grad("frozen").data()) frozen_norm += std::abs(v);
  CHECK(frozen_norm == 0.0);
  Real w_norm = 0.0;
  for (Real v : s.grad("w").data()) w_norm += std::abs(v);
  CHECK(w_norm > 0.0);
}

TEST_CASE("backward requires a scalar") {
  Graph g;
  ParamStore s;
  s.add("x", random_tensor(2, 2, 45));
  Var x = g.parameter(s, "x");
  CHECK_THROWS(g.backward(x));
}

TEST_CASE("adam bias-corrected steps match a hand computation") {
  ParamStore s;
  s.add("p", Tensor(1, 1, 1.0));
  AdamState st;
  st.config.lr = 0.1;
  for (int step = 0; step < 2; ++step) {
    s.zero_grad();
    s.grad("p")[0] = 0.5;
    adam_step(s, st);
  }
  // Constant gradient: m_hat = 0.5 and v_hat = 0.25 at every step.
  const Real update = 0.1 * 0.5 / (0.5 + 1e-8);
  CHECK(s.value("p")[0] == doctest::Approx(1.0 - 2 * update).epsilon(1e-15));
  CHECK(st.step == 2);
}

TEST_CASE("adam with lr 0 leaves parameters bit-identical") {
  ParamStore s;
  s.add("p", random_tensor(3, 3, 46));
  const Tensor before = s.value("p");
  AdamState st;
  st.config.lr = 0.0;
  s.zero_grad();
  for (auto& g : s.grad("p").data()) g = 1.0;
  adam_step(s, st);
  CHECK(s.value("p") == before);
}

TEST_CASE("adam skips frozen parameters and reports missing gradients") {
  ParamStore s;
  s.add("a", Tensor(1, 1, 1.0));
  s.add("b", Tensor(1, 1, 1.0));
  s.set_frozen("b", true);
  AdamState st;
  try {
    adam_step(s, st);
    FAIL("expected missing gradient");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingGradient);
  }
  s.zero_grad();
  s.grad("a")[0] = 1.0;
  s.grad("b")[0] = 1.0;
  adam_step(s, st);
  CHECK(s.value("a")[0] < 1.0);
  CHECK(s.value("b")[0] == 1.0);
}

TEST_CASE("grad_check flags a wrong gradient and non-determinism") {
  ParamStore s;
  s.add("x", Tensor(1, 1, 2.0));
  LossFn wrong = [](ParamStore& p, bool with_grad) {
    const Real x = p.value("x")[0];
    if (with_grad) p.grad("x")[0] = 3.0 * x;  // true derivative of x^2 is 2x
    return x * x;
  };
  const auto rep = grad_check(wrong, s);
  CHECK_FALSE(rep.passed);
  CHECK(rep.failing() == std::vector<std::string>{"x"});

  int calls = 0;
  LossFn noisy = [&](ParamStore& p, bool) { return p.value("x")[0] + 1e-3 * (++calls); };
  try {
    grad_check(noisy, s);
    FAIL("expected non-determinism error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonDeterministic);
  }
}
