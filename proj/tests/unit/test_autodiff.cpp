#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "nmt/adam.hpp"
#include "nmt/ops.hpp"
#include "support/gradcheck.hpp"

using namespace nmt;
using namespace nmt::ad;
using nmt::testing::check_gradients;

namespace {

template <typename T>
std::vector<T> values(Var<T> v) {
  return {v.value().begin(), v.value().end()};
}

Array<double> random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Array<double> a(std::move(shape));
  for (auto& x : a.data) x = rng.uniform(lo, hi);
  return a;
}

// Builds a store holding the given inputs and runs the oracle on `fn`, which
// receives the tape-bound input vars.
using OpFn = std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

nmt::testing::GradCheckResult check_op(std::vector<Array<double>> inputs, OpFn fn) {
  ParameterStore<double> params;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    params.add("x" + std::to_string(i), std::move(inputs[i]));
  }
  return check_gradients(params, [&](Tape<double>& t) {
    std::vector<Var<double>> vars;
    for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(t.parameter(params[i]));
    return fn(t, vars);
  });
}

// Weighted sum with fixed pseudo-random weights so every output element
// carries a distinct gradient.
Var<double> probe(Tape<double>& t, Var<double> y) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + 0.7 * static_cast<double>(i));
  return sum(mul(y, t.constant(y.shape(), std::move(w))));
}

}  // namespace

TEST_CASE("matmul values") {
  Tape<float> tape;
  auto eye = tape.constant({2, 2}, {1, 0, 0, 1});
  auto m = tape.constant({2, 2}, {1, 2, 3, 4});
  CHECK(values(matmul(eye, m)) == std::vector<float>{1, 2, 3, 4});

  auto row = tape.constant({1, 2}, {1, 2});
  auto col = tape.constant({2, 1}, {3, 4});
  auto c = matmul(row, col);
  CHECK(c.shape() == Shape{1, 1});
  CHECK(c.value()[0] == 11.0f);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape<float> tape;
  auto a = tape.constant({2, 3}, std::vector<float>(6, 1));
  auto b = tape.constant({4, 5}, std::vector<float>(20, 1));
  try {
    matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(A B) with respect to A") {
  ParameterStore<double> params;
  auto& A = params.add("A", Array<double>({2, 2}, {1, 1, 1, 1}));
  auto loss_fn = [&](Tape<double>& t) {
    auto B = t.constant({2, 2}, {2, 0, 0, 2});
    return sum(matmul(t.parameter(A), B));
  };
  // Finite-difference oracle first, then the frozen value.
  CHECK(check_gradients(params, loss_fn).ok());
  params.zero_grad();
  Tape<double> tape;
  tape.backward(loss_fn(tape));
  CHECK(A.grad == std::vector<double>{2, 2, 2, 2});
}

TEST_CASE("softmax examples") {
  Tape<double> tape;
  auto a = softmax(tape.constant({2}, {0.0, 0.0}), 0);
  CHECK(a.value()[0] == doctest::Approx(0.5));
  CHECK(a.value()[1] == doctest::Approx(0.5));

  auto b = softmax(tape.constant({2}, {1000.0, 1000.0}), 0);
  CHECK(b.value()[0] == doctest::Approx(0.5));

  auto c = softmax(tape.constant({2}, {0.0, std::log(3.0)}), 0);
  CHECK(c.value()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(c.value()[1] == doctest::Approx(0.75).epsilon(1e-12));

  Tape<float> ft;
  auto f = softmax(ft.constant({2}, {1000.0f, 1000.0f}), 0);
  CHECK(f.value()[0] == doctest::Approx(0.5f));
}

TEST_CASE("softmax slices sum to one on any axis") {
  Rng rng(7);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tape<float> tape;
    std::vector<float> v(2 * 3 * 4);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-20, 20));
    auto y = softmax(tape.constant({2, 3, 4}, v), axis);
    const Shape s{2, 3, 4};
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < 3; ++i) inner *= s[i];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        double total = 0;
        for (std::size_t j = 0; j < s[axis]; ++j) {
          const float p = y.value()[o * s[axis] * inner + j * inner + in];
          CHECK(p >= 0.0f);
          CHECK(p <= 1.0f);
          total += p;
        }
        CHECK(std::abs(total - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("softmax with mask zeroes disallowed entries") {
  Tape<double> tape;
  const std::vector<std::uint8_t> allowed{1, 0, 1};
  auto y = softmax(tape.constant({3}, {1.0, 50.0, 1.0}), 0, allowed);
  CHECK(y.value()[1] == 0.0);
  CHECK(y.value()[0] == doctest::Approx(0.5));
}

TEST_CASE("cross entropy examples") {
  const std::vector<std::uint8_t> no_pad{0};
  {
    Tape<double> tape;
    const std::vector<int> target{3};
    auto loss = cross_entropy(tape.constant({1, 7}, std::vector<double>(7, 0.25)), target, no_pad);
    CHECK(loss.value()[0] == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  }
  {
    Tape<double> tape;
    const std::vector<int> target{1};
    auto loss = cross_entropy(tape.constant({1, 3}, {0.0, 200.0, 0.0}), target, no_pad);
    CHECK(loss.value()[0] < 1e-12);
  }
  {
    Tape<double> tape;
    const std::vector<int> target{1};
    auto loss = cross_entropy(tape.constant({1, 2}, {0.0, std::log(3.0)}), target, no_pad);
    CHECK(loss.value()[0] == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    CHECK(loss.value()[0] == doctest::Approx(0.28768).epsilon(1e-5));
  }
}

TEST_CASE("cross entropy ignores pad rows and rejects all-pad batches") {
  Tape<double> tape;
  auto logits = tape.constant({2, 2}, {0.0, std::log(3.0), 5.0, -5.0});
  const std::vector<int> targets{1, 0};
  const std::vector<std::uint8_t> pad{0, 1};
  CHECK(cross_entropy(logits, targets, pad).value()[0] ==
        doctest::Approx(-std::log(0.75)));
  const std::vector<std::uint8_t> all_pad{1, 1};
  try {
    cross_entropy(logits, targets, all_pad);
    FAIL("expected degenerate-input error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerate);
  }
}

TEST_CASE("backward analytic derivatives") {
  ParameterStore<double> params;
  auto& x = params.add("x", Array<double>({1}, {3.0}));
  {
    Tape<double> tape;
    auto v = tape.parameter(x);
    tape.backward(sum(mul(v, v)));
    CHECK(x.grad[0] == doctest::Approx(6.0));
  }
  x.value.data[0] = 0.0;
  params.zero_grad();
  {
    Tape<double> tape;
    tape.backward(sum(ad::tanh(tape.parameter(x))));
    CHECK(x.grad[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<float> tape;
  auto v = tape.constant({2}, {1, 2});
  CHECK_THROWS_AS(tape.backward(v), Error);
}

TEST_CASE("non-participating parameters keep zero gradient") {
  ParameterStore<double> params;
  auto& used = params.add("used", Array<double>({2}, {1, 2}));
  auto& unused = params.add("unused", Array<double>({2}, {3, 4}));
  Tape<double> tape;
  tape.parameter(unused);
  tape.backward(sum(tape.parameter(used)));
  CHECK(unused.grad == std::vector<double>{0, 0});
  CHECK(used.grad == std::vector<double>{1, 1});
}

TEST_CASE("two-layer toy network matches finite differences") {
  Rng rng(11);
  ParameterStore<double> params;
  auto& w1 = params.add("w1", random_array({4, 6}, rng));
  auto& b1 = params.add("b1", random_array({6}, rng));
  auto& w2 = params.add("w2", random_array({6, 3}, rng));
  auto& b2 = params.add("b2", random_array({3}, rng));
  const auto input = random_array({2, 4}, rng);
  const std::vector<int> targets{2, 0};
  const std::vector<std::uint8_t> pad{0, 0};
  auto r = check_gradients(params, [&](Tape<double>& t) {
    auto h = ad::tanh(add_broadcast(matmul(t.constant(input), t.parameter(w1)), t.parameter(b1)));
    auto logits = add_broadcast(matmul(h, t.parameter(w2)), t.parameter(b2));
    return cross_entropy(logits, targets, pad);
  });
  CHECK(r.ok());
  CHECK(r.checked == params.total_elements());
}

TEST_CASE("every op agrees with finite differences") {
  Rng rng(3);
  SUBCASE("matmul") {
    CHECK(check_op({random_array({3, 4}, rng), random_array({4, 2}, rng)},
                   [](auto& t, auto& v) { return probe(t, matmul(v[0], v[1])); })
              .ok());
  }
  SUBCASE("batched_matmul") {
    CHECK(check_op({random_array({2, 3, 4}, rng), random_array({2, 4, 5}, rng)},
                   [](auto& t, auto& v) { return probe(t, batched_matmul(v[0], v[1])); })
              .ok());
    CHECK(check_op({random_array({2, 3, 4}, rng), random_array({2, 5, 4}, rng)},
                   [](auto& t, auto& v) { return probe(t, batched_matmul(v[0], v[1], true)); })
              .ok());
  }
  SUBCASE("elementwise") {
    auto a = random_array({3, 2}, rng);
    auto b = random_array({3, 2}, rng);
    CHECK(check_op({a, b}, [](auto& t, auto& v) { return probe(t, add(v[0], v[1])); }).ok());
    CHECK(check_op({a, b}, [](auto& t, auto& v) { return probe(t, sub(v[0], v[1])); }).ok());
    CHECK(check_op({a, b}, [](auto& t, auto& v) { return probe(t, mul(v[0], v[1])); }).ok());
    CHECK(check_op({a}, [](auto& t, auto& v) { return probe(t, scale(v[0], 2.5)); }).ok());
    CHECK(check_op({a}, [](auto& t, auto& v) { return probe(t, ad::tanh(v[0])); }).ok());
    CHECK(check_op({a}, [](auto& t, auto& v) { return probe(t, sigmoid(v[0])); }).ok());
    CHECK(check_op({a}, [](auto& t, auto& v) { return probe(t, relu(v[0])); }).ok());
  }
  SUBCASE("broadcasts") {
    CHECK(check_op({random_array({2, 3, 4}, rng), random_array({3, 4}, rng)},
                   [](auto& t, auto& v) { return probe(t, add_broadcast(v[0], v[1])); })
              .ok());
    CHECK(check_op({random_array({2, 3, 4}, rng), random_array({2, 4}, rng)},
                   [](auto& t, auto& v) { return probe(t, add_per_batch(v[0], v[1])); })
              .ok());
  }
  SUBCASE("structural") {
    CHECK(check_op({random_array({2, 3}, rng), random_array({2, 2}, rng)},
                   [](auto& t, auto& v) { return probe(t, concat({v[0], v[1]})); })
              .ok());
    CHECK(check_op({random_array({2, 5}, rng)},
                   [](auto& t, auto& v) { return probe(t, slice_last(v[0], 1, 4)); })
              .ok());
    CHECK(check_op({random_array({2, 3}, rng), random_array({2, 3}, rng)},
                   [](auto& t, auto& v) {
                     std::vector<Var<double>> parts{v[0], v[1], v[0]};
                     return probe(t, stack_middle(std::span<const Var<double>>(parts)));
                   })
              .ok());
    CHECK(check_op({random_array({2, 3, 4, 2}, rng)},
                   [](auto& t, auto& v) { return probe(t, swap_axes12(v[0])); })
              .ok());
    CHECK(check_op({random_array({2, 6}, rng)},
                   [](auto& t, auto& v) { return probe(t, reshape(v[0], {3, 4})); })
              .ok());
    const std::vector<int> ids{2, 0, 2, 1};
    CHECK(check_op({random_array({4, 3}, rng)},
                   [&](auto& t, auto& v) { return probe(t, embedding(v[0], ids)); })
              .ok());
    const std::vector<std::uint8_t> keep{1, 0, 1};
    CHECK(check_op({random_array({3, 2}, rng), random_array({3, 2}, rng)},
                   [&](auto& t, auto& v) { return probe(t, blend_rows(keep, v[0], v[1])); })
              .ok());
  }
  SUBCASE("normalizers") {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      CHECK(check_op({random_array({2, 3, 4}, rng, -3, 3)},
                     [axis](auto& t, auto& v) { return probe(t, softmax(v[0], axis)); })
                .ok());
    }
    std::vector<std::uint8_t> allowed(12, 1);
    allowed[1] = allowed[6] = 0;
    CHECK(check_op({random_array({3, 4}, rng)},
                   [&](auto& t, auto& v) { return probe(t, softmax(v[0], 1, allowed)); })
              .ok());
    CHECK(check_op({random_array({3, 5}, rng), random_array({5}, rng), random_array({5}, rng)},
                   [](auto& t, auto& v) { return probe(t, layer_norm(v[0], v[1], v[2])); })
              .ok());
    const std::vector<int> targets{1, 4, 0};
    const std::vector<std::uint8_t> pad{0, 1, 0};
    CHECK(check_op({random_array({3, 5}, rng, -2, 2)},
                   [&](auto&, auto& v) { return cross_entropy(v[0], targets, pad); })
              .ok());
    CHECK(check_op({random_array({3, 5}, rng)}, [](auto&, auto& v) { return mean(v[0]); }).ok());
  }
}

TEST_CASE("dropout with fixed seed is a fixed linear map") {
  Rng draw(5);
  auto x = random_array({4, 4}, draw);
  auto r = check_op({x}, [](auto& t, auto& v) {
    Rng rng(99);
    return probe(t, dropout(v[0], 0.3, rng));
  });
  CHECK(r.ok());
}

TEST_CASE("forward and backward are bitwise repeatable") {
  auto run = [] {
    Rng rng(21);
    ParameterStore<float> params;
    auto& w = params.add("w", Array<float>({3, 3}));
    for (auto& v : w.value.data) v = static_cast<float>(rng.uniform(-1, 1));
    Tape<float> tape;
    auto x = tape.constant({2, 3}, {0.1f, 0.2f, 0.3f, -0.4f, 0.5f, 0.6f});
    Rng drop(4);
    auto h = dropout(ad::tanh(matmul(x, tape.parameter(w))), 0.1, drop);
    tape.backward(sum(mul(h, h)));
    return w.grad;
  };
  CHECK(run() == run());
}

TEST_CASE("float and double instantiations compute the same gradients") {
  Rng rng(8);
  auto a = random_array({3, 4}, rng);
  ParameterStore<double> pd;
  ParameterStore<float> pf;
  auto& wd = pd.add("w", a);
  auto& wf = pf.add("w", a.cast<float>());
  {
    Tape<double> t;
    t.backward(sum(ad::tanh(matmul(t.parameter(wd), t.constant({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8})))));
  }
  {
    Tape<float> t;
    t.backward(sum(ad::tanh(matmul(t.parameter(wf), t.constant({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8})))));
  }
  for (std::size_t i = 0; i < wd.grad.size(); ++i) {
    CHECK(wf.grad[i] == doctest::Approx(wd.grad[i]).epsilon(1e-4));
  }
}

TEST_CASE("non-finite forward values are errors") {
  Tape<float> tape;
  auto x = tape.constant({1}, {1e30f});
  try {
    mul(x, x);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
  }
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  ParameterStore<float> params;
  auto& p = params.add("p", Array<float>({3}, {1.0f, -2.0f, 0.5f}));
  Adam<float> adam(params, {});
  adam.step(params);
  CHECK(p.value.data == std::vector<float>{1.0f, -2.0f, 0.5f});
  CHECK(adam.step_count() == 1);
}

TEST_CASE("adam first step moves by the learning rate") {
  ParameterStore<double> params;
  auto& p = params.add("p", Array<double>({1}, {1.0}));
  Adam<double> adam(params, {.learning_rate = 0.1, .beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8});
  p.grad[0] = 1.0;
  adam.step(params);
  // m_hat = 1, v_hat = 1 -> update 0.1 / (1 + 1e-8)
  CHECK(p.value.data[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(p.value.data[0] == doctest::Approx(0.9));
  const double after_one = p.value.data[0];
  p.grad[0] = 1.0;
  adam.step(params);
  CHECK(p.value.data[0] < after_one);
  CHECK(adam.step_count() == 2);
}

TEST_CASE("adam rejects NaN gradients and names the parameter") {
  ParameterStore<float> params;
  params.add("encoder.weight", Array<float>({2}, {1, 2}));
  Adam<float> adam(params, {});
  params[0].grad[1] = std::nanf("");
  try {
    adam.step(params);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find("encoder.weight") != std::string::npos);
  }
  CHECK(adam.step_count() == 0);
}

TEST_CASE("global norm clipping") {
  ParameterStore<float> params;
  auto& p = params.add("p", Array<float>({2}));
  p.grad = {3.0f, 4.0f};
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(p.grad[0] == doctest::Approx(0.6f));
  CHECK(p.grad[1] == doctest::Approx(0.8f));
}
