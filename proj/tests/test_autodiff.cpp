#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ipc/conv_ops.hpp"
#include "ipc/finite_diff.hpp"

using namespace ipc;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// keep samples away from rounding/kink boundaries
Tensor<double> random_smooth(Shape s, Rng& rng) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.data) {
    do {
      v = rng.uniform(-2.0, 2.0);
    } while (std::abs(v - round_half_away(v)) < 0.05 || std::abs(v) < 0.05);
  }
  return t;
}

// compare backward() against central differences for a scalar-valued builder
double grad_gap(const std::function<Var<double>(Var<double>)>& build, const Tensor<double>& x0) {
  auto x = make_input(x0, true);
  auto y = build(x);
  backward(y);
  auto oracle = finite_diff_grad<double>(
      [&](const Tensor<double>& p) {
        auto xi = make_input(p, false);
        return build(xi)->value[0];
      },
      x0, 1e-5);
  return max_rel_err(x->grad, oracle);
}

}  // namespace

TEST_CASE("forward: conv as scalar multiply") {
  auto x = make_input(Tensor<float>::full({1, 1, 3, 3}, 1.f));
  auto w = constant(Tensor<float>::full({1, 1, 1, 1}, 2.f));
  auto b = constant(Tensor<float>::zeros({1}));
  auto y = conv2d(x, w, b, 1, 0);
  CHECK(y->value.shape == Shape{1, 1, 3, 3});
  for (long i = 0; i < y->value.size(); ++i) CHECK(y->value[i] == doctest::Approx(2.f));
}

TEST_CASE("forward: identity graph returns input unchanged") {
  Tensor<float> v({2, 3}, {1, 2, 3, 4, 5, 6});
  auto x = make_input(v);
  CHECK(x->value.data == v.data);
}

TEST_CASE("forward: leaky relu piecewise") {
  auto x = make_input(Tensor<float>({3}, {-1.f, 0.f, 2.f}));
  auto y = leaky_relu(x, 0.2f);
  CHECK(y->value[0] == doctest::Approx(-0.2f));
  CHECK(y->value[1] == doctest::Approx(0.f));
  CHECK(y->value[2] == doctest::Approx(2.f));
}

TEST_CASE("forward: shape mismatch names shapes") {
  auto a = make_input(Tensor<float>::zeros({2, 2}));
  auto b = make_input(Tensor<float>::zeros({3}));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::runtime_error);
}

TEST_CASE("backward: sum(2x) is all twos") {
  Rng rng(7);
  auto x0 = random_tensor({2, 3, 4}, rng);
  auto x = make_input(x0, true);
  auto y = sum(smul(x, 2.0));
  backward(y);
  for (long i = 0; i < x->grad.size(); ++i) CHECK(x->grad[i] == doctest::Approx(2.0));
}

TEST_CASE("backward: x^2 at 3 gives 6") {
  auto x = make_input(Tensor<double>::scalar(3.0), true);
  auto y = mul(x, x);
  backward(y);
  CHECK(x->grad[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: non-scalar seed rejected") {
  auto x = make_input(Tensor<double>::zeros({3}), true);
  CHECK_THROWS_AS(backward(smul(x, 2.0)), std::runtime_error);
}

TEST_CASE("backward: accumulates across calls") {
  auto x = make_input(Tensor<double>::scalar(3.0), true);
  auto y = mul(x, x);
  backward(y);
  backward(y);
  CHECK(x->grad[0] == doctest::Approx(12.0));
}

TEST_CASE("finite_diff oracle basics") {
  auto sq = [](const Tensor<double>& t) { return t[0] * t[0]; };
  auto g = finite_diff_grad<double>(sq, Tensor<double>::scalar(3.0), 1e-5);
  CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-6));
  auto c = [](const Tensor<double>&) { return 1.5; };
  auto g2 = finite_diff_grad<double>(c, Tensor<double>::scalar(0.3), 1e-5);
  CHECK(std::abs(g2[0]) < 1e-9);
}

TEST_CASE("gradcheck: elementwise and reduction primitives") {
  Rng rng(42);
  auto x0 = random_smooth({2, 5}, rng);
  auto other = random_smooth({2, 5}, rng);
  auto oc = constant(other);

  CHECK(grad_gap([&](Var<double> x) { return sum(add(x, constant(other))); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(sub(constant(other), x)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(mul(x, constant(other))); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(div_(constant(other), sadd(abs_(x), 0.5))); },
                 x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(leaky_relu(x, 0.2)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(sigmoid(x)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(softplus(x)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(abs_(x)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(log_(sadd(abs_(x), 1.0))); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(exp_(x)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(tanh_(x)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(normal_cdf(x)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return mean(mul(x, x)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return dot(x, constant(other)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return l2_norm(x); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(lower_bound(x, 0.02)); }, x0) < 1e-4);
}

TEST_CASE("straight-through round passes gradients like identity") {
  Rng rng(43);
  auto x0 = random_smooth({2, 5}, rng);
  auto c = random_smooth({2, 5}, rng);
  auto x = make_input(x0, true);
  backward(sum(mul(quantize_ste(x), constant(c))));
  for (long i = 0; i < x0.size(); ++i) CHECK(x->grad[i] == doctest::Approx(c[i]));
}

TEST_CASE("gradcheck: matmul both operands") {
  Rng rng(3);
  auto a0 = random_smooth({3, 4}, rng);
  auto b0 = random_smooth({4, 5}, rng);
  CHECK(grad_gap([&](Var<double> x) { return sum(matmul(x, constant(b0))); }, a0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(matmul(constant(a0), x)); }, b0) < 1e-4);
}

TEST_CASE("gradcheck: conv2d data, weight, bias") {
  Rng rng(11);
  auto x0 = random_smooth({2, 3, 7, 6}, rng);
  auto w0 = random_smooth({4, 3, 3, 3}, rng);
  auto b0 = random_smooth({4}, rng);
  auto wc = constant(w0);
  auto bc = constant(b0);
  CHECK(grad_gap([&](Var<double> x) { return sum(sigmoid(conv2d(x, wc, bc, 2, 1))); }, x0) < 1e-4);
  auto xc = constant(x0);
  CHECK(grad_gap([&](Var<double> w) { return sum(sigmoid(conv2d(xc, w, bc, 2, 1))); }, w0) < 1e-4);
  CHECK(grad_gap([&](Var<double> b) { return sum(sigmoid(conv2d(xc, wc, b, 2, 1))); }, b0) < 1e-4);
}

TEST_CASE("gradcheck: transposed conv data, weight, bias") {
  Rng rng(12);
  auto x0 = random_smooth({2, 3, 4, 5}, rng);
  auto w0 = random_smooth({3, 4, 3, 3}, rng);
  auto b0 = random_smooth({4}, rng);
  auto wc = constant(w0);
  auto bc = constant(b0);
  CHECK(grad_gap([&](Var<double> x) { return sum(tanh_(conv2d_transpose(x, wc, bc, 2, 1, 1))); },
                 x0) < 1e-4);
  auto xc = constant(x0);
  CHECK(grad_gap([&](Var<double> w) { return sum(tanh_(conv2d_transpose(xc, w, bc, 2, 1, 1))); },
                 w0) < 1e-4);
  CHECK(grad_gap([&](Var<double> b) { return sum(tanh_(conv2d_transpose(xc, wc, b, 2, 1, 1))); },
                 b0) < 1e-4);
}

TEST_CASE("conv2d_transpose inverts conv2d shapes") {
  Rng rng(5);
  auto x = make_input(random_tensor({1, 3, 16, 16}, rng));
  auto w = constant(random_tensor({3, 5, 5, 5}, rng));
  auto b = constant(Tensor<double>::zeros({5}));
  auto y = conv2d(x, reshape(w, {5, 3, 5, 5}), b, 2, 2);
  CHECK(y->value.shape == Shape{1, 5, 8, 8});
  auto back = conv2d_transpose(y, constant(random_tensor({5, 3, 5, 5}, rng)),
                               constant(Tensor<double>::zeros({3})), 2, 2, 1);
  CHECK(back->value.shape == Shape{1, 3, 16, 16});
}

TEST_CASE("gradcheck: shape/resize primitives") {
  Rng rng(13);
  auto x0 = random_smooth({1, 2, 8, 8}, rng);
  CHECK(grad_gap([&](Var<double> x) { return sum(mul(crop(x, 1, 2, 5, 4), crop(x, 1, 2, 5, 4))); },
                 x0) < 1e-4);
  CHECK(grad_gap(
            [&](Var<double> x) {
              auto r = resize_bilinear(x, 5, 11);
              return sum(mul(r, r));
            },
            x0) < 1e-4);
  CHECK(grad_gap(
            [&](Var<double> x) {
              auto r = avg_pool2(x);
              return sum(mul(r, r));
            },
            x0) < 1e-4);
  Tensor<double> kern({3, 3});
  for (auto& v : kern.data) v = rng.uniform(0.0, 1.0);
  CHECK(grad_gap(
            [&](Var<double> x) {
              auto r = depthwise_conv2d(x, kern, 1, 1);
              return sum(mul(r, r));
            },
            x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(spatial_mean(mul(x, x))); }, x0) < 1e-4);
  CHECK(grad_gap(
            [&](Var<double> x) {
              auto a = slice_channels(x, 0, 1);
              auto b = slice_channels(x, 1, 2);
              return sum(mul(concat_channels<double>({b, a}), x));
            },
            x0) < 1e-4);
}

TEST_CASE("gradcheck: scalar broadcast and elem") {
  Rng rng(14);
  auto x0 = random_smooth({6}, rng);
  auto s0 = random_smooth({1}, rng);
  auto sc = constant(s0);
  CHECK(grad_gap([&](Var<double> x) { return sum(bmul(x, sc)); }, x0) < 1e-4);
  CHECK(grad_gap([&](Var<double> x) { return sum(badd(mul(x, x), elem(x, 2))); }, x0) < 1e-4);
  auto xc = constant(x0);
  CHECK(grad_gap([&](Var<double> s) { return sum(bmul(mul(xc, xc), elem(s, 0))); }, s0) < 1e-4);
}

TEST_CASE("gradcheck: softmax cross entropy") {
  Rng rng(15);
  auto x0 = random_smooth({4, 5}, rng);
  std::vector<int> labels = {1, 0, 4, 2};
  CHECK(grad_gap([&](Var<double> x) { return softmax_xent(x, labels); }, x0) < 1e-4);
}

TEST_CASE("composed conv-activation-sum matches finite differences") {
  Rng rng(21);
  auto x0 = random_smooth({1, 2, 6, 6}, rng);
  auto w0 = random_smooth({3, 2, 3, 3}, rng);
  auto wc = constant(w0);
  auto bc = constant(Tensor<double>::zeros({3}));
  CHECK(grad_gap([&](Var<double> x) { return sum(leaky_relu(conv2d(x, wc, bc, 1, 1), 0.2)); },
                 x0) < 1e-4);
}

TEST_CASE("forward is deterministic") {
  Rng rng(31);
  auto x0 = random_tensor({1, 3, 8, 8}, rng);
  auto w0 = random_tensor({4, 3, 3, 3}, rng);
  auto run = [&]() {
    auto y = conv2d(make_input(x0), constant(w0), constant(Tensor<double>::zeros({4})), 2, 1);
    return sigmoid(y)->value.data;
  };
  CHECK(run() == run());
}

TEST_CASE("resize and crop are linear maps") {
  Rng rng(32);
  auto x0 = random_tensor({1, 1, 9, 7}, rng);
  Tensor<double> ax = x0;
  for (auto& v : ax.data) v *= 3.5;
  auto r1 = resize_bilinear(make_input(x0), 5, 5)->value;
  auto r2 = resize_bilinear(make_input(ax), 5, 5)->value;
  for (long i = 0; i < r1.size(); ++i) CHECK(r2[i] == doctest::Approx(3.5 * r1[i]).epsilon(1e-12));
  auto c1 = crop(make_input(x0), 2, 1, 4, 4)->value;
  auto c2 = crop(make_input(ax), 2, 1, 4, 4)->value;
  for (long i = 0; i < c1.size(); ++i) CHECK(c2[i] == doctest::Approx(3.5 * c1[i]).epsilon(1e-12));
}

TEST_CASE("quantize: round half away from zero") {
  CHECK(round_half_away(1.5) == 2.0);
  CHECK(round_half_away(-1.5) == -2.0);
  CHECK(round_half_away(0.4) == 0.0);
  CHECK(round_half_away(2.5) == 3.0);
  CHECK(round_half_away(-0.5) == -1.0);
}

TEST_CASE("straight-through: gradient of sum(round(x)) is all ones") {
  auto x = make_input(Tensor<double>({4}, {0.2, -1.6, 2.4, 0.5}), true);
  backward(sum(quantize_ste(x)));
  for (long i = 0; i < 4; ++i) CHECK(x->grad[i] == doctest::Approx(1.0));
}
