#include "nus/autodiff.hpp"

#include "doctest.h"

#include <filesystem>
#include <random>

using namespace nus::ad;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

TEST_CASE("forward op values") {
  Mat z = Mat::Zero(1, 2);
  Mat s = eval(Op::softmax_rows, std::vector<Mat>{z});
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 1) == doctest::Approx(0.5));

  std::mt19937_64 rng(1);
  Mat x = random_mat(2, 3, rng);
  Mat id = Mat::Identity(2, 2);
  CHECK(eval(Op::matmul, std::vector<Mat>{id, x}).isApprox(x));

  Tape tape;
  Var a = tape.constant(random_mat(2, 3, rng));
  Var b = tape.constant(random_mat(2, 5, rng));
  Var c = concat_cols({a, b});
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 8);
}

TEST_CASE("elementary derivatives") {
  ParameterStore store;
  auto& x = store.add("x", Mat{{0.5, -1.5, 2.0}});
  Tape tape;
  Var v = tape.param(x);
  tape.backward(sum(elemwise_mul(v, v)));
  CHECK(x.grad.isApprox(2.0 * x.value));

  auto& z = store.add_constant("z", 1, 1);
  store.zero_grad();
  Tape t2;
  t2.backward(sum(sigmoid(t2.param(z))));
  CHECK(z.grad(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("backward rejects non-scalar losses and non-recording tapes") {
  ParameterStore store;
  auto& x = store.add_constant("x", 2, 2, 1.0);
  Tape tape;
  CHECK_THROWS_AS(tape.backward(tape.param(x)), std::invalid_argument);
  Tape frozen(false);
  CHECK_THROWS_AS(frozen.backward(sum(frozen.param(x))), std::logic_error);
}

TEST_CASE("gradient check of every op") {
  std::mt19937_64 rng(11);
  ParameterStore store;
  auto& a = store.add_uniform("a", 3, 4, 1.0, rng);
  auto& b = store.add_uniform("b", 4, 3, 1.0, rng);
  auto& c = store.add_uniform("c", 1, 4, 1.0, rng);
  auto& d = store.add_uniform("d", 3, 4, 1.0, rng);
  LossFn f = [&](Tape& t) {
    Var va = t.param(a), vb = t.param(b), vc = t.param(c), vd = t.param(d);
    Var m = matmul(va, vb);                        // 3x3
    Var s = softmax_rows(m);
    Var e = add(va, vc);                           // broadcast
    Var g = sub(e, vd);
    Var h = concat_rows({tanh(g), relu(vd)});      // 6x4
    Var k = slice_rows(h, 1, 3);
    Var l = slice_cols(k, 1, 3);
    Var p = max_over_rows(concat_cols({l, transpose(slice_cols(s, 0, 3))}));
    Var q = gather_rows(vd, {2, 0, 2});
    return add(sum(scale(p, 0.7)), mean(sigmoid(elemwise_mul(q, va))));
  };
  const auto r = gradient_check(f, store);
  CHECK(r.max_rel_error < 1e-7);
}

TEST_CASE("linear layer with square loss") {
  std::mt19937_64 rng(2);
  ParameterStore store;
  auto& w = store.add_uniform("w", 4, 2, 1.0, rng);
  auto& bias = store.add_uniform("b", 1, 2, 1.0, rng);
  const Mat x = random_mat(5, 4, rng);
  const Mat y = random_mat(5, 2, rng);
  LossFn f = [&](Tape& t) {
    Var r = sub(add(matmul(t.constant(x), t.param(w)), t.param(bias)), t.constant(y));
    return mean(elemwise_mul(r, r));
  };
  CHECK(gradient_check(f, store).max_rel_error < 1e-8);
}

TEST_CASE("binary cross-entropy") {
  Tape tape;
  Var half = tape.constant(Mat::Constant(2, 1, 0.5));
  CHECK(binary_cross_entropy(half, {1, 0}).value()(0, 0) == doctest::Approx(std::log(2.0)));
  Var perfect = tape.constant(Mat{{1.0}, {0.0}});
  CHECK(binary_cross_entropy(perfect, {1, 0}).value()(0, 0) < 1e-10);
  Var two = tape.constant(Mat{{0.8}, {0.3}});
  const double l1 = -std::log(0.8), l2 = -std::log(0.7);
  CHECK(binary_cross_entropy(two, {1, 0}).value()(0, 0) == doctest::Approx((l1 + l2) / 2));
}

TEST_CASE("corrupted gradient fails the check") {
  std::mt19937_64 rng(3);
  ParameterStore store;
  auto& w = store.add_uniform("w", 3, 3, 1.0, rng);
  LossFn f = [&](Tape& t) { return sum(tanh(matmul(t.param(w), t.param(w)))); };
  auto grads = analytic_gradients(f, store);
  CHECK(gradient_check(f, store, 1e-5, &grads).max_rel_error < 1e-6);
  grads[0] *= 1.01;
  CHECK(gradient_check(f, store, 1e-5, &grads).max_rel_error > 1e-3);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(4);
  ParameterStore a;
  a.add_uniform("x", 2, 3, 1.0, rng);
  a.add_uniform("y.z", 1, 5, 1.0, rng);
  const auto path = (std::filesystem::temp_directory_path() / "nus_ckpt_test.bin").string();
  save_checkpoint(path, a);

  ParameterStore b;
  b.add_constant("x", 2, 3);
  b.add_constant("y.z", 1, 5);
  load_checkpoint(path, b);
  CHECK(b[0].value == a[0].value);
  CHECK(b[1].value == a[1].value);

  ParameterStore wrong;
  wrong.add_constant("x", 3, 2);
  wrong.add_constant("y.z", 1, 5);
  CHECK_THROWS(load_checkpoint(path, wrong));
  std::filesystem::remove(path);
}
