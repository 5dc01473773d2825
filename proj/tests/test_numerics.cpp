#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "pimm/array.hpp"
#include "pimm/error.hpp"
#include "pimm/graph.hpp"
#include "pimm/rng.hpp"
#include "support/gradcheck.hpp"

using namespace pimm;
using pimm::testing::max_gradient_error;

namespace {

Array random_array(std::size_t rows, std::size_t cols, Rng& rng,
                   double lo = -1.0, double hi = 1.0) {
  Array a(rows, cols);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo, hi);
  return a;
}

bool bitwise_equal(const Array& a, const Array& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data().data(), b.data().data(),
                     a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("array invariants") {
  CHECK_THROWS_AS(Array(2, 2, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Array(1, 2, {1.0, std::nan("")}), NumericError);
  CHECK_THROWS_AS(Array(1, 2, {1.0, HUGE_VAL}), NumericError);
  CHECK_THROWS_AS(Array(0, 3), ShapeError);
  const Array a(2, 3);
  CHECK(a.shape() == std::vector<std::size_t>{2, 3});
  CHECK(a.size() == 6);
}

TEST_CASE("forward primitives: pinned values") {
  Graph g;
  SUBCASE("sigmoid at zero is one half") {
    const NodeId y = g.sigmoid(g.input(Array::scalar(0.0)));
    CHECK(g.value(y)[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("softmax of equal logits splits evenly") {
    for (double c : {-3.0, 0.0, 7.5}) {
      const NodeId y = g.softmax(g.input(Array::row({c, c})));
      CHECK(g.value(y)[0] == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(g.value(y)[1] == doctest::Approx(0.5).epsilon(1e-15));
    }
  }
  SUBCASE("matmul against the identity") {
    const NodeId a = g.input(Array(2, 2, {1, 2, 3, 4}));
    const NodeId eye = g.input(Array(2, 2, {1, 0, 0, 1}));
    const NodeId y = g.matmul(a, eye);
    CHECK(bitwise_equal(g.value(y), g.value(a)));
  }
}

TEST_CASE("shape errors name the op and shapes") {
  Graph g;
  const NodeId a = g.input(Array(2, 3));
  const NodeId b = g.input(Array(2, 3));
  CHECK_THROWS_WITH_AS(g.matmul(a, b),
                       "matmul: incompatible shapes 2x3 and 2x3", ShapeError);
  const NodeId c = g.input(Array(4, 2));
  CHECK_THROWS_AS(g.add(a, c), ShapeError);
  CHECK_THROWS_AS(g.mul(a, c), ShapeError);
  CHECK_THROWS_AS(g.concat({a, c}), ShapeError);
  CHECK_THROWS_AS(g.slice_cols(a, 2, 2), ShapeError);
  // Column broadcast is for mul only; add keeps the documented bias-row rule.
  const NodeId col = g.input(Array(2, 1));
  CHECK_THROWS_AS(g.add(a, col), ShapeError);
  CHECK_NOTHROW(g.mul(a, col));
}

TEST_CASE("backward: pinned scalar cases") {
  SUBCASE("d sigmoid(0) = 0.25") {
    Graph g;
    const NodeId x = g.input(Array::scalar(0.0));
    const NodeId y = g.sigmoid(x);
    g.backward(y);
    CHECK(g.grad(x)[0] == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("stop_gradient truncates exactly") {
    Graph g;
    const NodeId y = g.input(Array::row({0.3, -1.7, 2.2}));
    const NodeId w = g.input(Array::row({1.0, 2.0, 3.0}));
    const NodeId loss = g.mean(g.mul(g.stop_gradient(y), w));
    g.backward(loss);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(g.grad(y)[i] == 0.0);
      CHECK(g.grad(w)[i] != 0.0);
    }
    // Forward value passes through bitwise.
    const NodeId s = g.stop_gradient(y);
    CHECK(bitwise_equal(g.value(s), g.value(y)));
  }
  SUBCASE("non-scalar loss is rejected") {
    Graph g;
    const NodeId x = g.input(Array(2, 2));
    CHECK_THROWS_AS(g.backward(x), ContractError);
  }
  SUBCASE("unreachable nodes keep zero grad") {
    Graph g;
    const NodeId x = g.input(Array::scalar(1.5));
    const NodeId unrelated = g.sigmoid(g.input(Array::scalar(2.0)));
    const NodeId loss = g.mean(g.scale(x, 3.0));
    g.backward(loss);
    CHECK(g.grad(x)[0] == doctest::Approx(3.0));
    CHECK(g.grad(unrelated)[0] == 0.0);
  }
}

TEST_CASE("bce loss: pinned values and validation") {
  Graph g;
  SUBCASE("p=0.5, y=1 gives ln 2") {
    const NodeId loss = g.bce(g.input(Array::scalar(0.5)), Array::scalar(1.0));
    CHECK(g.value(loss)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("perfect prediction is (almost) free") {
    const NodeId loss =
        g.bce(g.input(Array::scalar(1.0 - 1e-7)), Array::scalar(1.0));
    CHECK(g.value(loss)[0] < 1e-6);
  }
  SUBCASE("two-sample batch is averaged") {
    const NodeId pred = g.input(Array::column({0.9, 0.2}));
    const NodeId loss = g.bce(pred, Array::column({1.0, 0.0}));
    const double expected = 0.5 * (-std::log(0.9) - std::log(0.8));
    CHECK(g.value(loss)[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(g.value(loss)[0] == doctest::Approx(0.1643).epsilon(1e-3));
  }
  SUBCASE("labels outside {0,1} are rejected") {
    const NodeId pred = g.input(Array::scalar(0.5));
    CHECK_THROWS_AS(g.bce(pred, Array::scalar(0.5)), ValueError);
  }
  SUBCASE("clamping keeps saturated predictions finite") {
    const NodeId loss = g.bce(g.input(Array::scalar(1.0)), Array::scalar(0.0));
    CHECK(std::isfinite(g.value(loss)[0]));
    CHECK(g.value(loss)[0] == doctest::Approx(-std::log(1e-7)).epsilon(1e-6));
  }
}

TEST_CASE("softmax rows are positive and sum to one") {
  Rng rng(42);
  Graph g;
  const NodeId y = g.softmax(g.input(random_array(17, 9, rng, -30.0, 30.0)));
  const Array& out = g.value(y);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) {
      CHECK(out.at(r, c) > 0.0);
      sum += out.at(r, c);
    }
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("gradients match central finite differences per primitive") {
  Rng rng(7);
  const double tol = 1e-4;

  SUBCASE("matmul") {
    const double err = max_gradient_error(
        {random_array(3, 4, rng), random_array(4, 2, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          return g.mean(g.matmul(in[0], in[1]));
        });
    CHECK(err < tol);
  }
  SUBCASE("add: same shape, scalar, bias row") {
    const double err = max_gradient_error(
        {random_array(3, 4, rng), random_array(3, 4, rng),
         Array::scalar(0.37), random_array(1, 4, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          return g.mean(g.add(g.add(g.add(in[0], in[1]), in[2]), in[3]));
        });
    CHECK(err < tol);
  }
  SUBCASE("mul: same shape, scalar, column") {
    const double err = max_gradient_error(
        {random_array(3, 4, rng), random_array(3, 4, rng),
         Array::scalar(-1.2), random_array(3, 1, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          return g.mean(g.mul(g.mul(g.mul(in[0], in[1]), in[2]), in[3]));
        });
    CHECK(err < tol);
  }
  SUBCASE("concat and slice") {
    const double err = max_gradient_error(
        {random_array(2, 3, rng), random_array(2, 2, rng),
         random_array(2, 4, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          const NodeId cat = g.concat({in[0], in[1], in[2]});
          return g.mean(g.slice_cols(cat, 2, 5));
        });
    CHECK(err < tol);
  }
  SUBCASE("relu away from the kink") {
    Array x = random_array(4, 4, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (std::fabs(x[i]) < 1e-3) x[i] = 0.25;
    }
    const double err = max_gradient_error(
        {x}, [](Graph& g, const std::vector<NodeId>& in) {
          return g.mean(g.relu(in[0]));
        });
    CHECK(err < tol);
  }
  SUBCASE("sigmoid") {
    const double err = max_gradient_error(
        {random_array(3, 3, rng, -4.0, 4.0)},
        [](Graph& g, const std::vector<NodeId>& in) {
          return g.mean(g.sigmoid(in[0]));
        });
    CHECK(err < tol);
  }
  SUBCASE("softmax (weighted so the gradient is nontrivial)") {
    const double err = max_gradient_error(
        {random_array(3, 5, rng, -2.0, 2.0), random_array(3, 5, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          return g.mean(g.mul(g.softmax(in[0]), in[1]));
        });
    CHECK(err < tol);
  }
  SUBCASE("scale and row_sum") {
    const double err = max_gradient_error(
        {random_array(4, 3, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          return g.mean(g.row_sum(g.scale(in[0], -2.5)));
        });
    CHECK(err < tol);
  }
  SUBCASE("gather_rows with repeated ids scatter-adds") {
    const double err = max_gradient_error(
        {random_array(5, 3, rng), random_array(4, 3, rng)},
        [](Graph& g, const std::vector<NodeId>& in) {
          const NodeId rows = g.gather_rows(in[0], {1, 3, 1, 0});
          return g.mean(g.mul(rows, in[1]));
        });
    CHECK(err < tol);
  }
  SUBCASE("bce through a sigmoid head") {
    const double err = max_gradient_error(
        {random_array(6, 1, rng, -2.0, 2.0)},
        [](Graph& g, const std::vector<NodeId>& in) {
          return g.bce(g.sigmoid(in[0]),
                       Array::column({1, 0, 0, 1, 1, 0}));
        });
    CHECK(err < tol);
  }
}

TEST_CASE("three-layer MLP gradients match finite differences") {
  Rng rng(2024);
  const Array x = random_array(2, 5, rng);
  const Array w1 = random_array(5, 7, rng);
  const Array b1 = random_array(1, 7, rng, -0.1, 0.1);
  const Array w2 = random_array(7, 4, rng);
  const Array b2 = random_array(1, 4, rng, -0.1, 0.1);
  const Array w3 = random_array(4, 1, rng);
  const Array b3 = random_array(1, 1, rng, -0.1, 0.1);
  const double err = max_gradient_error(
      {x, w1, b1, w2, b2, w3, b3},
      [](Graph& g, const std::vector<NodeId>& in) {
        NodeId h = g.relu(g.add(g.matmul(in[0], in[1]), in[2]));
        h = g.relu(g.add(g.matmul(h, in[3]), in[4]));
        const NodeId p = g.sigmoid(g.add(g.matmul(h, in[5]), in[6]));
        return g.bce(p, Array::column({1.0, 0.0}));
      });
  CHECK(err < 1e-4);
}

TEST_CASE("graph evaluation is bitwise deterministic") {
  Rng rng(11);
  const Array x = random_array(8, 6, rng);
  const Array w = random_array(6, 3, rng);
  auto run = [&]() {
    Graph g;
    const NodeId y =
        g.softmax(g.matmul(g.input(x), g.input(w)));
    return g.value(y);
  };
  CHECK(bitwise_equal(run(), run()));
}
