#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <optional>

#include "pimm/error.hpp"
#include "pimm/graph.hpp"
#include "pimm/layers.hpp"
#include "pimm/pim.hpp"
#include "pimm/rng.hpp"

using namespace pimm;

namespace {

bool bitwise_equal(const Array& a, const Array& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data().data(), b.data().data(),
                     a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("sampling probability follows the linear-with-floor schedule") {
  SUBCASE("public-data setting") {
    const ScheduleConfig cfg{0.5, 0.25, 0.25};
    CHECK(sampling_probability(cfg, 0) == 0.5);
    CHECK(sampling_probability(cfg, 1) == 0.25);
    CHECK(sampling_probability(cfg, 5) == 0.25);
  }
  SUBCASE("industrial setting reaches zero at epoch 2") {
    const ScheduleConfig cfg{2.0 / 3.0, 1.0 / 3.0, 0.0};
    CHECK(sampling_probability(cfg, 0) == 2.0 / 3.0);
    CHECK(sampling_probability(cfg, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(sampling_probability(cfg, 2) == 0.0);
    CHECK(sampling_probability(cfg, 7) == 0.0);
  }
  SUBCASE("beta == alpha pins the probability") {
    const ScheduleConfig cfg{0.4, 0.1, 0.4};
    for (std::size_t e = 0; e < 20; ++e) {
      CHECK(sampling_probability(cfg, e) == 0.4);
    }
  }
  SUBCASE("grid: exact agreement with the closed form, monotone, floored") {
    std::size_t combos = 0;
    for (double alpha : {0.0, 0.2, 0.5, 0.8, 1.0}) {
      for (double speed : {0.0, 0.05, 0.25, 0.4}) {
        for (double beta_frac : {0.0, 0.3, 0.6, 0.9, 1.0}) {
          const ScheduleConfig cfg{alpha, speed, alpha * beta_frac};
          cfg.validate();
          double prev = 2.0;
          for (std::size_t e = 0; e < 10; ++e) {
            const double p = sampling_probability(cfg, e);
            CHECK(p == std::max(alpha - static_cast<double>(e) * speed,
                                cfg.beta));
            CHECK(p >= cfg.beta);
            CHECK(p <= prev);
            prev = p;
            ++combos;
          }
        }
      }
    }
    CHECK(combos == 1000);
  }
  SUBCASE("config validation") {
    CHECK_THROWS_AS((ScheduleConfig{1.2, 0.1, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((ScheduleConfig{0.5, -0.1, 0.0}.validate()), ConfigError);
    CHECK_THROWS_AS((ScheduleConfig{0.5, 0.1, 0.7}.validate()), ConfigError);
  }
}

TEST_CASE("select_premise") {
  Rng rng(17);
  Graph g;
  const Array labels = Array::column({1, 0, 1, 1, 0});
  Array pred_values(5, 1);
  for (std::size_t i = 0; i < 5; ++i) pred_values[i] = 0.1 + 0.15 * double(i);
  const NodeId y_hat = g.input(pred_values);

  SUBCASE("p = 1 always picks the label") {
    const NodeId y_star =
        select_premise(g, labels, y_hat, 1.0, rng, Mode::kTrain);
    CHECK(bitwise_equal(g.value(y_star), labels));
  }
  SUBCASE("p = 0 always picks the prediction") {
    const NodeId y_star =
        select_premise(g, labels, y_hat, 0.0, rng, Mode::kTrain);
    CHECK(bitwise_equal(g.value(y_star), pred_values));
  }
  SUBCASE("p = 0.5 selection frequency over 1e5 draws") {
    Rng mc(12345);
    Graph big;
    Array y(100000, 1);
    Array p(100000, 1);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = (i % 3) == 0 ? 1.0 : 0.0;
      p[i] = 0.5;
    }
    SelectStats stats;
    select_premise(big, y, big.input(p), 0.5, mc, Mode::kTrain, &stats);
    CHECK(stats.total == 100000);
    const double fraction =
        static_cast<double>(stats.label_picks) / static_cast<double>(stats.total);
    CHECK(fraction > 0.49);
    CHECK(fraction < 0.51);
  }
  SUBCASE("infer mode ignores rng and labels") {
    Rng a(1), b(999);
    const NodeId via_a =
        select_premise(g, std::nullopt, y_hat, 0.7, a, Mode::kInfer);
    const NodeId via_b =
        select_premise(g, std::nullopt, y_hat, 0.7, b, Mode::kInfer);
    CHECK(bitwise_equal(g.value(via_a), g.value(via_b)));
    CHECK(bitwise_equal(g.value(via_a), pred_values));
  }
  SUBCASE("train mode without labels is a contract error") {
    CHECK_THROWS_AS(
        select_premise(g, std::nullopt, y_hat, 0.5, rng, Mode::kTrain),
        ContractError);
  }
  SUBCASE("result is gradient-isolated") {
    Graph iso;
    const NodeId pred = iso.sigmoid(iso.input(Array::column({0.3, -0.8})));
    const NodeId y_star = select_premise(iso, Array::column({1, 0}), pred, 0.5,
                                         rng, Mode::kTrain);
    const NodeId w = iso.input(Array(1, 3, {0.2, -0.4, 0.6}));
    const NodeId loss = iso.mean(iso.matmul(y_star, w));
    iso.backward(loss);
    const Array& dpred = iso.grad(pred);
    for (std::size_t i = 0; i < dpred.size(); ++i) {
      CHECK(dpred[i] == 0.0);
    }
  }
}

TEST_CASE("premise embedding Z = sigmoid(y* W)") {
  Rng rng(23);
  ParameterStore store;
  PremiseEmbedder embedder(store, "pe", 2, rng);

  SUBCASE("y* = 0 maps to 0.5 regardless of W") {
    Graph g;
    ParamBinding binding(g, store);
    const NodeId z =
        embedder.embed(g, binding, g.input(Array::column({0, 0, 0})));
    for (std::size_t i = 0; i < g.value(z).size(); ++i) {
      CHECK(g.value(z)[i] == 0.5);
    }
  }
  SUBCASE("y* = 1 with zero W maps to 0.5") {
    store.value(store.find("pe.w")) = Array(1, 2);
    Graph g;
    ParamBinding binding(g, store);
    const NodeId z = embedder.embed(g, binding, g.input(Array::column({1})));
    CHECK(g.value(z)[0] == 0.5);
    CHECK(g.value(z)[1] == 0.5);
  }
  SUBCASE("y* = 1 with W = [2, -2]") {
    store.value(store.find("pe.w")) = Array(1, 2, {2.0, -2.0});
    Graph g;
    ParamBinding binding(g, store);
    const NodeId z = embedder.embed(g, binding, g.input(Array::column({1})));
    CHECK(g.value(z)[0] == doctest::Approx(0.8808).epsilon(1e-4));
    CHECK(g.value(z)[1] == doctest::Approx(0.1192).epsilon(1e-4));
    CHECK(g.value(z)[0] ==
          doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  }
}

TEST_CASE("merge_messages adds elementwise") {
  Graph g;
  const NodeId z = g.input(Array(1, 2, {1, 2}));
  const NodeId h = g.input(Array(1, 2, {3, -1}));
  const NodeId zero = g.input(Array(1, 2));

  const NodeId merged = merge_messages(g, z, h);
  CHECK(g.value(merged)[0] == 4.0);
  CHECK(g.value(merged)[1] == 1.0);

  CHECK(bitwise_equal(g.value(merge_messages(g, zero, h)), g.value(h)));
  CHECK(bitwise_equal(g.value(merge_messages(g, z, zero)), g.value(z)));

  CHECK_THROWS_AS(merge_messages(g, z, g.input(Array(2, 2))), ShapeError);
}

TEST_CASE("gradient isolation: downstream loss vs upstream head") {
  // Upstream head parameters produce y_hat; downstream consumes it only
  // through the premise path. Whether y_hat or a same-valued constant is
  // fed must not change any gradient, and the upstream head must get none.
  Rng rng(29);
  ParameterStore store;
  PremiseEmbedder embedder(store, "pe", 3, rng);
  const ParamId head_w = store.add("head.w", glorot_uniform(3, 1, rng));
  const Array features(4, 3, {0.2, -0.5, 1.0, 0.7, 0.1, -0.3, -0.9, 0.4, 0.6,
                              0.05, -0.15, 0.35});
  const Array labels = Array::column({1, 0, 0, 1});

  auto run = [&](bool feed_constant) {
    Graph g;
    ParamBinding binding(g, store);
    const NodeId x = g.input(features);
    const NodeId y_hat = g.sigmoid(g.matmul(x, binding.node(head_w)));
    Rng draw(777);  // same seed: identical Bernoulli mask in both runs
    const NodeId premise_source =
        feed_constant ? g.input(g.value(y_hat)) : y_hat;
    const NodeId y_star = select_premise(g, labels, premise_source, 0.5, draw,
                                         Mode::kTrain);
    const NodeId z = embedder.embed(g, binding, y_star);
    const NodeId loss = g.mean(z);
    g.backward(loss);
    return std::pair<Array, Array>{binding.grad(head_w),
                                   binding.grad(store.find("pe.w"))};
  };

  const auto [head_grad_live, pe_grad_live] = run(false);
  const auto [head_grad_const, pe_grad_const] = run(true);
  for (std::size_t i = 0; i < head_grad_live.size(); ++i) {
    CHECK(head_grad_live[i] == 0.0);
    CHECK(head_grad_const[i] == 0.0);
  }
  CHECK(bitwise_equal(pe_grad_live, pe_grad_const));
}
